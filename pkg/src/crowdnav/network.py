"""Attention-augmented crowd value network with exact analytic gradients.

Per pedestrian, the T history frames (each ``5 + K`` features: position,
velocity, radius, angular grid code) pass through:

1. an embedding MLP ``F -> 150 -> 100`` (ReLU throughout) giving per-frame
   embeddings;
2. an interaction MLP ``100 -> 150 -> 50`` giving per-frame interaction
   features;
3. a scoring MLP ``150 -> 100 -> 100 -> 1`` (linear scalar head) applied to
   each frame's embedding concatenated with the mean interaction feature
   over the window;
4. a softmax over the T scores, pooling the interaction features into one
   50-vector per pedestrian.

An LSTM (input 50, hidden 50) then scans the pedestrian summaries in order
of descending distance to the robot (nearest last, ties kept in original
order), so the final hidden state is dominated by the most relevant agent;
an empty crowd yields a zero hidden state. The value head
``59 -> 150 -> 100 -> 100 -> 1`` maps the robot's 9 raw world-frame features
concatenated with the crowd hidden state to a scalar value.

Everything is float64 numpy. `forward_batch`/`backward_batch` operate on
stacked inputs with a uniform pedestrian count; the reverse pass is exact
reverse-mode differentiation with the ReLU subgradient at 0 taken as 0.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigurationError

EMBED_HIDDEN = 150
EMBED_OUT = 100
INTERACT_HIDDEN = 150
INTERACT_OUT = 50
ATTN_HIDDEN = 100
LSTM_HIDDEN = 50
HEAD_HIDDEN = (150, 100, 100)
ROBOT_FEATURES = 9

_MAGIC = b"APGVNET1"
_VERSION = 1


def _schema(sectors: int) -> list[tuple[str, tuple[int, ...], int]]:
    """(name, shape, fan_in) for every parameter array, in declaration
    (= checkpoint) order."""
    frame = 5 + sectors
    attn_in = EMBED_OUT + INTERACT_OUT
    head_in = ROBOT_FEATURES + LSTM_HIDDEN
    entries = [
        ("embed.W1", (EMBED_HIDDEN, frame), frame),
        ("embed.b1", (EMBED_HIDDEN,), frame),
        ("embed.W2", (EMBED_OUT, EMBED_HIDDEN), EMBED_HIDDEN),
        ("embed.b2", (EMBED_OUT,), EMBED_HIDDEN),
        ("interact.W1", (INTERACT_HIDDEN, EMBED_OUT), EMBED_OUT),
        ("interact.b1", (INTERACT_HIDDEN,), EMBED_OUT),
        ("interact.W2", (INTERACT_OUT, INTERACT_HIDDEN), INTERACT_HIDDEN),
        ("interact.b2", (INTERACT_OUT,), INTERACT_HIDDEN),
        ("attention.W1", (ATTN_HIDDEN, attn_in), attn_in),
        ("attention.b1", (ATTN_HIDDEN,), attn_in),
        ("attention.W2", (ATTN_HIDDEN, ATTN_HIDDEN), ATTN_HIDDEN),
        ("attention.b2", (ATTN_HIDDEN,), ATTN_HIDDEN),
        ("attention.W3", (1, ATTN_HIDDEN), ATTN_HIDDEN),
        ("attention.b3", (1,), ATTN_HIDDEN),
        ("lstm.Wx", (4 * LSTM_HIDDEN, INTERACT_OUT), LSTM_HIDDEN),
        ("lstm.Wh", (4 * LSTM_HIDDEN, LSTM_HIDDEN), LSTM_HIDDEN),
        ("lstm.b", (4 * LSTM_HIDDEN,), LSTM_HIDDEN),
        ("value.W1", (HEAD_HIDDEN[0], head_in), head_in),
        ("value.b1", (HEAD_HIDDEN[0],), head_in),
        ("value.W2", (HEAD_HIDDEN[1], HEAD_HIDDEN[0]), HEAD_HIDDEN[0]),
        ("value.b2", (HEAD_HIDDEN[1],), HEAD_HIDDEN[0]),
        ("value.W3", (HEAD_HIDDEN[2], HEAD_HIDDEN[1]), HEAD_HIDDEN[1]),
        ("value.b3", (HEAD_HIDDEN[2],), HEAD_HIDDEN[1]),
        ("value.W4", (1, HEAD_HIDDEN[2]), HEAD_HIDDEN[2]),
        ("value.b4", (1,), HEAD_HIDDEN[2]),
    ]
    return entries


class NetworkParams:
    """All learnable weights as one flat float64 vector with named views.

    The flat layout makes SGD updates and gradient containers one-liners;
    `views` maps array names to reshaped slices of `data` (no copies).
    """

    def __init__(self, sectors: int, history_len: int,
                 data: np.ndarray | None = None, dtype=np.float64):
        self.sectors = sectors
        self.history_len = history_len
        self.schema = _schema(sectors)
        self.size = sum(int(np.prod(shape)) for _, shape, _ in self.schema)
        if data is None:
            data = np.zeros(self.size, dtype=dtype)
        if data.shape != (self.size,):
            raise ConfigurationError(
                f"parameter vector has {data.shape}, expected ({self.size},)")
        self.data = data
        self.views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape, _ in self.schema:
            count = int(np.prod(shape))
            self.views[name] = self.data[offset:offset + count].reshape(shape)
            offset += count

    def __getitem__(self, name: str) -> np.ndarray:
        return self.views[name]

    def __setitem__(self, name: str, value) -> None:
        self.views[name][...] = value

    @property
    def frame_width(self) -> int:
        return 5 + self.sectors

    @classmethod
    def init(cls, sectors: int, history_len: int,
             rng: np.random.Generator) -> "NetworkParams":
        """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per array."""
        params = cls(sectors, history_len)
        for name, _, fan_in in params.schema:
            bound = 1.0 / np.sqrt(fan_in)
            view = params.views[name]
            view[...] = rng.uniform(-bound, bound, size=view.shape)
        return params

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.sectors, self.history_len, self.data.copy())

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.sectors, self.history_len, dtype=self.data.dtype)

    def astype(self, dtype) -> "NetworkParams":
        """Compute-precision variant (training may run float32); checkpoints
        are always written as float64."""
        return NetworkParams(self.sectors, self.history_len,
                             self.data.astype(dtype, copy=True))

    # -- checkpoint format: magic, version, K, T, per-array name+shape table,
    #    then all values as little-endian float64 in declaration order.

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<III", _VERSION, self.sectors, self.history_len))
            fh.write(struct.pack("<I", len(self.schema)))
            for name, shape, _ in self.schema:
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<B", len(shape)))
                fh.write(struct.pack(f"<{len(shape)}I", *shape))
            fh.write(np.ascontiguousarray(self.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "NetworkParams":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:8] != _MAGIC:
            raise ConfigurationError(f"{path}: not a checkpoint (bad magic)")
        version, sectors, history_len = struct.unpack_from("<III", blob, 8)
        if version != _VERSION:
            raise ConfigurationError(f"{path}: unsupported format version {version}")
        (n_arrays,) = struct.unpack_from("<I", blob, 20)
        offset = 24
        found = []
        for _ in range(n_arrays):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            found.append((name, tuple(shape)))
        expected = [(name, shape) for name, shape, _ in _schema(sectors)]
        if found != expected:
            raise ConfigurationError(
                f"{path}: layer shapes do not match this build; "
                f"declared {found}, expected {expected}")
        data = np.frombuffer(blob, dtype="<f8", offset=offset).astype(np.float64)
        return cls(sectors, history_len, data)

    def describe(self) -> str:
        lines = [f"format version {_VERSION}, sectors={self.sectors}, "
                 f"history_len={self.history_len}, parameters={self.size}"]
        for name, shape, _ in self.schema:
            lines.append(f"  {name}: {shape}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Elementary pieces (also exposed for targeted tests)

def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def embed_frame(features: np.ndarray, params: NetworkParams) -> np.ndarray:
    """Per-frame embedding; accepts (F,) or (M, F)."""
    x = np.atleast_2d(features)
    if x.shape[1] != params.frame_width:
        raise ConfigurationError(
            f"frame has {x.shape[1]} features, expected {params.frame_width}")
    h = _relu(x @ params["embed.W1"].T + params["embed.b1"])
    out = _relu(h @ params["embed.W2"].T + params["embed.b2"])
    return out[0] if features.ndim == 1 else out


def interaction_features(embeddings: np.ndarray, params: NetworkParams) -> np.ndarray:
    """Per-frame interaction features; accepts (100,) or (M, 100)."""
    x = np.atleast_2d(embeddings)
    h = _relu(x @ params["interact.W1"].T + params["interact.b1"])
    out = _relu(h @ params["interact.W2"].T + params["interact.b2"])
    return out[0] if embeddings.ndim == 1 else out


def attention_scores(embeddings: np.ndarray, interactions: np.ndarray,
                     params: NetworkParams) -> np.ndarray:
    """Raw (pre-softmax) per-frame scores for one pedestrian's window.

    Each frame's embedding is concatenated with the window-mean interaction
    feature and scored by the attention MLP (linear scalar output).
    """
    if len(embeddings) != len(interactions):
        raise ConfigurationError("embedding and interaction lists differ in length")
    pooled = interactions.mean(axis=0)
    x = np.concatenate([embeddings, np.tile(pooled, (len(embeddings), 1))], axis=1)
    h = _relu(x @ params["attention.W1"].T + params["attention.b1"])
    h = _relu(h @ params["attention.W2"].T + params["attention.b2"])
    return (h @ params["attention.W3"].T + params["attention.b3"])[:, 0]


def temporal_pool(interactions: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Softmax-weighted sum of interaction features over the window."""
    if len(interactions) != len(scores):
        raise ConfigurationError("feature and score lists differ in length")
    shifted = scores - scores.max()
    weights = np.exp(shifted)
    weights /= weights.sum()
    return weights @ interactions


def aggregate_crowd(summaries: np.ndarray, params: NetworkParams) -> np.ndarray:
    """LSTM scan over pedestrian summaries (already ordered); zero state for
    an empty crowd."""
    h = np.zeros(LSTM_HIDDEN)
    c = np.zeros(LSTM_HIDDEN)
    wx, wh, b = params["lstm.Wx"], params["lstm.Wh"], params["lstm.b"]
    for x in np.atleast_2d(summaries) if len(summaries) else []:
        gates = wx @ x + wh @ h + b
        i = _sigmoid(gates[0:50])
        f = _sigmoid(gates[50:100])
        g = np.tanh(gates[100:150])
        o = _sigmoid(gates[150:200])
        c = f * c + i * g
        h = o * np.tanh(c)
    return h


# ---------------------------------------------------------------------------
# Full batched pass

def crowd_summaries(frames: np.ndarray, params: NetworkParams) -> np.ndarray:
    """Pedestrian summaries (N, 50) for one scene's frame window (N, T, F).
    Order-free: each pedestrian is summarized independently."""
    n, t, width = frames.shape
    dtype = params.data.dtype
    if n == 0:
        return np.zeros((0, INTERACT_OUT), dtype=dtype)
    flat = np.asarray(frames, dtype=dtype).reshape(n * t, width)
    em = embed_frame(flat, params).reshape(n, t, EMBED_OUT)
    ek = interaction_features(em.reshape(n * t, EMBED_OUT), params).reshape(n, t, INTERACT_OUT)
    ea = ek.mean(axis=1)
    concat = np.concatenate(
        [em, np.broadcast_to(ea[:, None, :], (n, t, INTERACT_OUT))], axis=2)
    h = _relu(concat.reshape(n * t, -1) @ params["attention.W1"].T + params["attention.b1"])
    h = _relu(h @ params["attention.W2"].T + params["attention.b2"])
    scores = (h @ params["attention.W3"].T + params["attention.b3"]).reshape(n, t)
    shifted = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    weights /= weights.sum(axis=1, keepdims=True)
    return np.einsum("nt,ntf->nf", weights, ek)


def _lstm_scan(inputs: np.ndarray, params: NetworkParams,
               want_cache: bool) -> tuple[np.ndarray, list | None]:
    """Batched scan over axis 1 of `inputs` (B, N, 50); returns final hidden
    state (B, 50) and the per-step cache for the reverse pass."""
    batch, n, _ = inputs.shape
    dtype = params.data.dtype
    h = np.zeros((batch, LSTM_HIDDEN), dtype=dtype)
    c = np.zeros((batch, LSTM_HIDDEN), dtype=dtype)
    wx, wh, b = params["lstm.Wx"], params["lstm.Wh"], params["lstm.b"]
    cache = [] if want_cache else None
    for step_idx in range(n):
        x = inputs[:, step_idx, :]
        gates = x @ wx.T + h @ wh.T + b
        i = _sigmoid(gates[:, 0:50])
        f = _sigmoid(gates[:, 50:100])
        g = np.tanh(gates[:, 100:150])
        o = _sigmoid(gates[:, 150:200])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        if want_cache:
            cache.append((x, h, c, i, f, g, o, tc))
        h, c = h_new, c_new
    return h, cache


def forward_batch(robot: np.ndarray, frames: np.ndarray | None,
                  params: NetworkParams,
                  want_cache: bool = False) -> tuple[np.ndarray, dict | None]:
    """Values (B,) for a batch of states sharing one pedestrian count.

    `robot` is (B, 9); `frames` is (B, N, T, F) with pedestrians already
    ordered for the LSTM (descending distance, nearest last), or None/N==0
    for an empty crowd.
    """
    dtype = params.data.dtype
    robot = np.asarray(robot, dtype=dtype)
    batch = robot.shape[0]
    cache: dict = {"robot": robot} if want_cache else None
    if frames is None or frames.shape[1] == 0:
        crowd = np.zeros((batch, LSTM_HIDDEN), dtype=dtype)
        lstm_cache = None
        if want_cache:
            cache.update(frames=None, lstm=None)
    else:
        frames = np.asarray(frames, dtype=dtype)
        b, n, t, width = frames.shape
        flat = frames.reshape(b * n * t, width)
        z1 = flat @ params["embed.W1"].T + params["embed.b1"]
        a1 = _relu(z1)
        z2 = a1 @ params["embed.W2"].T + params["embed.b2"]
        em = _relu(z2)
        z3 = em @ params["interact.W1"].T + params["interact.b1"]
        a3 = _relu(z3)
        z4 = a3 @ params["interact.W2"].T + params["interact.b2"]
        ek = _relu(z4)
        ek4 = ek.reshape(b, n, t, INTERACT_OUT)
        ea = ek4.mean(axis=2)
        concat = np.concatenate(
            [em.reshape(b, n, t, EMBED_OUT),
             np.broadcast_to(ea[:, :, None, :], (b, n, t, INTERACT_OUT))],
            axis=3).reshape(b * n * t, EMBED_OUT + INTERACT_OUT)
        z5 = concat @ params["attention.W1"].T + params["attention.b1"]
        a5 = _relu(z5)
        z6 = a5 @ params["attention.W2"].T + params["attention.b2"]
        a6 = _relu(z6)
        scores = (a6 @ params["attention.W3"].T + params["attention.b3"]).reshape(b, n, t)
        shifted = scores - scores.max(axis=2, keepdims=True)
        weights = np.exp(shifted)
        weights /= weights.sum(axis=2, keepdims=True)
        pooled = np.einsum("bnt,bntf->bnf", weights, ek4)
        crowd, lstm_cache = _lstm_scan(pooled, params, want_cache)
        if want_cache:
            cache.update(frames=frames, flat=flat, z1=z1, a1=a1, z2=z2, em=em,
                         z3=z3, a3=a3, z4=z4, ek4=ek4, concat=concat, z5=z5,
                         a5=a5, z6=z6, a6=a6, weights=weights, lstm=lstm_cache)

    head_in = np.concatenate([robot, crowd], axis=1)
    z7 = head_in @ params["value.W1"].T + params["value.b1"]
    a7 = _relu(z7)
    z8 = a7 @ params["value.W2"].T + params["value.b2"]
    a8 = _relu(z8)
    z9 = a8 @ params["value.W3"].T + params["value.b3"]
    a9 = _relu(z9)
    values = (a9 @ params["value.W4"].T + params["value.b4"])[:, 0]
    if want_cache:
        cache.update(head_in=head_in, z7=z7, a7=a7, z8=z8, a8=a8, z9=z9, a9=a9)
    return values, cache


def backward_batch(params: NetworkParams, cache: dict,
                   upstream: np.ndarray) -> NetworkParams:
    """Exact gradients of ``sum_b upstream[b] * V_b`` w.r.t. every parameter.
    `upstream` is (B,)."""
    grads = params.zeros_like()
    dv = np.asarray(upstream, dtype=params.data.dtype)[:, None]

    grads["value.W4"][...] = dv.T @ cache["a9"]
    grads["value.b4"][...] = dv.sum(axis=0)
    da9 = dv @ params["value.W4"]
    dz9 = da9 * (cache["z9"] > 0.0)
    grads["value.W3"][...] = dz9.T @ cache["a8"]
    grads["value.b3"][...] = dz9.sum(axis=0)
    da8 = dz9 @ params["value.W3"]
    dz8 = da8 * (cache["z8"] > 0.0)
    grads["value.W2"][...] = dz8.T @ cache["a7"]
    grads["value.b2"][...] = dz8.sum(axis=0)
    da7 = dz8 @ params["value.W2"]
    dz7 = da7 * (cache["z7"] > 0.0)
    grads["value.W1"][...] = dz7.T @ cache["head_in"]
    grads["value.b1"][...] = dz7.sum(axis=0)
    dhead = dz7 @ params["value.W1"]
    dcrowd = dhead[:, ROBOT_FEATURES:]

    if cache["frames"] is None:
        return grads

    frames = cache["frames"]
    b, n, t, _ = frames.shape
    lstm_cache = cache["lstm"]
    wx, wh = params["lstm.Wx"], params["lstm.Wh"]
    dpooled = np.empty((b, n, INTERACT_OUT), dtype=params.data.dtype)
    dh = dcrowd
    dc = np.zeros_like(dh)
    for step_idx in range(n - 1, -1, -1):
        x, h_prev, c_prev, i, f, g, o, tc = lstm_cache[step_idx]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dgates = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f),
             dg * (1.0 - g * g), do * o * (1.0 - o)], axis=1)
        grads["lstm.Wx"] += dgates.T @ x
        grads["lstm.Wh"] += dgates.T @ h_prev
        grads["lstm.b"] += dgates.sum(axis=0)
        dpooled[:, step_idx, :] = dgates @ wx
        dh = dgates @ wh
        dc = dc * f

    ek4 = cache["ek4"]
    weights = cache["weights"]
    dweights = np.einsum("bnf,bntf->bnt", dpooled, ek4)
    dek4 = weights[:, :, :, None] * dpooled[:, :, None, :]
    dscores = weights * (dweights - (weights * dweights).sum(axis=2, keepdims=True))
    dscores_flat = dscores.reshape(b * n * t, 1)

    grads["attention.W3"][...] = dscores_flat.T @ cache["a6"]
    grads["attention.b3"][...] = dscores_flat.sum(axis=0)
    da6 = dscores_flat @ params["attention.W3"]
    dz6 = da6 * (cache["z6"] > 0.0)
    grads["attention.W2"][...] = dz6.T @ cache["a5"]
    grads["attention.b2"][...] = dz6.sum(axis=0)
    da5 = dz6 @ params["attention.W2"]
    dz5 = da5 * (cache["z5"] > 0.0)
    grads["attention.W1"][...] = dz5.T @ cache["concat"]
    grads["attention.b1"][...] = dz5.sum(axis=0)
    dconcat = (dz5 @ params["attention.W1"]).reshape(b, n, t, -1)
    dem_attn = dconcat[:, :, :, :EMBED_OUT]
    dek4 += dconcat[:, :, :, EMBED_OUT:].sum(axis=2, keepdims=True) / t

    dek = dek4.reshape(b * n * t, INTERACT_OUT)
    dz4 = dek * (cache["z4"] > 0.0)
    grads["interact.W2"][...] = dz4.T @ cache["a3"]
    grads["interact.b2"][...] = dz4.sum(axis=0)
    da3 = dz4 @ params["interact.W2"]
    dz3 = da3 * (cache["z3"] > 0.0)
    grads["interact.W1"][...] = dz3.T @ cache["em"]
    grads["interact.b1"][...] = dz3.sum(axis=0)
    dem = dz3 @ params["interact.W1"] + dem_attn.reshape(b * n * t, EMBED_OUT)

    dz2 = dem * (cache["z2"] > 0.0)
    grads["embed.W2"][...] = dz2.T @ cache["a1"]
    grads["embed.b2"][...] = dz2.sum(axis=0)
    da1 = dz2 @ params["embed.W2"]
    dz1 = da1 * (cache["z1"] > 0.0)
    grads["embed.W1"][...] = dz1.T @ cache["flat"]
    grads["embed.b1"][...] = dz1.sum(axis=0)
    return grads


def value_from_summaries(robot: np.ndarray, summaries: np.ndarray,
                         params: NetworkParams) -> np.ndarray:
    """Fast head-only evaluation for action lookahead: `summaries` is
    (B, N, 50), already ordered per batch row."""
    dtype = params.data.dtype
    robot = np.asarray(robot, dtype=dtype)
    if summaries.shape[1] == 0:
        crowd = np.zeros((robot.shape[0], LSTM_HIDDEN), dtype=dtype)
    else:
        crowd, _ = _lstm_scan(np.asarray(summaries, dtype=dtype), params,
                              want_cache=False)
    head_in = np.concatenate([robot, crowd], axis=1)
    a = _relu(head_in @ params["value.W1"].T + params["value.b1"])
    a = _relu(a @ params["value.W2"].T + params["value.b2"])
    a = _relu(a @ params["value.W3"].T + params["value.b3"])
    return (a @ params["value.W4"].T + params["value.b4"])[:, 0]


# ---------------------------------------------------------------------------
# State assembly and the single-state API

def lstm_order(joint_state) -> np.ndarray:
    """Pedestrian indices by descending distance to the robot; equidistant
    pedestrians keep their original relative order (stable sort)."""
    robot = joint_state.robot
    distances = np.array([robot.position.distance_to(p.position)
                          for p in joint_state.pedestrians])
    return np.argsort(-distances, kind="stable")


def assemble_input(joint_state, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(robot 9-vector, LSTM-ordered frames) for one state."""
    return joint_state.robot.features(), frames[lstm_order(joint_state)]


def value_forward(joint_state, history, params: NetworkParams) -> float:
    """Scalar value of one joint state given its observation history
    (an `ObservationHistory` or a raw (N, T, F) window)."""
    frames = history.frames if hasattr(history, "frames") else history
    robot, ordered = assemble_input(joint_state, frames)
    values, _ = forward_batch(robot[None, :], ordered[None, ...], params)
    return float(values[0])


def value_backward(joint_state, history, params: NetworkParams,
                   upstream: float = 1.0) -> NetworkParams:
    """Exact gradient of ``upstream * V`` for one state, shaped like the
    parameter vector."""
    frames = history.frames if hasattr(history, "frames") else history
    robot, ordered = assemble_input(joint_state, frames)
    _, cache = forward_batch(robot[None, :], ordered[None, ...], params,
                             want_cache=True)
    return backward_batch(params, cache, np.array([upstream]))
