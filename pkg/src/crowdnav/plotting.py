"""Static SVG renderings of training curves, trajectories and action-value
sweeps. Output is deterministic for a fixed input (fixed hash salt, no
timestamp metadata), which the golden-file checks rely on."""
from __future__ import annotations

import csv
import math

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "crowdnav"

import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigurationError
from .evaluation import read_trajectory

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def plot_returns(in_path, out_path, window: int = 500) -> None:
    """Per-episode returns with a rolling mean overlay."""
    episodes, returns = [], []
    with open(in_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["episode", "return"]:
            raise ConfigurationError(f"{in_path}:1: not a return-curve file")
        for lineno, row in enumerate(reader, start=2):
            try:
                episodes.append(int(row[0]))
                returns.append(float(row[1]))
            except (ValueError, IndexError) as exc:
                raise ConfigurationError(f"{in_path}:{lineno}: bad row") from exc
    if not episodes:
        raise ConfigurationError(f"{in_path}:2: no episodes to plot")

    returns_arr = np.array(returns)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(episodes, returns_arr, lw=0.3, alpha=0.4, color="steelblue",
            label="episode return")
    size = min(window, len(returns_arr))
    if size >= 2:
        kernel = np.ones(size) / size
        smooth = np.convolve(returns_arr, kernel, mode="valid")
        ax.plot(episodes[size - 1:], smooth, lw=1.8, color="crimson",
                label=f"rolling mean ({size})")
    ax.set_xlabel("episode")
    ax.set_ylabel("discounted return")
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_trajectory(in_path, out_path, agent_radius: float = 0.3) -> None:
    """Top-down view: one polyline per agent, circles to scale at sampled
    times, the robot highlighted."""
    rows = read_trajectory(in_path)
    agents: dict[int, dict] = {}
    for row in rows:
        entry = agents.setdefault(row["agent_id"], {"kind": row["kind"],
                                                    "xs": [], "ys": [], "ts": []})
        entry["xs"].append(row["x"])
        entry["ys"].append(row["y"])
        entry["ts"].append(row["t"])

    fig, ax = plt.subplots(figsize=(6, 6))
    cmap = plt.get_cmap("tab10")
    for agent_id in sorted(agents):
        entry = agents[agent_id]
        robot = entry["kind"] == "robot"
        color = "goldenrod" if robot else cmap(agent_id % 10)
        label = "robot" if robot else (f"pedestrian {agent_id}" if agent_id <= 3 else None)
        ax.plot(entry["xs"], entry["ys"], color=color,
                lw=2.0 if robot else 1.0, label=label, zorder=3 if robot else 2)
        samples = np.linspace(0, len(entry["xs"]) - 1, num=min(5, len(entry["xs"])),
                              dtype=int)
        for s in samples:
            circle = plt.Circle((entry["xs"][s], entry["ys"][s]), agent_radius,
                                fill=robot, facecolor=color if robot else "none",
                                edgecolor=color, alpha=0.5, lw=0.8)
            ax.add_patch(circle)
            ax.annotate(f"{entry['ts'][s]:.1f}", (entry["xs"][s], entry["ys"][s]),
                        fontsize=5, ha="center", va="center")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper right", fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_action_values(in_path, out_path) -> None:
    """Heat map of lookahead scores over the (linear speed, angular
    velocity) grid, best action marked."""
    speeds, omegas, scores = [], [], []
    with open(in_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["action_v", "action_w", "score"]:
            raise ConfigurationError(f"{in_path}:1: not an action-value file")
        for lineno, row in enumerate(reader, start=2):
            try:
                speeds.append(float(row[0]))
                omegas.append(float(row[1]))
                scores.append(float(row[2]))
            except (ValueError, IndexError) as exc:
                raise ConfigurationError(f"{in_path}:{lineno}: bad row") from exc
    if not scores:
        raise ConfigurationError(f"{in_path}:2: no actions to plot")

    speed_values = sorted(set(speeds))
    omega_values = sorted(set(omegas))
    grid = np.full((len(speed_values), len(omega_values)), math.nan)
    for v, w, s in zip(speeds, omegas, scores):
        grid[speed_values.index(v), omega_values.index(w)] = s

    fig, ax = plt.subplots(figsize=(8, 3.2))
    mesh = ax.pcolormesh(np.arange(len(omega_values) + 1),
                         np.arange(len(speed_values) + 1), grid,
                         cmap="viridis", shading="flat")
    best = int(np.nanargmax(np.array(scores)))
    ax.plot(omega_values.index(omegas[best]) + 0.5,
            speed_values.index(speeds[best]) + 0.5, "r*", ms=14,
            label="selected")
    ax.set_xticks(np.arange(len(omega_values)) + 0.5)
    ax.set_xticklabels([f"{w:.2f}" for w in omega_values], fontsize=6, rotation=45)
    ax.set_yticks(np.arange(len(speed_values)) + 0.5)
    ax.set_yticklabels([f"{v:.2f}" for v in speed_values], fontsize=7)
    ax.set_xlabel("angular velocity [rad/s]")
    ax.set_ylabel("linear speed [m/s]")
    fig.colorbar(mesh, ax=ax, label="lookahead score")
    ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_KWARGS)
    plt.close(fig)


_PLOTTERS = {
    "returns": plot_returns,
    "trajectory": plot_trajectory,
    "action_values": plot_action_values,
}


def plot(kind: str, in_path, out_path) -> None:
    """Dispatch on artifact kind: returns | trajectory | action_values."""
    if kind not in _PLOTTERS:
        raise ConfigurationError(
            f"unknown plot kind {kind!r}; choose from {', '.join(_PLOTTERS)}")
    _PLOTTERS[kind](in_path, out_path)
