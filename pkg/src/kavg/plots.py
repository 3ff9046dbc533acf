"""Figure rendering for the report path.

Each experiment's CSV has a companion PNG drawn from the same rows.  The
figures are conveniences for eyeballing a run; the CSV stays the canonical,
byte-stable output.
"""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .experiments import normal_cdf


def _finish(fig, ax, path) -> None:
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_trajectory_plot(rows: Sequence[dict], path, title: str = "") -> None:
    """T(l) and S(l) decay on a log scale."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ls = [row["l"] for row in rows]
    for key, label in (("t_l1", "T(l)"), ("s_l2", "S(l)")):
        ys = [float(row[key]) for row in rows]
        ax.plot(ls, ys, marker=".", markersize=3, linewidth=1, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("step l")
    ax.set_ylabel("distance from consensus")
    if title:
        ax.set_title(title)
    ax.legend()
    _finish(fig, ax, path)


def save_theta_plot(rows: Sequence[dict], path) -> None:
    """Mean T against theta, one line per (n, k)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series: dict[tuple[int, int], list[dict]] = {}
    for row in rows:
        series.setdefault((row["n"], row["k"]), []).append(row)
    for (n, k), pts in series.items():
        pts = sorted(pts, key=lambda p: p["theta"])
        xs = [p["theta"] for p in pts]
        ys = [p["mean_T"] for p in pts]
        es = [1.96 * p["stderr"] for p in pts]
        ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=f"n={n}, k={k}")
    ax.set_xlabel("theta  (steps = floor(theta n ln n))")
    ax.set_ylabel("mean T")
    ax.set_title("L1 deviation at theta n ln n steps")
    ax.legend()
    _finish(fig, ax, path)


def save_mixing_plot(rows: Sequence[dict], path) -> None:
    """Median hitting time against n, one line per (k, epsilon)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series: dict[tuple[int, float], list[dict]] = {}
    for row in rows:
        series.setdefault((row["k"], row["epsilon"]), []).append(row)
    for (k, eps), pts in series.items():
        pts = sorted(pts, key=lambda p: p["n"])
        xs = [p["n"] for p in pts]
        ys = [p["median_hit"] for p in pts]
        ax.plot(xs, ys, marker="o", label=f"k={k}, eps={eps:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("median steps to T <= eps")
    ax.set_title("Hitting time of the L1 threshold")
    ax.legend()
    _finish(fig, ax, path)


def save_cutoff_plot(rows: Sequence[dict], path) -> None:
    """Profile mean T against a, with the 2 Phi(-a) reference curve."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series: dict[tuple[int, int], list[dict]] = {}
    for row in rows:
        if row["flag"] == "ok":
            series.setdefault((row["n"], row["k"]), []).append(row)
    a_all = [row["a"] for row in rows]
    if a_all:
        grid = [min(a_all) + i * (max(a_all) - min(a_all)) / 200 for i in range(201)]
        ax.plot(grid, [2 * normal_cdf(-a) for a in grid], "k--", linewidth=1,
                label="2 Phi(-a)")
    for (n, k), pts in series.items():
        pts = sorted(pts, key=lambda p: p["a"])
        xs = [p["a"] for p in pts]
        ys = [p["mean_T"] for p in pts]
        es = [1.96 * p["stderr"] for p in pts]
        ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=f"n={n}, k={k}")
    ax.set_xlabel("a  (window position)")
    ax.set_ylabel("mean T")
    ax.set_title("Cutoff profile of the L1 deviation")
    ax.legend()
    _finish(fig, ax, path)


def save_poisson_plot(rows: Sequence[dict], path) -> None:
    """Mean S at time t against the exponential-decay prediction."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series: dict[tuple[int, int], list[dict]] = {}
    for row in rows:
        series.setdefault((row["n"], row["k"]), []).append(row)
    for (n, k), pts in series.items():
        pts = sorted(pts, key=lambda p: p["t"])
        xs = [p["t"] for p in pts]
        ax.plot(xs, [p["predicted_S"] for p in pts], "k--", linewidth=1,
                label=f"exp decay n={n}, k={k}")
        es = [1.96 * p["stderr"] for p in pts]
        ax.errorbar(xs, [p["mean_S"] for p in pts], yerr=es, marker="o",
                    capsize=3, linestyle="none", label=f"simulated n={n}, k={k}")
    positive = [p["mean_S"] for p in rows if p["mean_S"] > 0]
    if positive and min(positive) > 0:
        ax.set_yscale("log")
    ax.set_xlabel("time t")
    ax.set_ylabel("mean S")
    ax.set_title("Poissonized chain: L2 energy decay")
    ax.legend()
    _finish(fig, ax, path)
