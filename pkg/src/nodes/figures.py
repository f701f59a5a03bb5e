"""SVG figures for the run artifacts (matplotlib, Agg backend)."""

from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.loopspace import LoopCurve  # noqa: E402

plt.rcParams["svg.hashsalt"] = "loopopt"


def _closed(curve: LoopCurve) -> np.ndarray:
    return np.vstack([curve.points, curve.points[:1]])


def _overlay(ax, snapshots: Dict[int, LoopCurve], target: Optional[LoopCurve] = None):
    for k, curve in sorted(snapshots.items()):
        pts = _closed(curve)
        ax.plot(pts[:, 0], pts[:, 1], label=f"k = {k}")
    if target is not None:
        pts = _closed(target)
        ax.plot(pts[:, 0], pts[:, 1], "k--", label="minimizer")
    ax.set_aspect("equal")
    ax.legend(fontsize="small")


def descent_figure(
    snapshots: Dict[int, LoopCurve],
    iterations: Sequence[int],
    f_gap: Sequence[float],
    grad_norms: Sequence[float],
    target: Optional[LoopCurve] = None,
    title: str = "",
):
    """Left: iterate snapshots. Right: objective gap and gradient norm per iteration."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    _overlay(left, snapshots, target)
    left.set_title("iterates")
    right.plot(iterations, f_gap, "o-", label="f - f*")
    right.plot(iterations, grad_norms, "s-", label="gradient norm")
    right.set_yscale("log", nonpositive="mask")
    right.set_xlabel("iteration")
    right.legend()
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def flow_figure(snapshots: Dict[int, LoopCurve], iterations, lengths, ratios, title: str = ""):
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    _overlay(left, snapshots)
    left.set_title("frames")
    right.plot(iterations, lengths, label="length")
    right.plot(iterations, ratios, label="L^2 / (4 pi A)")
    right.set_xlabel("iteration")
    right.legend()
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def sequence_figure(k_values, curve_norms, gaps):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(k_values, curve_norms, "o-", label="|c_k|")
    ax.plot(k_values[1:], gaps, "s-", label="|grad_k - grad_{k-1}|")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("k")
    ax.legend()
    fig.tight_layout()
    return fig


def regularity_figure(modes, curve_mags, source_mags, grad_mags):
    fig, ax = plt.subplots(figsize=(6, 4))
    k = np.asarray(modes)[1:]
    ax.plot(k, np.asarray(curve_mags)[1:], label="curve")
    ax.plot(k, np.asarray(source_mags)[1:], label="source")
    ax.plot(k, np.asarray(grad_mags)[1:], label="H1 gradient")
    ax.set_xscale("log")
    ax.set_yscale("log", nonpositive="mask")
    ax.set_xlabel("mode")
    ax.legend()
    fig.tight_layout()
    return fig


def growth_figure(d_values, max_gamma):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(d_values, max_gamma, "o-")
    ax.set_xscale("log")
    ax.set_yscale("log", nonpositive="mask")
    ax.set_xlabel("d")
    ax.set_ylabel("max |Gamma(x0, e_n)|")
    fig.tight_layout()
    return fig
