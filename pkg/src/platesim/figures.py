"""Matplotlib renderings of run artifacts, written as PNG files.

Figures accompany the delimited output of every CLI report path. All of
them draw from the same deterministic data as the text artifacts and use
the Agg backend with pinned metadata, so repeated runs with the same
seed write byte-identical images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import BoundaryNorm, ListedColormap

from .depthio import DepthMap, SegMask
from .planner import PlanResult
from .report import MetricsRecorder

__all__ = [
    "depth_figure",
    "mask_figure",
    "candidates_figure",
    "metrics_figure",
]

_SAVE_KW = dict(dpi=110, metadata={"Software": "platesim"})


def _finish(fig, path) -> None:
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def _extent_mm(pitch: float, width: int, height: int) -> list[float]:
    return [0.0, 1e3 * pitch * width, 0.0, 1e3 * pitch * height]


def depth_figure(depth: DepthMap, path, title: str = "depth") -> None:
    """Heightfield as a heatmap, axes in millimetres."""
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    im = ax.imshow(
        1e3 * depth.values,
        origin="lower",
        cmap="viridis",
        extent=_extent_mm(depth.pixel_pitch, depth.width, depth.height),
    )
    fig.colorbar(im, ax=ax, label="height (mm)")
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("z (mm)")
    ax.set_title(title)
    fig.tight_layout()
    _finish(fig, path)


def mask_figure(mask: SegMask, pixel_pitch: float, path, title: str = "item masks") -> None:
    """Segmentation labels with one flat color per item, 0 = background."""
    labels = np.unique(mask.labels)
    # stable palette: background grey, then tab10 by label order
    palette = ["#e8e8e8"] + [plt.get_cmap("tab10")(i % 10) for i in range(len(labels))]
    bounds = np.concatenate([labels.astype(float) - 0.5, [labels[-1] + 0.5]])
    cmap = ListedColormap(palette[: len(labels)])
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    im = ax.imshow(
        mask.labels,
        origin="lower",
        cmap=cmap,
        norm=BoundaryNorm(bounds, cmap.N),
        extent=_extent_mm(pixel_pitch, mask.width, mask.height),
        interpolation="nearest",
    )
    cbar = fig.colorbar(im, ax=ax, ticks=labels)
    cbar.set_label("item id")
    ax.set_xlabel("x (mm)")
    ax.set_ylabel("z (mm)")
    ax.set_title(title)
    fig.tight_layout()
    _finish(fig, path)


def candidates_figure(result: PlanResult, threshold: float, path) -> None:
    """Bar chart: direct best next to every candidate's post estimate."""
    labels = ["direct"]
    values = [result.best_direct]
    colors = ["#888888"]
    chosen = result.chosen_action.label if result.chosen_action else None
    for cand in result.candidates:
        labels.append(cand.spec.label)
        values.append(cand.post_best if cand.feasible else 0.0)
        if not cand.feasible:
            colors.append("#d9d9d9")
        elif cand.spec.label == chosen:
            colors.append("#2a9d2a")
        else:
            colors.append("#4878a8")
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.bar(range(len(values)), values, color=colors)
    ax.axhline(threshold, color="#b03030", linewidth=1.0, linestyle="--",
               label=f"threshold {threshold:g}")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("best success estimate")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(f"plan: {result.rationale}")
    ax.legend(loc="upper right")
    fig.tight_layout()
    _finish(fig, path)


def metrics_figure(recorder: MetricsRecorder, path) -> None:
    """Conservation curves over a rollout: mass, momentum, energy, COM."""
    rows = recorder.rows
    if not rows:
        raise ValueError("metrics recorder holds no samples")
    t = np.array([float(r["t"]) for r in rows])
    mass = np.array([float(r["mass"]) for r in rows])
    mom = np.array(
        [[float(r[f"momentum_{k}"]) for k in "xyz"] for r in rows]
    )
    ke = np.array([float(r["kinetic_energy"]) for r in rows])
    com = np.array([[float(r[f"com_{k}"]) for k in "xyz"] for r in rows])

    fig, axes = plt.subplots(2, 2, figsize=(8.4, 5.6), sharex=True)
    axes[0, 0].plot(t, 1e3 * mass, color="#4878a8")
    axes[0, 0].set_ylabel("mass (g)")
    for k, name in enumerate("xyz"):
        axes[0, 1].plot(t, 1e3 * mom[:, k], label=name)
    axes[0, 1].set_ylabel("momentum (g m/s)")
    axes[0, 1].legend(loc="best", fontsize=8)
    axes[1, 0].plot(t, 1e3 * ke, color="#2a9d2a")
    axes[1, 0].set_ylabel("kinetic energy (mJ)")
    axes[1, 0].set_xlabel("t (s)")
    for k, name in enumerate("xyz"):
        axes[1, 1].plot(t, 1e3 * com[:, k], label=name)
    axes[1, 1].set_ylabel("COM (mm)")
    axes[1, 1].set_xlabel("t (s)")
    axes[1, 1].legend(loc="best", fontsize=8)
    fig.tight_layout()
    _finish(fig, path)
