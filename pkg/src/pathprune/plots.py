"""Matplotlib figures rendered to files alongside the delimited reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .grid import FREE, GridScene
from .masking import reduction_pct

DPI = 150


def save_scene_figure(
    scene: GridScene,
    out_path: str | Path,
    probs: np.ndarray | None = None,
    region: np.ndarray | None = None,
    paths: dict[str, list[tuple[int, int]]] | None = None,
    title: str = "",
) -> Path:
    """Scene occupancy with optional probability heatmap, region overlay, and
    planner paths."""
    panels = 1 + (probs is not None)
    fig, axes = plt.subplots(1, panels, figsize=(5.2 * panels, 5), squeeze=False)
    ax = axes[0, 0]
    ax.imshow(scene.cells != FREE, cmap="gray_r", interpolation="nearest")
    if region is not None:
        overlay = np.zeros((*region.shape, 4))
        overlay[region.astype(bool)] = (0.2, 0.5, 1.0, 0.35)
        ax.imshow(overlay, interpolation="nearest")
    for label, cells in (paths or {}).items():
        if cells:
            rows = [r for r, _ in cells]
            cols = [c for _, c in cells]
            ax.plot(cols, rows, linewidth=2.0, label=label)
    ax.scatter([scene.start[1]], [scene.start[0]], c="red", marker="*", s=140, label="start")
    ax.scatter([scene.goal[1]], [scene.goal[0]], c="green", marker="*", s=140, label="goal")
    ax.set_title(title or f"{scene.family} seed={scene.seed}")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_xticks([])
    ax.set_yticks([])
    if probs is not None:
        ax2 = axes[0, 1]
        im = ax2.imshow(probs, cmap="viridis", vmin=0, vmax=1, interpolation="nearest")
        ax2.set_title("region probabilities")
        ax2.set_xticks([])
        ax2.set_yticks([])
        fig.colorbar(im, ax=ax2, fraction=0.046)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
    return out_path


def save_reduction_histogram(rows, out_path: str | Path) -> Path:
    reductions = [reduction_pct(r.full_expansions, r.masked_expansions) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(reductions, bins=30, color="#1f77b4", edgecolor="black", linewidth=0.4)
    ax.axvline(float(np.mean(reductions)), color="red", linestyle="--",
               label=f"mean {np.mean(reductions):.1f}%")
    ax.set_xlabel("expansion reduction per scene (%)")
    ax.set_ylabel("scenes")
    ax.set_title("masked vs full-grid node expansions")
    ax.legend()
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
    return out_path


def save_expansion_scatter(rows, out_path: str | Path) -> Path:
    full = [r.full_expansions for r in rows]
    masked = [r.masked_expansions for r in rows]
    fallback = [r.used_fallback for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    colors = ["#d62728" if fb else "#2ca02c" for fb in fallback]
    ax.scatter(full, masked, s=14, c=colors, alpha=0.7)
    lim = max(max(full), max(masked)) * 1.05
    ax.plot([0, lim], [0, lim], color="gray", linestyle=":", linewidth=1)
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)
    ax.set_xlabel("full-grid expansions")
    ax.set_ylabel("masked pipeline expansions")
    ax.set_title("paired runs (red = fallback)")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
    return out_path


def save_grouped_bars(
    groups: list[str],
    series: dict[str, list[float]],
    out_path: str | Path,
    ylabel: str,
    title: str,
    ylim: tuple[float, float] | None = None,
) -> Path:
    fig, ax = plt.subplots(figsize=(6.5, 4))
    x = np.arange(len(groups), dtype=float)
    width = 0.8 / max(1, len(series))
    for i, (name, values) in enumerate(series.items()):
        ax.bar(x + i * width, values, width=width, label=name)
    ax.set_xticks(x + width * (len(series) - 1) / 2)
    ax.set_xticklabels(groups)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if ylim:
        ax.set_ylim(*ylim)
    ax.legend()
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
    return out_path
