"""Figure rendering for command-line reports.

Kept out of the library modules on purpose: the core emits data-level
artifacts (JSON, CSV, PGM) and stays free of plotting dependencies; only
the batch front door renders figures, always through the Agg backend so
runs work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["heatmap_png", "history_png"]


def heatmap_png(matrix, path, title: str = "", xlabel: str = "", ylabel: str = "") -> None:
    """Render a 2-d matrix as a labeled heatmap with a colorbar."""
    matrix = np.asarray(matrix, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    image = ax.imshow(matrix, origin="lower", cmap="viridis", aspect="auto")
    fig.colorbar(image, ax=ax, shrink=0.9)
    if title:
        ax.set_title(title)
    if xlabel:
        ax.set_xlabel(xlabel)
    if ylabel:
        ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def history_png(values, path, title: str = "", ylabel: str = "residual") -> None:
    """Render an iteration history on a log scale."""
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.semilogy(np.arange(values.size), np.maximum(values, 1e-300), marker="o")
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
