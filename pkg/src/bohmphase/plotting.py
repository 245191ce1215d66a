"""Matplotlib figures for field files, retrieval reports and residual scans.

Everything renders off-screen (Agg) straight to a file.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIG_SIZE = (6.4, 4.0)
DPI = 110


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def field_figure(grid, values: np.ndarray, path, label: str = "value", title: str = "") -> None:
    """x-t heat map of a real field with a few slices underneath."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(FIG_SIZE[0], 1.6 * FIG_SIZE[1]))
    im = top.imshow(
        values,
        origin="lower",
        aspect="auto",
        extent=(grid.x_min, grid.x_max, grid.t_min, grid.t_max),
        cmap="viridis",
    )
    fig.colorbar(im, ax=top, label=label)
    top.set_xlabel("x")
    top.set_ylabel("t")
    if title:
        top.set_title(title)
    for k in np.unique(np.linspace(0, grid.nt - 1, 5).astype(int)):
        bottom.plot(grid.x, values[k], lw=1.0, label=f"t={grid.t[k]:.3g}")
    bottom.set_xlabel("x")
    bottom.set_ylabel(label)
    bottom.legend(fontsize="small", frameon=False)
    _save(fig, path)


def report_figure(t, theta, gauge, path, spread=None) -> None:
    """Theta(t) and the gauge f(t) (with its spread band when given)."""
    fig, (a, b) = plt.subplots(2, 1, sharex=True, figsize=FIG_SIZE)
    a.plot(t, theta, lw=1.2)
    a.set_ylabel(r"$\Theta(t)$")
    b.plot(t, gauge, lw=1.2, color="C1")
    if spread is not None:
        b.fill_between(t, gauge - spread, gauge + spread, color="C1", alpha=0.25, lw=0)
    b.set_ylabel("f(t)")
    b.set_xlabel("t")
    _save(fig, path)


def scan_figure(values, objectives, path, axis: str = "parameter", tolerance: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.semilogy(values, objectives, "o-", ms=4)
    if tolerance is not None:
        ax.axhline(tolerance, color="0.5", ls="--", lw=1.0, label="hj tolerance")
        ax.legend(frameon=False)
    ax.set_xlabel(axis)
    ax.set_ylabel("relative HJ residual")
    _save(fig, path)
