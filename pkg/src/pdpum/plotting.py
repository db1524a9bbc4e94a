"""Report figures (matplotlib, file output only)."""

from __future__ import annotations

import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from pdpum.geometry import CrackPolyline  # noqa: E402


def _save(fig, path: str) -> str:
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def _draw_crack(ax, crack: Optional[CrackPolyline], **kw):
    if crack is not None:
        p = crack.points
        ax.plot(p[:, 0], p[:, 1], color=kw.pop("color", "k"), lw=kw.pop("lw", 1.5), **kw)


def field_figure(path: str, points: np.ndarray, u: np.ndarray, shape: tuple[int, int], title: str, crack: Optional[CrackPolyline] = None) -> str:
    """Displacement magnitude on a lattice of ``shape = (nx, ny)`` points."""
    nx, ny = shape
    mag = np.hypot(u[:, 0], u[:, 1]).reshape(ny, nx)
    x = points[:, 0].reshape(ny, nx)
    y = points[:, 1].reshape(ny, nx)
    fig, ax = plt.subplots(figsize=(6, 6 * (y.max() - y.min()) / max(x.max() - x.min(), 1e-300) + 1.0))
    pc = ax.pcolormesh(x, y, mag, shading="auto", cmap="viridis")
    fig.colorbar(pc, ax=ax, label="|u| [m]")
    _draw_crack(ax, crack, color="w")
    ax.set_aspect("equal")
    ax.set_title(f"{title}: max |u| = {mag.max():.4e} m")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    return _save(fig, path)


def scatter_figure(path: str, nodes: np.ndarray, values: np.ndarray, title: str, label: str, crack: Optional[CrackPolyline] = None, vmax=None) -> str:
    fig, ax = plt.subplots(figsize=(6, 5))
    ms = max(0.5, 4000.0 / max(len(nodes), 1))
    sc = ax.scatter(nodes[:, 0], nodes[:, 1], c=values, s=ms, marker="s", linewidths=0, cmap="viridis", vmax=vmax)
    fig.colorbar(sc, ax=ax, label=label)
    _draw_crack(ax, crack, color="r", lw=1.0)
    ax.set_aspect("equal")
    ax.set_title(title)
    return _save(fig, path)


def pd_figures(out: str, tag: str, grid, final, index: Sequence) -> list[str]:
    """Displacement magnitude, damage and the U_max / damage history of a PD run."""
    files = [
        scatter_figure(os.path.join(out, f"{tag}_displacement.png"), grid.nodes, np.hypot(final.u[:, 0], final.u[:, 1]), f"PD |u|, max {final.u_max:.4e} m", "|u| [m]", grid.crack),
        scatter_figure(os.path.join(out, f"{tag}_damage.png"), grid.nodes, final.damage, f"PD damage, max {final.max_damage:.3f}", "d", grid.crack),
    ]
    if len(index) > 1:
        rows = np.asarray(index, dtype=float)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(rows[:, 1], rows[:, 2], "b-")
        ax.set_xlabel("t [s]")
        ax.set_ylabel("U_max [m]", color="b")
        ax2 = ax.twinx()
        ax2.plot(rows[:, 1], rows[:, 3], "r--")
        ax2.set_ylabel("max damage", color="r")
        ax.set_title("PD history")
        files.append(_save(fig, os.path.join(out, f"{tag}_history.png")))
    return files


def crack_figure(path: str, domain, initial: CrackPolyline, left: Sequence, right: Sequence) -> str:
    """Initial crack and the two extracted tip branches."""
    fig, ax = plt.subplots(figsize=(5, 5))
    _draw_crack(ax, initial, color="k", lw=2.0, label="initial crack")
    for seq, color, name in ((left, "tab:blue", "left branch"), (right, "tab:red", "right branch")):
        if len(seq):
            p = np.asarray(seq)
            ax.plot(p[:, 0], p[:, 1], "o-", color=color, ms=3, label=name)
    ax.set_xlim(domain[0], domain[2])
    ax.set_ylim(domain[1], domain[3])
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("extracted crack path")
    return _save(fig, path)
