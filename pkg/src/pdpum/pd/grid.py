"""EMU lattice, horizon neighbor lists and boundary layers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from pdpum.geometry import Box, CrackPolyline, GeometryError, check_box

log = logging.getLogger(__name__)

EDGES = ("bottom", "top", "left", "right")


class GridError(ValueError):
    pass


@dataclass
class PDGrid:
    """Lattice nodes with volumes and CSR neighbor lists.

    ``offsets``/``neighbors`` hold the symmetric neighbor lists:
    the neighbors of node ``i`` are ``neighbors[offsets[i]:offsets[i+1]]``.
    """

    box: Box
    h: float
    shape: tuple[int, int]
    nodes: np.ndarray
    volumes: np.ndarray
    delta: float = 0.0
    crack: Optional[CrackPolyline] = None
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))
    neighbors: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int32))
    n_excluded: int = 0
    layers: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_bonds(self) -> int:
        """Number of directed bonds (each pair counted twice)."""
        return len(self.neighbors)

    def neighbors_of(self, i: int) -> np.ndarray:
        return self.neighbors[self.offsets[i]:self.offsets[i + 1]]

    def neighbor_counts(self) -> np.ndarray:
        return np.diff(self.offsets)


def build_grid(
    box: Box,
    h: float,
    delta: Optional[float] = None,
    crack: Optional[CrackPolyline] = None,
) -> PDGrid:
    """Lattice nodes including the corners of ``box``.

    Boundary-row volumes are halved and corner volumes quartered so that the
    volumes tile the box exactly.  If ``delta`` is given the neighbor lists
    are built right away.
    """
    try:
        box = check_box(box)
    except GeometryError as exc:
        raise GridError(str(exc)) from exc
    if not h > 0:
        raise GridError(f"node spacing must be positive, got {h}")
    lx, ly = box[2] - box[0], box[3] - box[1]
    if h > lx + 1e-12 or h > ly + 1e-12:
        raise GridError(f"node spacing {h} exceeds a box edge {lx}x{ly}")
    counts = []
    for length in (lx, ly):
        m = length / h
        k = int(round(m))
        if abs(m - k) > 1e-6 * max(1.0, m):
            raise GridError(f"spacing {h} does not divide edge length {length}")
        counts.append(k + 1)
    nx, ny = counts
    xs = box[0] + h * np.arange(nx)
    ys = box[1] + h * np.arange(ny)
    xs[-1], ys[-1] = box[2], box[3]
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    wx = np.full(nx, h)
    wy = np.full(ny, h)
    wx[[0, -1]] *= 0.5
    wy[[0, -1]] *= 0.5
    volumes = np.outer(wy, wx).ravel()
    grid = PDGrid(box=box, h=float(h), shape=(nx, ny), nodes=nodes, volumes=volumes, crack=crack)
    if delta is not None:
        grid.delta = float(delta)
        neighbor_lists(grid)
    return grid


# ---------------------------------------------------------------- kernels

@numba.njit(cache=True)
def _bond_cut(px, py, qx, qy, segs, tol):
    """Does bond p-q cross a crack segment?

    Nodes within ``tol`` of a segment line count as sitting on its + side, so
    a crack laid along a lattice row separates that row from the - side.
    """
    for s in range(segs.shape[0]):
        ax, ay, bx, by = segs[s, 0], segs[s, 1], segs[s, 2], segs[s, 3]
        dx, dy = bx - ax, by - ay
        ls = np.sqrt(dx * dx + dy * dy)
        op = (dx * (py - ay) - dy * (px - ax)) / ls
        oq = (dx * (qy - ay) - dy * (qx - ax)) / ls
        sp = 1.0 if op >= -tol else -1.0
        sq = 1.0 if oq >= -tol else -1.0
        if sp == sq:
            continue
        # crossing point of the bond line with the segment line, as a
        # fraction along the segment
        ex, ey = qx - px, qy - py
        den = dx * ey - dy * ex
        if den == 0.0:
            continue
        t = ((px - ax) * ey - (py - ay) * ex) / den
        tl = tol / ls
        if -tl <= t <= 1.0 + tl:
            return True
    return False


@numba.njit(cache=True)
def _binned_search(nodes, delta, x0, y0, ncx, ncy, cell_start, cell_nodes, segs, tol, counts, out, fill):
    d2 = delta * delta
    n = nodes.shape[0]
    excluded = 0
    for i in range(n):
        xi, yi = nodes[i, 0], nodes[i, 1]
        cx = min(int((xi - x0) / delta), ncx - 1)
        cy = min(int((yi - y0) / delta), ncy - 1)
        pos = 0
        if fill:
            pos = counts[i]
        c = 0
        for jy in range(max(cy - 1, 0), min(cy + 2, ncy)):
            for jx in range(max(cx - 1, 0), min(cx + 2, ncx)):
                cell = jy * ncx + jx
                for k in range(cell_start[cell], cell_start[cell + 1]):
                    j = cell_nodes[k]
                    if j == i:
                        continue
                    dx = nodes[j, 0] - xi
                    dy = nodes[j, 1] - yi
                    if dx * dx + dy * dy >= d2:
                        continue
                    if segs.shape[0] > 0 and _bond_cut(xi, yi, nodes[j, 0], nodes[j, 1], segs, tol):
                        excluded += 1
                        continue
                    if fill:
                        out[pos + c] = j
                    c += 1
        if not fill:
            counts[i] = c
    return excluded


@numba.njit(cache=True)
def _sort_rows(offsets, neighbors):
    for i in range(offsets.shape[0] - 1):
        neighbors[offsets[i]:offsets[i + 1]].sort()


def _crack_segments(crack: Optional[CrackPolyline]) -> np.ndarray:
    if crack is None:
        return np.zeros((0, 4))
    return np.ascontiguousarray(crack.segments.reshape(-1, 4))


def neighbor_lists(grid: PDGrid, delta: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Fill the grid's CSR neighbor lists by uniform cell binning.

    Pairs at distance exactly ``delta`` are not neighbors.  Bonds crossing
    the grid's initial crack are never formed.
    """
    if delta is not None:
        grid.delta = float(delta)
    delta = grid.delta
    if not delta > 0:
        raise GridError("horizon must be positive")
    nodes = np.ascontiguousarray(grid.nodes)
    n = len(nodes)
    x0, y0 = nodes.min(axis=0)
    x1, y1 = nodes.max(axis=0)
    ncx = max(1, int(np.floor((x1 - x0) / delta)) + 1)
    ncy = max(1, int(np.floor((y1 - y0) / delta)) + 1)
    cx = np.minimum(((nodes[:, 0] - x0) / delta).astype(np.int64), ncx - 1)
    cy = np.minimum(((nodes[:, 1] - y0) / delta).astype(np.int64), ncy - 1)
    cell = cy * ncx + cx
    order = np.argsort(cell, kind="stable").astype(np.int64)
    cell_start = np.searchsorted(cell[order], np.arange(ncx * ncy + 1)).astype(np.int64)
    segs = _crack_segments(grid.crack)
    tol = 1e-12 * grid.h
    counts = np.zeros(n, dtype=np.int64)
    dummy = np.zeros(0, dtype=np.int32)
    n_excl = _binned_search(nodes, delta, x0, y0, ncx, ncy, cell_start, order, segs, tol, counts, dummy, False)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    out = np.empty(offsets[-1], dtype=np.int32)
    _binned_search(nodes, delta, x0, y0, ncx, ncy, cell_start, order, segs, tol, offsets[:-1].copy(), out, True)
    _sort_rows(offsets, out)
    grid.offsets = offsets
    grid.neighbors = out
    grid.n_excluded = int(n_excl) // 2
    log.debug("neighbor lists: %d nodes, %d directed bonds, %d excluded pairs", n, len(out), grid.n_excluded)
    return offsets, out


def brute_force_neighbors(nodes: np.ndarray, delta: float, crack: Optional[CrackPolyline] = None, h: float = 1.0):
    """O(n^2) reference for :func:`neighbor_lists`; returns a list of sorted arrays."""
    segs = _crack_segments(crack)
    tol = 1e-12 * h
    result = []
    for i in range(len(nodes)):
        d = np.hypot(*(nodes - nodes[i]).T)
        cand = np.flatnonzero((d < delta) & (np.arange(len(nodes)) != i))
        if len(segs):
            cand = np.array(
                [j for j in cand if not _bond_cut(nodes[i, 0], nodes[i, 1], nodes[j, 0], nodes[j, 1], segs, tol)],
                dtype=np.int64,
            )
        result.append(np.sort(cand))
    return result


# ---------------------------------------------------------------- layers

def tag_boundary_layer(
    grid: PDGrid,
    edge: str,
    thickness: float,
    interval: Optional[tuple[float, float]] = None,
    name: Optional[str] = None,
) -> np.ndarray:
    """Indices of nodes in the closed band of given thickness along an edge.

    ``interval`` restricts the band to a sub-segment of the edge, given in
    the coordinate running along the edge.
    """
    if edge not in EDGES and edge != "all":
        raise GridError(f"unknown edge {edge!r}")
    x, y = grid.nodes[:, 0], grid.nodes[:, 1]
    x0, y0, x1, y1 = grid.box
    eps = 1e-9 * grid.h
    t = thickness + eps
    if edge == "all":
        mask = (x <= x0 + t) | (x >= x1 - t) | (y <= y0 + t) | (y >= y1 - t)
    else:
        along = x if edge in ("bottom", "top") else y
        if edge == "bottom":
            mask = y <= y0 + t
        elif edge == "top":
            mask = y >= y1 - t
        elif edge == "left":
            mask = x <= x0 + t
        else:
            mask = x >= x1 - t
        if interval is not None:
            lo, hi = interval
            mask &= (along >= lo - eps) & (along <= hi + eps)
    idx = np.flatnonzero(mask)
    if name is not None:
        grid.layers[name] = idx
    return idx


def edge_length(grid: PDGrid, edge: str, interval: Optional[tuple[float, float]] = None) -> float:
    x0, y0, x1, y1 = grid.box
    lo, hi = (x0, x1) if edge in ("bottom", "top") else (y0, y1)
    if interval is not None:
        lo, hi = max(lo, interval[0]), min(hi, interval[1])
    return max(hi - lo, 0.0)


def traction_force_density(t_bar, layer: np.ndarray, grid: PDGrid, length: float) -> np.ndarray:
    """Uniform body force density on ``layer`` equivalent to an edge traction.

    ``t_bar`` is the traction vector [N/m^2] acting on an edge piece of the
    given length, unit thickness.  The returned ``(n_nodes, 2)`` array
    satisfies ``sum(b[layer] * V[layer]) = t_bar * length``.
    """
    t_bar = np.broadcast_to(np.asarray(t_bar, dtype=float), (2,))
    b = np.zeros((grid.n_nodes, 2))
    vol = float(np.sum(grid.volumes[layer]))
    if vol <= 0:
        raise GridError("traction layer has zero volume")
    b[layer] = t_bar * length / vol
    return b
