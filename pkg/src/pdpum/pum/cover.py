"""Uniform cover, scaled patches and the flat-top Shepard partition of unity.

The cover lives on a cubic bounding box anchored at the lower-left corner of
the domain.  At level ``l`` the box is split into ``2^l x 2^l`` cells of
half-width ``h = width / 2^(l+1)``; patch ``(p, q)`` is its cell scaled by
``alpha`` about the cell center.  Weights are tensor products of the
quadratic B-spline with uniform knots at ``-1, -1/3, 1/3, 1`` in patch-local
coordinates, hence C1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from pdpum.geometry import Box, GeometryError, check_box


class CoverError(ValueError):
    pass


@dataclass(frozen=True)
class Cover:
    """Cells and patches of a uniform cover over ``domain``.

    Attributes:
        domain: the rectangle Omega.
        origin: lower-left corner of the cubic bounding box.
        width: edge length of the bounding box.
        level: subdivision level.
        alpha: patch stretch factor, ``1 < alpha < 2``.
        active: ``(n, n)`` flags, indexed ``[p, q]`` with ``p`` along x.
        patch_id: ``(n, n)`` running index of active patches, -1 otherwise.
    """

    domain: Box
    origin: tuple[float, float]
    width: float
    level: int
    alpha: float
    active: np.ndarray
    patch_id: np.ndarray

    @property
    def n(self) -> int:
        """Cells per direction."""
        return 2**self.level

    @property
    def h(self) -> float:
        """Cell half-width."""
        return self.width / 2 ** (self.level + 1)

    @property
    def cell_width(self) -> float:
        return 2.0 * self.h

    @property
    def patch_half_width(self) -> float:
        return self.alpha * self.h

    @property
    def n_cells(self) -> int:
        return self.n * self.n

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def index_of(self, pid: int) -> tuple[int, int]:
        p, q = np.argwhere(self.patch_id == pid)[0]
        return int(p), int(q)

    @property
    def active_index(self) -> np.ndarray:
        """``(n_active, 2)`` array of ``(p, q)`` in patch-id order."""
        pq = np.argwhere(self.patch_id >= 0)
        return pq[np.argsort(self.patch_id[pq[:, 0], pq[:, 1]])]

    def centers(self) -> np.ndarray:
        """Centers of the active patches in patch-id order."""
        pq = self.active_index
        return np.column_stack(
            [self.origin[0] + (pq[:, 0] + 0.5) * self.cell_width, self.origin[1] + (pq[:, 1] + 0.5) * self.cell_width]
        )

    def patch_box(self, pid: int) -> Box:
        c = self.centers()[pid]
        a = self.patch_half_width
        return (c[0] - a, c[1] - a, c[0] + a, c[1] + a)

    def cell_box(self, pid: int) -> Box:
        c = self.centers()[pid]
        h = self.h
        return (c[0] - h, c[1] - h, c[0] + h, c[1] + h)

    def summary(self) -> dict:
        return {
            "level": self.level,
            "h": self.h,
            "alpha": self.alpha,
            "patches": self.n_active,
            "cells": self.n_cells,
        }


def build_cover(domain: Box, level: int, alpha: float = 1.25) -> Cover:
    """Uniform cover of ``domain`` at the given level.

    Only patches whose open box meets the open domain are active.
    """
    try:
        domain = check_box(domain)
    except GeometryError as exc:
        raise CoverError(str(exc)) from exc
    if level < 0 or int(level) != level:
        raise CoverError(f"level must be a non-negative integer, got {level}")
    if not 1.0 < alpha < 2.0:
        raise CoverError(f"alpha must lie in (1, 2), got {alpha}")
    level = int(level)
    width = max(domain[2] - domain[0], domain[3] - domain[1])
    n = 2**level
    h = width / 2 ** (level + 1)
    a = alpha * h
    c = (np.arange(n) + 0.5) * 2 * h
    cx = domain[0] + c
    cy = domain[1] + c
    ax = (cx - a < domain[2]) & (cx + a > domain[0])
    ay = (cy - a < domain[3]) & (cy + a > domain[1])
    active = np.outer(ax, ay)
    pid = np.full((n, n), -1, dtype=np.int64)
    # patch ids run along x fastest
    pq = np.argwhere(active.T)[:, ::-1]
    pid[pq[:, 0], pq[:, 1]] = np.arange(len(pq))
    return Cover(domain, (domain[0], domain[1]), float(width), level, float(alpha), active, pid)


# ------------------------------------------------------------------ kernels

@numba.njit(cache=True, inline="always")
def bspline2(t):
    """Quadratic B-spline on ``[-1, 1]`` with knots at +-1/3 and its derivative."""
    if t <= -1.0 or t >= 1.0:
        return 0.0, 0.0
    u = 1.5 * (t + 1.0)
    if u < 1.0:
        return 0.5 * u * u, 1.5 * u
    if u < 2.0:
        return 0.5 * (-2.0 * u * u + 6.0 * u - 3.0), 1.5 * (-2.0 * u + 3.0)
    v = 3.0 - u
    return 0.5 * v * v, -1.5 * v


@numba.njit(cache=True)
def covering_patches(x, y, ox, oy, cw, n, a, pid, out, pq):
    """Active patches whose open box contains ``(x, y)``; returns their count.

    ``out`` receives up to 4 patch ids ordered by ``(q, p)``, ``pq`` their
    cell indices.
    """
    p0 = int(math.floor((x - ox) / cw))
    q0 = int(math.floor((y - oy) / cw))
    m = 0
    for q in range(q0 - 1, q0 + 2):
        if q < 0 or q >= n:
            continue
        if abs(y - (oy + (q + 0.5) * cw)) >= a:
            continue
        for p in range(p0 - 1, p0 + 2):
            if p < 0 or p >= n:
                continue
            if abs(x - (ox + (p + 0.5) * cw)) >= a:
                continue
            k = pid[p, q]
            if k >= 0 and m < 4:
                out[m] = k
                pq[m, 0] = p
                pq[m, 1] = q
                m += 1
    return m


@numba.njit(cache=True)
def shepard_at(x, y, ox, oy, cw, n, a, pid, ids, phi, dphi):
    """Shepard values and gradients at one point; returns the patch count."""
    pq = np.empty((4, 2), dtype=np.int64)
    m = covering_patches(x, y, ox, oy, cw, n, a, pid, ids, pq)
    w = np.empty(4)
    gx = np.empty(4)
    gy = np.empty(4)
    s = 0.0
    sx = 0.0
    sy = 0.0
    for k in range(m):
        cx = ox + (pq[k, 0] + 0.5) * cw
        cy = oy + (pq[k, 1] + 0.5) * cw
        bx, dbx = bspline2((x - cx) / a)
        by, dby = bspline2((y - cy) / a)
        w[k] = bx * by
        gx[k] = dbx * by / a
        gy[k] = bx * dby / a
        s += w[k]
        sx += gx[k]
        sy += gy[k]
    for k in range(m):
        phi[k] = w[k] / s
        dphi[k, 0] = (gx[k] * s - w[k] * sx) / (s * s)
        dphi[k, 1] = (gy[k] * s - w[k] * sy) / (s * s)
    return m


@numba.njit(cache=True)
def _shepard_many(X, ox, oy, cw, n, a, pid, ids, phi, dphi, count):
    idb = np.empty(4, dtype=np.int64)
    pb = np.empty(4)
    db = np.empty((4, 2))
    for i in range(X.shape[0]):
        m = shepard_at(X[i, 0], X[i, 1], ox, oy, cw, n, a, pid, idb, pb, db)
        count[i] = m
        for k in range(m):
            ids[i, k] = idb[k]
            phi[i, k] = pb[k]
            dphi[i, k, 0] = db[k, 0]
            dphi[i, k, 1] = db[k, 1]


def kernel_args(cover: Cover):
    """Scalars and arrays describing ``cover`` for the compiled kernels."""
    return (
        float(cover.origin[0]),
        float(cover.origin[1]),
        float(cover.cell_width),
        int(cover.n),
        float(cover.patch_half_width),
        np.ascontiguousarray(cover.patch_id),
    )


def shepard_values(cover: Cover, x):
    """Shepard PU values at points ``x``.

    Returns ``(ids, phi, dphi)`` padded to 4 columns: ``ids`` holds patch
    ids (-1 for unused slots), ``phi`` the values and ``dphi`` the gradients.

    Raises:
        CoverError: if a point lies in no active patch.
    """
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    m = len(X)
    ids = np.full((m, 4), -1, dtype=np.int64)
    phi = np.zeros((m, 4))
    dphi = np.zeros((m, 4, 2))
    count = np.zeros(m, dtype=np.int64)
    _shepard_many(X, *kernel_args(cover), ids, phi, dphi, count)
    if np.any(count == 0):
        bad = X[np.flatnonzero(count == 0)[0]]
        raise CoverError(f"point {bad.tolist()} lies in no active patch")
    return ids, phi, dphi


def flat_top_region(cover: Cover, pid: int) -> Box:
    """Box around patch ``pid``'s center where only that patch is non-zero."""
    c = cover.centers()[pid]
    r = (2.0 - cover.alpha) * cover.h
    return (c[0] - r, c[1] - r, c[0] + r, c[1] + r)
