"""Local approximation spaces: linear polynomials plus crack enrichments.

Every active patch carries ``{1, xi, eta}`` in patch-local scaled
coordinates.  Patches cut by the crack add ``H * {1, xi, eta}``; patches
near an interior tip instead add the four branch functions of that tip.
The raw functions are then stabilized by a Gram-matrix eigen-decomposition.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from pdpum.geometry import CrackPolyline, TipFrame, point_in_box
from pdpum.pum.cover import Cover, bspline2, covering_patches, kernel_args
from pdpum.pum.quadrature import Quadrature

log = logging.getLogger(__name__)

PLAIN, HEAVISIDE, TIP = 0, 1, 2
TAG_NAMES = {PLAIN: "plain", HEAVISIDE: "heaviside", TIP: "tip"}
EPS_STAB = 1e-10
MAX_RAW = 14


class SpaceError(RuntimeError):
    pass


# ---------------------------------------------------------------- enrichments

def heaviside_enrichment(crack: CrackPolyline, x) -> np.ndarray:
    """Side of the crack, +1 on the left of its direction and -1 on the right."""
    return crack.side(x)


def tip_enrichment(frame: TipFrame, x, side=None):
    """Near-tip branch functions and their gradients.

    With ``r, theta`` polar coordinates about the tip, ``theta`` measured
    from the tip tangent, the functions are ``sqrt(r) * {sin(t/2), cos(t/2),
    sin(t/2) sin t, cos(t/2) sin t}``.  If ``side`` is given (one value per
    point, in the tip frame's sense) the sign of ``theta`` is taken from it,
    so the branch cut follows a curved crack instead of the backward ray.

    Returns:
        ``(F, dF)`` of shapes ``(m, 4)`` and ``(m, 4, 2)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = x - frame.point
    a = d @ frame.tangent
    b = d @ frame.normal
    r = np.hypot(a, b)
    if np.any(r == 0):
        raise SpaceError("branch functions are singular at the tip")
    th = np.arctan2(b, a)
    dth = (a[:, None] * frame.normal[None] - b[:, None] * frame.tangent[None]) / (r * r)[:, None]
    if side is not None:
        side = np.broadcast_to(np.asarray(side, dtype=float), th.shape)
        flip = (np.sign(th) != 0) & (np.sign(th) != side)
        th = np.where(flip, -th, th)
        dth = np.where(flip[:, None], -dth, dth)
    sr = np.sqrt(r)
    dsr = 0.5 / sr[:, None] * d / r[:, None]
    s2, c2, s1, c1 = np.sin(th / 2), np.cos(th / 2), np.sin(th), np.cos(th)
    F = np.column_stack([sr * s2, sr * c2, sr * s2 * s1, sr * c2 * s1])
    dF = np.empty((len(x), 4, 2))
    g = [
        (s2, 0.5 * c2),
        (c2, -0.5 * s2),
        (s2 * s1, 0.5 * c2 * s1 + s2 * c1),
        (c2 * s1, -0.5 * s2 * s1 + c2 * c1),
    ]
    for k, (val, dval) in enumerate(g):
        dF[:, k] = dsr * val[:, None] + (sr * dval)[:, None] * dth
    return F, dF


@dataclass
class EnrichmentAssignment:
    """Per-patch tag and, for tip patches, the tip indices (-1 padded)."""

    tags: np.ndarray
    tip_ids: np.ndarray
    tip_radius: float
    enriched_tips: tuple[int, ...] = ()

    def count(self, tag: int) -> int:
        return int(np.sum(self.tags == tag))

    def rows(self):
        return [(i, TAG_NAMES[int(t)]) for i, t in enumerate(self.tags)]


def interior_tips(crack: CrackPolyline, domain, tol: float) -> list[int]:
    """Indices (0 = first point, 1 = last) of tips strictly inside ``domain``."""
    out = []
    shrunk = (domain[0] + tol, domain[1] + tol, domain[2] - tol, domain[3] - tol)
    for k, t in enumerate(crack.tips):
        if point_in_box(t, shrunk)[0]:
            out.append(k)
    return out


def select_enrichments(cover: Cover, crack: Optional[CrackPolyline], tip_radius: Optional[float] = None) -> EnrichmentAssignment:
    """Tag patches plain, heaviside or tip.

    Tip patches have their center within ``tip_radius`` (default two cell
    widths) of an interior tip.  Tips on the domain boundary are not
    enriched.  The remaining patches whose open box meets the crack get the
    Heaviside tag.
    """
    n = cover.n_active
    tags = np.zeros(n, dtype=np.int64)
    tip_ids = np.full((n, 2), -1, dtype=np.int64)
    if tip_radius is None:
        tip_radius = 2.0 * cover.cell_width
    if crack is None:
        return EnrichmentAssignment(tags, tip_ids, tip_radius)
    centers = cover.centers()
    tips = interior_tips(crack, cover.domain, 1e-12 * cover.width)
    for k in tips:
        t = crack.tips[k]
        near = np.hypot(*(centers - t).T) < tip_radius
        for i in np.flatnonzero(near):
            tags[i] = TIP
            slot = 0 if tip_ids[i, 0] < 0 else 1
            tip_ids[i, slot] = k
    a = cover.patch_half_width
    for i in np.flatnonzero(tags == PLAIN):
        c = centers[i]
        if crack.intersects_box((c[0] - a, c[1] - a, c[0] + a, c[1] + a), strict=True):
            tags[i] = HEAVISIDE
    return EnrichmentAssignment(tags, tip_ids, float(tip_radius), tuple(tips))


# ------------------------------------------------------------ raw functions

@numba.njit(cache=True)
def raw_functions(x, y, H, cx, cy, a, has_h, tip0, tip1, tips, f, df):
    """Raw local functions of one patch at ``(x, y)``; returns their count.

    ``tips`` rows are ``(px, py, tx, ty, sense)`` where ``sense`` converts
    the crack side ``H`` into the sign of the tip angle.
    """
    xi = (x - cx) / a
    eta = (y - cy) / a
    ia = 1.0 / a
    f[0] = 1.0
    df[0, 0] = 0.0
    df[0, 1] = 0.0
    f[1] = xi
    df[1, 0] = ia
    df[1, 1] = 0.0
    f[2] = eta
    df[2, 0] = 0.0
    df[2, 1] = ia
    m = 3
    if has_h:
        f[3] = H
        df[3, 0] = 0.0
        df[3, 1] = 0.0
        f[4] = H * xi
        df[4, 0] = H * ia
        df[4, 1] = 0.0
        f[5] = H * eta
        df[5, 0] = 0.0
        df[5, 1] = H * ia
        m = 6
    for slot in range(2):
        k = tip0 if slot == 0 else tip1
        if k < 0:
            continue
        px, py, tx, ty, sense = tips[k, 0], tips[k, 1], tips[k, 2], tips[k, 3], tips[k, 4]
        nx, ny = -ty, tx
        dx, dy = x - px, y - py
        at = dx * tx + dy * ty
        bn = dx * nx + dy * ny
        r = math.sqrt(dx * dx + dy * dy)
        if r == 0.0:
            # value is 0 at the tip, gradient is singular: report 0
            for j in range(4):
                f[m] = 0.0
                df[m, 0] = 0.0
                df[m, 1] = 0.0
                m += 1
            continue
        th = math.atan2(bn, at)
        gthx = (at * nx - bn * tx) / (r * r)
        gthy = (at * ny - bn * ty) / (r * r)
        want = H * sense
        if th != 0.0 and want != 0.0 and (th > 0.0) != (want > 0.0):
            th = -th
            gthx = -gthx
            gthy = -gthy
        rs = r * ia
        sr = math.sqrt(rs)
        dsrx = 0.5 / sr * ia * dx / r
        dsry = 0.5 / sr * ia * dy / r
        s2 = math.sin(0.5 * th)
        c2 = math.cos(0.5 * th)
        s1 = math.sin(th)
        c1 = math.cos(th)
        vals = (s2, c2, s2 * s1, c2 * s1)
        dvals = (0.5 * c2, -0.5 * s2, 0.5 * c2 * s1 + s2 * c1, -0.5 * s2 * s1 + c2 * c1)
        for j in range(4):
            f[m] = sr * vals[j]
            df[m, 0] = dsrx * vals[j] + sr * dvals[j] * gthx
            df[m, 1] = dsry * vals[j] + sr * dvals[j] * gthy
            m += 1
    return m


@numba.njit(cache=True)
def basis_at(x, y, H, ox, oy, cw, n, a, pid, centers, has_h, ptips, tips, T, nloc, ids, N, dN):
    """Stabilized shape functions ``phi_i psi_i^s`` and gradients at a point.

    Returns the number of covering patches ``m``; ``N[k, s]`` and
    ``dN[k, s, :]`` hold the values for slot ``k < m``.
    """
    pq = np.empty((4, 2), dtype=np.int64)
    m = covering_patches(x, y, ox, oy, cw, n, a, pid, ids, pq)
    w = np.empty(4)
    gw = np.empty((4, 2))
    s = 0.0
    sx = 0.0
    sy = 0.0
    for k in range(m):
        cx = ox + (pq[k, 0] + 0.5) * cw
        cy = oy + (pq[k, 1] + 0.5) * cw
        bx, dbx = bspline2((x - cx) / a)
        by, dby = bspline2((y - cy) / a)
        w[k] = bx * by
        gw[k, 0] = dbx * by / a
        gw[k, 1] = bx * dby / a
        s += w[k]
        sx += gw[k, 0]
        sy += gw[k, 1]
    f = np.empty(T.shape[1])
    df = np.empty((T.shape[1], 2))
    for k in range(m):
        i = ids[k]
        phi = w[k] / s
        dpx = (gw[k, 0] * s - w[k] * sx) / (s * s)
        dpy = (gw[k, 1] * s - w[k] * sy) / (s * s)
        nr = raw_functions(x, y, H, centers[i, 0], centers[i, 1], a, has_h[i], ptips[i, 0], ptips[i, 1], tips, f, df)
        for j in range(nloc[i]):
            g = 0.0
            gx = 0.0
            gy = 0.0
            for r in range(nr):
                t = T[i, r, j]
                if t != 0.0:
                    g += t * f[r]
                    gx += t * df[r, 0]
                    gy += t * df[r, 1]
            N[k, j] = phi * g
            dN[k, j, 0] = dpx * g + phi * gx
            dN[k, j, 1] = dpy * g + phi * gy
    return m


@numba.njit(cache=True)
def _gram(X, W, Hq, ox, oy, cw, n, a, pid, centers, has_h, ptips, tips, G):
    ids = np.empty(4, dtype=np.int64)
    pq = np.empty((4, 2), dtype=np.int64)
    f = np.empty(G.shape[1])
    df = np.empty((G.shape[1], 2))
    for q in range(X.shape[0]):
        m = covering_patches(X[q, 0], X[q, 1], ox, oy, cw, n, a, pid, ids, pq)
        for k in range(m):
            i = ids[k]
            nr = raw_functions(X[q, 0], X[q, 1], Hq[q], centers[i, 0], centers[i, 1], a, has_h[i], ptips[i, 0], ptips[i, 1], tips, f, df)
            for r in range(nr):
                fr = W[q] * f[r]
                for c in range(r, nr):
                    G[i, r, c] += fr * f[c]
    for i in range(G.shape[0]):
        for r in range(G.shape[1]):
            for c in range(r):
                G[i, r, c] = G[i, c, r]


@numba.njit(cache=True)
def _evaluate(X, Hq, ox, oy, cw, n, a, pid, centers, has_h, ptips, tips, T, nloc, dof_off, coef, out, count):
    ids = np.empty(4, dtype=np.int64)
    N = np.empty((4, T.shape[2]))
    dN = np.empty((4, T.shape[2], 2))
    for q in range(X.shape[0]):
        m = basis_at(X[q, 0], X[q, 1], Hq[q], ox, oy, cw, n, a, pid, centers, has_h, ptips, tips, T, nloc, ids, N, dN)
        count[q] = m
        ux = 0.0
        uy = 0.0
        for k in range(m):
            i = ids[k]
            o = dof_off[i]
            for j in range(nloc[i]):
                ux += N[k, j] * coef[o + 2 * j]
                uy += N[k, j] * coef[o + 2 * j + 1]
        out[q, 0] = ux
        out[q, 1] = uy


# -------------------------------------------------------------- stabilization

def stabilize_basis(G: np.ndarray, n_poly: int = 3, eps: float = EPS_STAB):
    """Transform from raw to stabilized local functions.

    Two stages on the diagonally scaled Gram matrix ``G``: the polynomial
    block is kept as is when well conditioned (otherwise reduced by its own
    eigen-decomposition), then the enrichments are orthogonalized against it
    and their residual Gram matrix is eigen-decomposed.  Residual directions
    with eigenvalue below ``eps`` times the largest eigenvalue of the scaled
    Gram matrix are removed, the rest are orthonormalized.

    Returns:
        ``(T, removed)`` with ``T`` of shape ``(n_raw, n_kept)``.
    """
    G = np.asarray(G, dtype=float)
    nr = len(G)
    d = np.sqrt(np.diag(G))
    if np.any(d <= 0):
        raise SpaceError("local function vanishes on its patch")
    Gs = G / np.outer(d, d)
    lam_max = float(np.linalg.eigvalsh(Gs)[-1])
    cut = eps * lam_max
    Gpp = Gs[:n_poly, :n_poly]
    lp, Vp = np.linalg.eigh(Gpp)
    if lp[0] >= cut:
        Tp = np.eye(n_poly)
    else:
        keep = lp >= cut
        Tp = Vp[:, keep] / np.sqrt(lp[keep])
    removed = n_poly - Tp.shape[1]
    if Tp.shape[1] == 0:
        raise SpaceError("stabilization removed the whole polynomial space")
    blocks = [np.vstack([Tp, np.zeros((nr - n_poly, Tp.shape[1]))])]
    if nr > n_poly:
        # residual of enrichments after projection on the kept polynomials
        P = np.vstack([Tp, np.zeros((nr - n_poly, Tp.shape[1]))])
        Gkk = P.T @ Gs @ P
        E = np.vstack([np.zeros((n_poly, nr - n_poly)), np.eye(nr - n_poly)])
        C = np.linalg.solve(Gkk, P.T @ Gs @ E)
        R = E - P @ C
        Gr = R.T @ Gs @ R
        Gr = 0.5 * (Gr + Gr.T)
        lr, Vr = np.linalg.eigh(Gr)
        keep = lr >= cut
        removed += int(np.sum(~keep))
        if np.any(keep):
            blocks.append(R @ (Vr[:, keep] / np.sqrt(lr[keep])))
    Ts = np.hstack(blocks)
    return Ts / d[:, None], removed


@dataclass
class LocalSpace:
    patch: int
    degree: int
    enrichments: list
    transform: np.ndarray

    @property
    def dim(self) -> int:
        return self.transform.shape[1]


# ------------------------------------------------------------------ space

@dataclass
class PUSpace:
    """Global PUM space: cover, enrichment data and stabilized transforms."""

    cover: Cover
    crack: Optional[CrackPolyline]
    assignment: EnrichmentAssignment
    tips: np.ndarray
    has_h: np.ndarray
    ptips: np.ndarray
    nraw: np.ndarray
    nloc: np.ndarray
    T: np.ndarray
    dof_offset: np.ndarray
    removed: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def n_dof(self) -> int:
        return int(self.dof_offset[-1])

    @property
    def n_patches(self) -> int:
        return len(self.nloc)

    @property
    def max_local(self) -> int:
        return int(self.T.shape[2])

    def kernel_data(self):
        return kernel_args(self.cover) + (
            np.ascontiguousarray(self.cover.centers()),
            self.has_h,
            self.ptips,
            self.tips,
        )

    def side_values(self, X: np.ndarray) -> np.ndarray:
        """Crack side at ``X``; only evaluated near the crack, zero elsewhere."""
        H = np.zeros(len(X))
        if self.crack is None or not np.any(self.assignment.tags != PLAIN):
            return H
        pad = 2.0 * self.cover.patch_half_width + self.assignment.tip_radius
        lo = self.crack.points.min(axis=0) - pad
        hi = self.crack.points.max(axis=0) + pad
        near = np.flatnonzero(np.all((X >= lo) & (X <= hi), axis=1))
        for s in range(0, len(near), 50000):
            idx = near[s:s + 50000]
            H[idx] = self.crack.side(X[idx])
        return H

    def local_space(self, i: int) -> LocalSpace:
        enr = []
        if self.has_h[i]:
            enr.append("heaviside")
        for k in self.ptips[i]:
            if k >= 0:
                enr.append(f"tip{k}")
        return LocalSpace(i, 1, enr, self.T[i, : self.nraw[i], : self.nloc[i]].copy())

    def evaluate(self, coef: np.ndarray, X) -> np.ndarray:
        """Displacement at points ``X`` for coefficient vector ``coef``."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        coef = np.ascontiguousarray(coef, dtype=float)
        if len(coef) != self.n_dof:
            raise SpaceError(f"expected {self.n_dof} coefficients, got {len(coef)}")
        d = self.cover.domain
        tol = 1e-12 * self.cover.width
        outside = (X[:, 0] < d[0] - tol) | (X[:, 0] > d[2] + tol) | (X[:, 1] < d[1] - tol) | (X[:, 1] > d[3] + tol)
        if np.any(outside):
            raise SpaceError(f"point {X[np.flatnonzero(outside)[0]].tolist()} lies outside the domain")
        out = np.zeros((len(X), 2))
        count = np.zeros(len(X), dtype=np.int64)
        _evaluate(X, self.side_values(X), *self.kernel_data(), self.T, self.nloc, self.dof_offset, coef, out, count)
        return out


def _tip_table(crack: Optional[CrackPolyline]) -> np.ndarray:
    tips = np.zeros((2, 5))
    if crack is None:
        return tips
    frames = crack.tip_frames()
    # side() is +1 left of the segment direction; the first tip's tangent
    # points against it, so its angle sign is the opposite of the side
    for k, (fr, sense) in enumerate(zip(frames, (-1.0, 1.0))):
        tips[k] = (fr.point[0], fr.point[1], fr.tangent[0], fr.tangent[1], sense)
    return tips


def build_space(
    cover: Cover,
    crack: Optional[CrackPolyline],
    quad: Quadrature,
    tip_radius: Optional[float] = None,
    eps: float = EPS_STAB,
    assignment: Optional[EnrichmentAssignment] = None,
) -> PUSpace:
    """Assign enrichments, compute local Gram matrices and stabilize."""
    if assignment is None:
        assignment = select_enrichments(cover, crack, tip_radius)
    npatch = cover.n_active
    has_h = assignment.tags == HEAVISIDE
    ptips = assignment.tip_ids.copy()
    nraw = 3 + 3 * has_h + 4 * np.sum(ptips >= 0, axis=1)
    nr_max = int(nraw.max()) if npatch else 3
    tips = _tip_table(crack)
    space = PUSpace(cover, crack, assignment, tips, has_h, ptips, nraw, nraw.copy(), np.zeros((npatch, nr_max, nr_max)), np.zeros(npatch + 1, dtype=np.int64))
    Hq = space.side_values(quad.points)
    G = np.zeros((npatch, nr_max, nr_max))
    _gram(quad.points, quad.weights, Hq, *space.kernel_data(), G)
    T = np.zeros((npatch, nr_max, nr_max))
    nloc = np.zeros(npatch, dtype=np.int64)
    removed = 0
    for i in range(npatch):
        nr = nraw[i]
        if nr == 3 and not _needs_check(G[i, :3, :3], eps):
            Ti = np.eye(3)
        else:
            Ti, rm = stabilize_basis(G[i, :nr, :nr], 3, eps)
            removed += rm
        T[i, :nr, : Ti.shape[1]] = Ti
        nloc[i] = Ti.shape[1]
    nl_max = int(nloc.max()) if npatch else 3
    space.T = np.ascontiguousarray(T[:, :, :nl_max])
    space.nloc = nloc
    space.dof_offset = np.concatenate([[0], np.cumsum(2 * nloc)]).astype(np.int64)
    space.removed = removed
    space.extras["gram"] = G
    if removed:
        log.info("stabilization removed %d local directions", removed)
    return space


def _needs_check(Gpp: np.ndarray, eps: float) -> bool:
    d = np.sqrt(np.diag(Gpp))
    lam = np.linalg.eigvalsh(Gpp / np.outer(d, d))
    return lam[0] < eps * lam[-1]
