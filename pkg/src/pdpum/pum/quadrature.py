"""Integration points for the PUM forms.

The domain is tiled by axis-aligned sub-boxes whose edges include every
patch boundary and B-spline knot line, so the partition of unity is
piecewise smooth on each.  Sub-boxes cut by the crack are split into a fan
of triangles around a point on the crack and integrated with a collapsed
(Duffy) Gauss rule, which places no point on the crack.  Sub-boxes near an
enriched tip are quartered recursively first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from pdpum.geometry import CrackPolyline
from pdpum.pum.cover import Cover

log = logging.getLogger(__name__)

MAX_CUT_DEPTH = 6


class QuadratureError(RuntimeError):
    pass


@dataclass
class Quadrature:
    """Interior points and weights plus boundary points with outer normals."""

    points: np.ndarray
    weights: np.ndarray
    boundary_points: np.ndarray
    boundary_weights: np.ndarray
    boundary_normals: np.ndarray
    boundary_edge: np.ndarray
    order: int
    n_cut: int = 0

    @property
    def area(self) -> float:
        return float(self.weights.sum())


DEFAULT_ORDER = 6


def gauss_1d(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def box_rule(boxes: np.ndarray, order: int):
    """Tensor Gauss points on each row ``(x0, y0, x1, y1)`` of ``boxes``."""
    t, w = gauss_1d(order)
    tx, ty = np.meshgrid(t, t, indexing="xy")
    wx, wy = np.meshgrid(w, w, indexing="xy")
    tx, ty, ww = tx.ravel(), ty.ravel(), (wx * wy).ravel()
    boxes = np.atleast_2d(boxes)
    dx = boxes[:, 2] - boxes[:, 0]
    dy = boxes[:, 3] - boxes[:, 1]
    X = boxes[:, 0:1] + dx[:, None] * tx[None]
    Y = boxes[:, 1:2] + dy[:, None] * ty[None]
    W = (dx * dy)[:, None] * ww[None]
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


def duffy_rule(v0, v1, v2, order: int):
    """Gauss points on triangle ``v0 v1 v2`` collapsed at ``v0``.

    The Jacobian vanishes linearly at ``v0``, which cancels ``1/r``
    singularities located there.
    """
    t, w = gauss_1d(order)
    xi, eta = np.meshgrid(t, t, indexing="ij")
    wx, wy = np.meshgrid(w, w, indexing="ij")
    xi, eta, ww = xi.ravel(), eta.ravel(), (wx * wy).ravel()
    v0, v1, v2 = (np.asarray(v, dtype=float) for v in (v0, v1, v2))
    e1 = v1 - v0
    e2 = v2 - v0
    area2 = abs(e1[0] * e2[1] - e1[1] * e2[0])
    pts = v0 + xi[:, None] * ((1.0 - eta)[:, None] * e1 + eta[:, None] * e2)
    return pts, ww * xi * area2


def _breaks_1d(cover: Cover, axis: int) -> np.ndarray:
    lo, hi = cover.domain[axis], cover.domain[axis + 2]
    o = cover.origin[axis]
    cw = cover.cell_width
    h = cover.h
    c = o + (np.arange(cover.n) + 0.5) * cw
    r1 = (2.0 - cover.alpha) * h
    r2 = cover.alpha * h / 3.0
    pts = np.concatenate([c - h, c + h, c - r1, c + r1, c - r2, c + r2, [lo, hi]])
    pts = pts[(pts >= lo) & (pts <= hi)]
    pts = np.unique(pts)
    # merge breaks closer than rounding noise
    keep = np.concatenate([[True], np.diff(pts) > 1e-12 * cw])
    pts = pts[keep]
    pts[0], pts[-1] = lo, hi
    return pts


def _clip_segment(a, b, box):
    """Liang-Barsky clip of segment ``ab`` to the closed box; None if empty."""
    x0, y0, x1, y1 = box
    d = b - a
    t0, t1 = 0.0, 1.0
    for pk, qk in ((-d[0], a[0] - x0), (d[0], x1 - a[0]), (-d[1], a[1] - y0), (d[1], y1 - a[1])):
        if pk == 0.0:
            if qk < 0:
                return None
            continue
        t = qk / pk
        if pk < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return None
    return a + t0 * d, a + t1 * d


def _strictly_inside(p, box, eps) -> bool:
    return box[0] + eps < p[0] < box[2] - eps and box[1] + eps < p[1] < box[3] - eps


def _boundary_param(p, box) -> float:
    """Counter-clockwise perimeter coordinate of a point on the box boundary."""
    x0, y0, x1, y1 = box
    w, h = x1 - x0, y1 - y0
    dists = [abs(p[1] - y0), abs(p[0] - x1), abs(p[1] - y1), abs(p[0] - x0)]
    k = int(np.argmin(dists))
    if k == 0:
        return p[0] - x0
    if k == 1:
        return w + (p[1] - y0)
    if k == 2:
        return w + h + (x1 - p[0])
    return 2 * w + h + (y1 - p[1])


def _crack_pieces(crack: CrackPolyline, box, eps):
    pieces = []
    for a, b in crack.segments:
        c = _clip_segment(a, b, box)
        if c is None:
            continue
        p, q = c
        if np.hypot(*(q - p)) <= eps:
            continue
        m = 0.5 * (p + q)
        if not _strictly_inside(m, box, 0.0):
            continue  # runs along the box boundary
        pieces.append((p, q))
    return pieces


def _fan(center, box, extra, order):
    """Fan triangulation of ``box`` around ``center`` with extra boundary vertices."""
    x0, y0, x1, y1 = box
    verts = [np.array([x0, y0]), np.array([x1, y0]), np.array([x1, y1]), np.array([x0, y1])]
    verts += [np.asarray(e, dtype=float) for e in extra]
    verts.sort(key=lambda v: _boundary_param(v, box))
    area = (x1 - x0) * (y1 - y0)
    pts, wts = [], []
    for k in range(len(verts)):
        a, b = verts[k], verts[(k + 1) % len(verts)]
        e1, e2 = a - center, b - center
        if abs(e1[0] * e2[1] - e1[1] * e2[0]) <= 1e-14 * area:
            continue
        p, w = duffy_rule(center, a, b, order)
        pts.append(p)
        wts.append(w)
    return np.vstack(pts), np.concatenate(wts)


def _split4(box):
    x0, y0, x1, y1 = box
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    return [(x0, y0, xm, ym), (xm, y0, x1, ym), (x0, ym, xm, y1), (xm, ym, x1, y1)]


def _cut_box(box, crack, order, depth, out_p, out_w):
    size = max(box[2] - box[0], box[3] - box[1])
    eps = 1e-12 * size
    pieces = _crack_pieces(crack, box, eps)
    if not pieces:
        p, w = box_rule(np.array([box]), order)
        out_p.append(p)
        out_w.append(w)
        return
    inner = [v for v in crack.points if _strictly_inside(v, box, eps)]
    exits = []
    for p, q in pieces:
        for e in (p, q):
            if not _strictly_inside(e, box, eps):
                exits.append(e)
    if len(inner) == 1:
        v = inner[0]
        rays = all(np.hypot(*(p - v)) <= eps or np.hypot(*(q - v)) <= eps for p, q in pieces)
        if rays:
            p, w = _fan(v, box, exits, order)
            out_p.append(p)
            out_w.append(w)
            return
    elif not inner and len(pieces) == 1:
        p, q = pieces[0]
        p, w = _fan(0.5 * (p + q), box, exits, order)
        out_p.append(p)
        out_w.append(w)
        return
    if depth >= MAX_CUT_DEPTH:
        log.warning("crack geometry in box %s not resolved at depth %d", box, depth)
        center = inner[0] if inner else 0.5 * (pieces[0][0] + pieces[0][1])
        p, w = _fan(center, box, exits, order)
        out_p.append(p)
        out_w.append(w)
        return
    for child in _split4(box):
        _cut_box(child, crack, order, depth + 1, out_p, out_w)


def _near(box, tip, factor=0.5) -> bool:
    size = max(box[2] - box[0], box[3] - box[1])
    dx = max(box[0] - tip[0], 0.0, tip[0] - box[2])
    dy = max(box[1] - tip[1], 0.0, tip[1] - box[3])
    return np.hypot(dx, dy) < factor * size


def _refine_tip(box, crack, tips, order, depth, out_p, out_w):
    if depth > 0 and any(_near(box, t) for t in tips):
        for child in _split4(box):
            _refine_tip(child, crack, tips, order, depth - 1, out_p, out_w)
        return
    if crack is None:
        p, w = box_rule(np.array([box]), order)
        out_p.append(p)
        out_w.append(w)
    else:
        _cut_box(box, crack, order, 0, out_p, out_w)


def _boxes_cut_by(crack: CrackPolyline, boxes: np.ndarray) -> np.ndarray:
    """Vectorized closed-box test against every crack segment."""
    hit = np.zeros(len(boxes), dtype=bool)
    x0, y0, x1, y1 = boxes.T
    for a, b in crack.segments:
        d = b - a
        t0 = np.zeros(len(boxes))
        t1 = np.ones(len(boxes))
        ok = np.ones(len(boxes), dtype=bool)
        for pk, qk in ((-d[0], a[0] - x0), (d[0], x1 - a[0]), (-d[1], a[1] - y0), (d[1], y1 - a[1])):
            if pk == 0.0:
                ok &= qk >= 0
                continue
            t = qk / pk
            if pk < 0:
                t0 = np.maximum(t0, t)
            else:
                t1 = np.minimum(t1, t)
        hit |= ok & (t0 <= t1)
    return hit


def build_quadrature(
    cover: Cover,
    crack: Optional[CrackPolyline] = None,
    order: int = DEFAULT_ORDER,
    tips: Sequence[np.ndarray] = (),
    tip_depth: int = 4,
) -> Quadrature:
    """Quadrature over the cover's domain.

    Args:
        cover: the PUM cover.
        crack: crack polyline or None.
        order: Gauss points per direction on each sub-box or triangle.
        tips: tip positions around which sub-boxes are quartered.
        tip_depth: number of quartering levels toward each tip.
    """
    bx = _breaks_1d(cover, 0)
    by = _breaks_1d(cover, 1)
    X0, Y0 = np.meshgrid(bx[:-1], by[:-1], indexing="xy")
    X1, Y1 = np.meshgrid(bx[1:], by[1:], indexing="xy")
    boxes = np.column_stack([X0.ravel(), Y0.ravel(), X1.ravel(), Y1.ravel()])
    special = np.zeros(len(boxes), dtype=bool)
    if crack is not None:
        special |= _boxes_cut_by(crack, boxes)
    tips = [np.asarray(t, dtype=float) for t in tips]
    for t in tips:
        size = np.maximum(boxes[:, 2] - boxes[:, 0], boxes[:, 3] - boxes[:, 1])
        dx = np.maximum.reduce([boxes[:, 0] - t[0], np.zeros(len(boxes)), t[0] - boxes[:, 2]])
        dy = np.maximum.reduce([boxes[:, 1] - t[1], np.zeros(len(boxes)), t[1] - boxes[:, 3]])
        special |= np.hypot(dx, dy) < size
    pts, wts = box_rule(boxes[~special], order) if np.any(~special) else (np.zeros((0, 2)), np.zeros(0))
    out_p, out_w = [pts], [wts]
    for box in boxes[special]:
        _refine_tip(tuple(box), crack, tips, order, tip_depth, out_p, out_w)
    points = np.vstack(out_p)
    weights = np.concatenate(out_w)
    bp, bw, bn, be = _boundary_rule(cover, crack, bx, by, order)
    return Quadrature(points, weights, bp, bw, bn, be, order, int(special.sum()))


EDGE_CODES = {"bottom": 0, "right": 1, "top": 2, "left": 3}


def _boundary_rule(cover, crack, bx, by, order):
    x0, y0, x1, y1 = cover.domain
    t, w = gauss_1d(order)
    P, W, Nrm, E = [], [], [], []
    for name, code in EDGE_CODES.items():
        horizontal = name in ("bottom", "top")
        br = list(bx if horizontal else by)
        if crack is not None:
            a = np.array([x0, y0 if name == "bottom" else y1]) if horizontal else np.array([x0 if name == "left" else x1, y0])
            b = a + (np.array([x1 - x0, 0.0]) if horizontal else np.array([0.0, y1 - y0]))
            for s0, s1 in crack.segments:
                hit = _seg_cross(a, b, s0, s1)
                if hit is not None:
                    br.append(hit[0] if horizontal else hit[1])
        br = np.unique(np.asarray(br))
        lo, hi = br[:-1], br[1:]
        keep = hi - lo > 0
        lo, hi = lo[keep], hi[keep]
        s = (lo[:, None] + (hi - lo)[:, None] * t[None]).ravel()
        ws = ((hi - lo)[:, None] * w[None]).ravel()
        if name == "bottom":
            pts, nrm = np.column_stack([s, np.full_like(s, y0)]), (0.0, -1.0)
        elif name == "top":
            pts, nrm = np.column_stack([s, np.full_like(s, y1)]), (0.0, 1.0)
        elif name == "left":
            pts, nrm = np.column_stack([np.full_like(s, x0), s]), (-1.0, 0.0)
        else:
            pts, nrm = np.column_stack([np.full_like(s, x1), s]), (1.0, 0.0)
        P.append(pts)
        W.append(ws)
        Nrm.append(np.tile(nrm, (len(s), 1)))
        E.append(np.full(len(s), code, dtype=np.int64))
    return np.vstack(P), np.concatenate(W), np.vstack(Nrm), np.concatenate(E)


def _seg_cross(a, b, c, d):
    r = b - a
    s = d - c
    den = r[0] * s[1] - r[1] * s[0]
    if den == 0:
        return None
    qp = c - a
    t = (qp[0] * s[1] - qp[1] * s[0]) / den
    u = (qp[0] * r[1] - qp[1] * r[0]) / den
    if 0 <= t <= 1 and 0 <= u <= 1:
        return a + t * r
    return None
