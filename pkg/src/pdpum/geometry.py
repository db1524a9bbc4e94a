"""Planar geometry shared by the PD grid and the PUM enrichments.

Boxes are ``(xmin, ymin, xmax, ymax)`` tuples.  Cracks are open polylines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

Box = tuple[float, float, float, float]


class GeometryError(ValueError):
    pass


def box_size(box: Box) -> tuple[float, float]:
    return box[2] - box[0], box[3] - box[1]


def check_box(box: Box) -> Box:
    box = tuple(float(v) for v in box)
    if len(box) != 4:
        raise GeometryError(f"box needs 4 entries, got {box}")
    w, h = box_size(box)
    if not (w > 0 and h > 0):
        raise GeometryError(f"degenerate box {box}")
    return box  # type: ignore[return-value]


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def segments_intersect(p, q, a, b, tol: float = 0.0) -> bool:
    """Closed-segment intersection test of ``pq`` and ``ab``.

    ``tol`` is an absolute distance slack applied to the orientation tests.
    """
    p, q, a, b = (np.asarray(v, dtype=float) for v in (p, q, a, b))
    d1 = q - p
    d2 = b - a
    l1 = np.hypot(*d1)
    l2 = np.hypot(*d2)
    o1 = _cross(*d1, *(a - p))
    o2 = _cross(*d1, *(b - p))
    o3 = _cross(*d2, *(p - a))
    o4 = _cross(*d2, *(q - a))
    t1 = tol * l1
    t2 = tol * l2
    if (o1 > t1 and o2 > t1) or (o1 < -t1 and o2 < -t1):
        return False
    if (o3 > t2 and o4 > t2) or (o3 < -t2 and o4 < -t2):
        return False
    if abs(_cross(*d1, *d2)) <= max(t1, t2) * max(l1, l2) + 1e-300:
        # parallel: overlap along the common line
        if abs(o1) > t1 or abs(o3) > t2:
            return False
        e = d1 / l1 if l1 > 0 else d2 / l2
        s = sorted([0.0, float(np.dot(q - p, e))])
        r = sorted([float(np.dot(a - p, e)), float(np.dot(b - p, e))])
        return r[0] <= s[1] + tol and s[0] <= r[1] + tol
    return True


def segment_intersects_box(a, b, box: Box, strict: bool = True) -> bool:
    """True if segment ``ab`` meets the (open, if ``strict``) box."""
    x0, y0, x1, y1 = box
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # Liang-Barsky clipping
    d = b - a
    t0, t1 = 0.0, 1.0
    for pk, qk in ((-d[0], a[0] - x0), (d[0], x1 - a[0]), (-d[1], a[1] - y0), (d[1], y1 - a[1])):
        if pk == 0.0:
            if qk < 0 or (strict and qk == 0):
                return False
            continue
        t = qk / pk
        if pk < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return False
    if strict:
        # a clipped piece running along the boundary does not count
        m = a + 0.5 * (t0 + t1) * d
        return bool(x0 < m[0] < x1 and y0 < m[1] < y1)
    return True


def point_in_box(x, box: Box, strict: bool = True) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if strict:
        return (x[:, 0] > box[0]) & (x[:, 0] < box[2]) & (x[:, 1] > box[1]) & (x[:, 1] < box[3])
    return (x[:, 0] >= box[0]) & (x[:, 0] <= box[2]) & (x[:, 1] >= box[1]) & (x[:, 1] <= box[3])


@dataclass(frozen=True)
class TipFrame:
    """Position and orthonormal frame of a crack tip.

    ``tangent`` points away from the crack, in its growth direction.
    """

    point: np.ndarray
    tangent: np.ndarray

    @property
    def normal(self) -> np.ndarray:
        return np.array([-self.tangent[1], self.tangent[0]])


class CrackPolyline:
    """An open polyline crack with two tips.

    The normal of each segment is its tangent rotated counter-clockwise,
    which fixes the ``+1`` side of the Heaviside function.
    """

    def __init__(self, points: Sequence[Sequence[float]]):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        keep = [0]
        for k in range(1, len(pts)):
            if np.hypot(*(pts[k] - pts[keep[-1]])) > 0.0:
                keep.append(k)
        pts = pts[keep]
        if len(pts) < 2:
            raise GeometryError("a crack polyline needs at least two distinct points")
        self.points = pts
        self.points.setflags(write=False)

    @classmethod
    def from_center(cls, center, length: float, angle_deg: float) -> "CrackPolyline":
        """Straight crack of given length, angle measured from the x axis."""
        c = np.asarray(center, dtype=float)
        t = np.array([np.cos(np.radians(angle_deg)), np.sin(np.radians(angle_deg))])
        return cls([c - 0.5 * length * t, c + 0.5 * length * t])

    def __repr__(self) -> str:
        return f"CrackPolyline({self.points.tolist()})"

    def __eq__(self, other) -> bool:
        return isinstance(other, CrackPolyline) and np.array_equal(self.points, other.points)

    @property
    def segments(self) -> np.ndarray:
        """Array ``(nseg, 2, 2)`` of segment endpoints."""
        return np.stack([self.points[:-1], self.points[1:]], axis=1)

    @property
    def tips(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points[0], self.points[-1]

    @property
    def length(self) -> float:
        return float(np.sum(np.hypot(*np.diff(self.points, axis=0).T)))

    def tip_frames(self) -> tuple[TipFrame, TipFrame]:
        p = self.points
        t0 = p[0] - p[1]
        t1 = p[-1] - p[-2]
        return (
            TipFrame(p[0].copy(), t0 / np.hypot(*t0)),
            TipFrame(p[-1].copy(), t1 / np.hypot(*t1)),
        )

    def intersects_box(self, box: Box, strict: bool = True) -> bool:
        return any(segment_intersects_box(a, b, box, strict) for a, b in self.segments)

    def crosses_segment(self, p, q, tol: float = 0.0) -> bool:
        return any(segments_intersect(p, q, a, b, tol) for a, b in self.segments)

    def distance(self, x) -> np.ndarray:
        return self._nearest(np.atleast_2d(np.asarray(x, dtype=float)))[0]

    def _nearest(self, x: np.ndarray):
        segs = self.segments
        a = segs[:, 0][None]
        d = (segs[:, 1] - segs[:, 0])[None]
        rel = x[:, None, :] - a
        t = np.clip(np.sum(rel * d, axis=2) / np.sum(d * d, axis=2), 0.0, 1.0)
        diff = rel - t[..., None] * d
        dist = np.hypot(diff[..., 0], diff[..., 1])
        k = np.argmin(dist, axis=1)
        idx = np.arange(len(x))
        return dist[idx, k], k, t[idx, k]

    def side(self, x) -> np.ndarray:
        """Heaviside value in ``{+1, -1}`` of each point.

        The sign comes from the nearest segment.  Beyond a tip the tip
        segment is extended along its tangent; at an interior vertex the
        averaged normal of the two adjacent segments decides.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _, k, t = self._nearest(x)
        segs = self.segments
        d = segs[:, 1] - segs[:, 0]
        n = np.stack([-d[:, 1], d[:, 0]], axis=1) / np.hypot(d[:, 0], d[:, 1])[:, None]
        nseg = len(segs)
        normal = n[k].copy()
        at_start = (t <= 0.0) & (k > 0)
        at_end = (t >= 1.0) & (k < nseg - 1)
        if np.any(at_start):
            m = n[k[at_start]] + n[k[at_start] - 1]
            normal[at_start] = m
        if np.any(at_end):
            m = n[k[at_end]] + n[k[at_end] + 1]
            normal[at_end] = m
        # beyond the tips t is clipped; the projection onto the segment
        # normal is the signed distance to the tangent extension
        rel = x - (segs[k, 0] + t[:, None] * d[k])
        s = np.sum(rel * normal, axis=1)
        return np.where(s >= 0.0, 1.0, -1.0)
