"""Crack-tip extraction from damage time series and crack polyline assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from pdpum.geometry import CrackPolyline, GeometryError

RegionFilter = Callable[[np.ndarray], np.ndarray]

DEFAULT_STRIDE = 250


@dataclass
class DamageSeries:
    """Per-node damage snapshots over the reference node positions."""

    positions: np.ndarray
    steps: list[int] = field(default_factory=list)
    damage: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        for d in self.damage:
            if len(d) != len(self.positions):
                raise ValueError("damage snapshot length differs from node count")
        if len(self.steps) != len(self.damage):
            raise ValueError("steps and damage lists differ in length")

    def append(self, step: int, damage: np.ndarray) -> None:
        damage = np.asarray(damage, dtype=float)
        if len(damage) != len(self.positions):
            raise ValueError("damage snapshot length differs from node count")
        self.steps.append(int(step))
        self.damage.append(damage)

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class HalfPlane:
    """Points with ``(x - origin) . normal >= 0`` (or ``> 0`` if ``strict``)."""

    origin: tuple[float, float]
    normal: tuple[float, float]
    strict: bool = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        s = (np.asarray(x)[:, 0] - self.origin[0]) * self.normal[0] + (np.asarray(x)[:, 1] - self.origin[1]) * self.normal[1]
        return s > 0 if self.strict else s >= 0


@dataclass(frozen=True)
class BoxFilter:
    """Points inside the closed box ``(xmin, ymin, xmax, ymax)``."""

    box: tuple[float, float, float, float]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        b = self.box
        return (x[:, 0] >= b[0]) & (x[:, 0] <= b[2]) & (x[:, 1] >= b[1]) & (x[:, 1] <= b[3])


def default_filters(initial: CrackPolyline) -> tuple[HalfPlane, HalfPlane]:
    """Half-planes on either side of the perpendicular bisector of the crack.

    The left filter holds the first crack point, the right one the last.
    Points on the bisector belong to the right side.
    """
    p0, p1 = initial.tips
    mid = 0.5 * (p0 + p1)
    t = p1 - p0
    t = t / np.hypot(*t)
    left = HalfPlane((float(mid[0]), float(mid[1])), (float(-t[0]), float(-t[1])), strict=True)
    right = HalfPlane((float(mid[0]), float(mid[1])), (float(t[0]), float(t[1])))
    return left, right


def selected_snapshots(series: DamageSeries, stride: int = DEFAULT_STRIDE) -> list[int]:
    """Indices into ``series`` of the snapshots whose step is a multiple of ``stride``."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return [k for k, s in enumerate(series.steps) if s % stride == 0]


def extract_tip_sequence(
    series: DamageSeries,
    stride: int = DEFAULT_STRIDE,
    region_filter: Optional[RegionFilter] = None,
) -> list[np.ndarray]:
    """Position of the most damaged node (``d > 1``) per selected snapshot.

    Ties go to the lowest node index.  Snapshots without any ``d > 1`` inside
    the filter contribute nothing.
    """
    pos = series.positions
    inside = np.ones(len(pos), dtype=bool) if region_filter is None else np.asarray(region_filter(pos), dtype=bool)
    out: list[np.ndarray] = []
    for k in selected_snapshots(series, stride):
        d = series.damage[k]
        cand = np.where(inside & (d > 1.0), d, -np.inf)
        if not len(cand):
            continue
        idx = int(np.argmax(cand))
        if cand[idx] == -np.inf:
            continue
        out.append(pos[idx].copy())
    return out


def _dedupe(points: Sequence[np.ndarray]) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for p in points:
        p = np.asarray(p, dtype=float)
        if not out or not np.array_equal(out[-1], p):
            out.append(p)
    return out


def collapse_repeats(seq: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Drop consecutive duplicates (tip stationary between snapshots)."""
    return _dedupe(seq)


def build_crack_polyline(
    initial: CrackPolyline,
    left_seq: Sequence[np.ndarray] = (),
    right_seq: Sequence[np.ndarray] = (),
) -> CrackPolyline:
    """``reverse(left_seq) + initial + right_seq`` with repeated points removed."""
    pts = [np.asarray(p, dtype=float) for p in reversed(list(left_seq))]
    pts += [p for p in initial.points]
    pts += [np.asarray(p, dtype=float) for p in right_seq]
    pts = _dedupe(pts)
    if len(pts) < 2:
        raise GeometryError("crack polyline collapses to a single point")
    return CrackPolyline(np.array(pts))


def growth_is_monotone(tip, seq: Sequence[np.ndarray], tol: float, max_inversions: int = 1) -> bool:
    """Distance from ``tip`` non-decreasing along ``seq``.

    Up to ``max_inversions`` decreases of at most ``tol`` are tolerated.
    """
    tip = np.asarray(tip, dtype=float)
    dist = [float(np.hypot(*(np.asarray(p) - tip))) for p in seq]
    bad = 0
    for a, b in zip(dist, dist[1:]):
        if b < a:
            if a - b > tol:
                return False
            bad += 1
    return bad <= max_inversions


def chord_angle_from_vertical(seq: Sequence[np.ndarray]) -> float:
    """Angle in degrees between the first-to-last chord of ``seq`` and the y axis."""
    if len(seq) < 2:
        return float("nan")
    d = np.asarray(seq[-1], dtype=float) - np.asarray(seq[0], dtype=float)
    if not np.any(d):
        return float("nan")
    return float(np.degrees(np.arctan2(abs(d[0]), abs(d[1]))))
