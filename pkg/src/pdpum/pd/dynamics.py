"""Cohesive double-well bond force, central-difference integration and damage."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numba
import numpy as np

from pdpum.materials import Material
from pdpum.pd.grid import PDGrid

log = logging.getLogger(__name__)


class PDError(RuntimeError):
    pass


# ------------------------------------------------------------- bond law

def bond_stretch(x_i, x_j, u_i, u_j) -> np.ndarray:
    """Relative displacement projected on the bond, divided by bond length."""
    xi = np.asarray(x_j, dtype=float) - np.asarray(x_i, dtype=float)
    length = np.linalg.norm(xi, axis=-1)
    if np.any(length == 0):
        raise PDError("coincident nodes have no bond direction")
    e = xi / length[..., None]
    du = np.asarray(u_j, dtype=float) - np.asarray(u_i, dtype=float)
    return np.sum(du * e, axis=-1) / length


def potential_g(r, material: Material) -> tuple[np.ndarray, np.ndarray]:
    """``g(r) = C (1 - exp(-beta r^2))`` and its derivative."""
    r = np.asarray(r, dtype=float)
    ex = np.exp(-material.beta * r * r)
    return material.C * (1.0 - ex), 2.0 * material.C * material.beta * r * ex


def bond_potential(length, s, material: Material, delta: float) -> np.ndarray:
    """Pairwise potential per unit length, constant influence function."""
    length = np.asarray(length, dtype=float)
    g, _ = potential_g(np.sqrt(length) * s, material)
    return g / (delta**3 * math.pi * length)


def pair_force(x_i, x_j, u_i, u_j, material: Material, delta: float) -> np.ndarray:
    """Force density vector exerted on ``x_i`` by bond partner ``x_j``."""
    xi = np.asarray(x_j, dtype=float) - np.asarray(x_i, dtype=float)
    length = np.linalg.norm(xi, axis=-1)
    if np.any(length == 0):
        raise PDError("coincident nodes have no bond direction")
    e = xi / length[..., None]
    s = bond_stretch(x_i, x_j, u_i, u_j)
    root = np.sqrt(length)
    _, gp = potential_g(root * s, material)
    dW = root * gp / (delta**3 * math.pi * length)
    return 2.0 * dW[..., None] * e


def linear_bond_stiffness(material: Material, delta: float) -> float:
    """Small-stretch slope ``|f| / s`` of the pair force."""
    return 4.0 * material.C * material.beta / (delta**3 * math.pi)


# -------------------------------------------------------------- kernels

@numba.njit(cache=True)
def _build_pairs(nodes, vol, offsets, nbr):
    n = nodes.shape[0]
    m = 0
    for i in range(n):
        for k in range(offsets[i], offsets[i + 1]):
            if nbr[k] > i:
                m += 1
    prow = np.zeros(n + 1, dtype=np.int64)
    pj = np.empty(m, dtype=np.int32)
    geo = np.empty((m, 5))
    p = 0
    for i in range(n):
        for k in range(offsets[i], offsets[i + 1]):
            j = nbr[k]
            if j <= i:
                continue
            d0 = nodes[j, 0] - nodes[i, 0]
            d1 = nodes[j, 1] - nodes[i, 1]
            length = math.sqrt(d0 * d0 + d1 * d1)
            pj[p] = j
            geo[p, 0] = d0 / length / length
            geo[p, 1] = d1 / length / length
            geo[p, 2] = math.sqrt(length)
            geo[p, 3] = length * vol[j]
            geo[p, 4] = length * vol[i]
            p += 1
        prow[i + 1] = p
    return prow, pj, geo


@numba.njit(cache=True, inline="always")
def _exp_neg(x):
    """``exp(-x)``; a degree-10 Taylor polynomial below 0.125 (error < 3e-16)."""
    if x < 0.125:
        p = 1.0 / 3628800.0
        p = p * -x + 1.0 / 362880.0
        p = p * -x + 1.0 / 40320.0
        p = p * -x + 1.0 / 5040.0
        p = p * -x + 1.0 / 720.0
        p = p * -x + 1.0 / 120.0
        p = p * -x + 1.0 / 24.0
        p = p * -x + 1.0 / 6.0
        p = p * -x + 0.5
        p = p * -x + 1.0
        return p * -x + 1.0
    return math.exp(-x)


@numba.njit(cache=True)
def _force_kernel(prow, pj, geo, u, c0, beta, r_c, L, dmg, want_damage):
    """Half-bond sweep over the pair table, forces scattered to both ends.

    Pairs ``i < j`` are grouped by ``i`` with row pointers ``prow``.  ``geo``
    rows hold ``e/|xi|`` (two entries), ``sqrt(|xi|)``, ``|xi| V_j`` and
    ``|xi| V_i``; the pair force is ``c0 s exp(-beta |xi| s^2) e``.
    """
    n = u.shape[0]
    for i in range(n):
        L[i, 0] = 0.0
        L[i, 1] = 0.0
    if want_damage:
        for i in range(n):
            dmg[i] = -np.inf
    for i in range(n):
        ui0 = u[i, 0]
        ui1 = u[i, 1]
        acc0 = 0.0
        acc1 = 0.0
        dm = -np.inf
        for p in range(prow[i], prow[i + 1]):
            j = pj[p]
            a0 = geo[p, 0]
            a1 = geo[p, 1]
            s = (u[j, 0] - ui0) * a0 + (u[j, 1] - ui1) * a1
            r = geo[p, 2] * s
            f = c0 * s * _exp_neg(beta * r * r)
            f0 = f * a0
            f1 = f * a1
            wj = geo[p, 3]
            wi = geo[p, 4]
            acc0 += f0 * wj
            acc1 += f1 * wj
            L[j, 0] -= f0 * wi
            L[j, 1] -= f1 * wi
            if want_damage:
                d = r / r_c
                if d > dm:
                    dm = d
                if d > dmg[j]:
                    dmg[j] = d
        L[i, 0] += acc0
        L[i, 1] += acc1
        if want_damage and dm > dmg[i]:
            dmg[i] = dm
    if want_damage:
        for i in range(n):
            if dmg[i] == -np.inf:
                dmg[i] = 0.0


@numba.njit(cache=True, parallel=True)
def _force_kernel_nodewise(nodes, u, vol, offsets, nbr, C, beta, delta, r_c, L, dmg):
    """Node-parallel sweep; each node sums its own bonds in index order."""
    n = nodes.shape[0]
    pref = 2.0 / (delta**3 * math.pi)
    two_cb = 2.0 * C * beta
    for i in numba.prange(n):
        a0 = 0.0
        a1 = 0.0
        dm = -np.inf
        for k in range(offsets[i], offsets[i + 1]):
            j = nbr[k]
            d0 = nodes[j, 0] - nodes[i, 0]
            d1 = nodes[j, 1] - nodes[i, 1]
            length = math.sqrt(d0 * d0 + d1 * d1)
            e0 = d0 / length
            e1 = d1 / length
            s = ((u[j, 0] - u[i, 0]) * e0 + (u[j, 1] - u[i, 1]) * e1) / length
            root = math.sqrt(length)
            r = root * s
            f = pref * root * two_cb * r * math.exp(-beta * r * r) / length * vol[j]
            a0 += f * e0
            a1 += f * e1
            if r / r_c > dm:
                dm = r / r_c
        L[i, 0] = a0
        L[i, 1] = a1
        dmg[i] = dm if offsets[i + 1] > offsets[i] else 0.0


def internal_force(grid: PDGrid, u: np.ndarray, material: Material, nodewise: bool = False, damage: bool = True):
    """Per-node internal force density and damage for displacement ``u``.

    Returns ``(L, d)`` with ``L[i] = sum_j f(i, j) V_j``.  With
    ``damage=False`` the serial kernel skips the damage reduction and ``d``
    is left unset.
    """
    u = np.ascontiguousarray(u, dtype=float)
    L = np.empty_like(u)
    dmg = np.empty(len(u))
    if nodewise:
        _force_kernel_nodewise(
            np.ascontiguousarray(grid.nodes), u, grid.volumes, grid.offsets, grid.neighbors,
            material.C, material.beta, grid.delta, material.r_c, L, dmg,
        )
    else:
        prow, pj, geo = pair_table(grid)
        c0 = linear_bond_stiffness(material, grid.delta)
        _force_kernel(prow, pj, geo, u, c0, material.beta, material.r_c, L, dmg, damage)
    return L, dmg


def pair_table(grid: PDGrid):
    """Unique pairs ``i < j`` grouped by ``i``, with bond geometry; cached on the grid."""
    key = (id(grid.neighbors), len(grid.neighbors))
    cached = getattr(grid, "_pairs", None)
    if cached is None or cached[0] != key:
        tbl = _build_pairs(np.ascontiguousarray(grid.nodes), grid.volumes, grid.offsets, grid.neighbors)
        grid._pairs = (key, tbl)
        cached = grid._pairs
    return cached[1]


def damage_field(grid: PDGrid, u: np.ndarray, material: Material) -> np.ndarray:
    """Largest ``sqrt(|xi|) s / r_c`` over each node's bonds."""
    return internal_force(grid, u, material)[1]


def stable_dt(grid: PDGrid, material: Material) -> float:
    """Linearized central-difference limit ``sqrt(2 rho / max_i sum_j V_j c / |xi_ij|)``.

    ``c / |xi|`` is the small-stretch force per unit relative displacement.
    """
    if grid.n_bonds == 0:
        return math.inf
    c = linear_bond_stiffness(material, grid.delta)
    return math.sqrt(2.0 * material.rho / (_max_stiffness_sum(grid.nodes, grid.volumes, grid.offsets, grid.neighbors) * c))


@numba.njit(cache=True)
def _max_stiffness_sum(nodes, vol, offsets, nbr):
    best = 0.0
    for i in range(nodes.shape[0]):
        acc = 0.0
        for k in range(offsets[i], offsets[i + 1]):
            j = nbr[k]
            acc += vol[j] / math.hypot(nodes[j, 0] - nodes[i, 0], nodes[j, 1] - nodes[i, 1])
        best = max(best, acc)
    return best


# ------------------------------------------------------------- loading

@dataclass
class LayerCondition:
    """Body force, fixed or prescribed displacement on a node layer.

    ``value`` is a per-node ``(n_layer, 2)`` array or a single vector:
    a force density [N/m^3] for ``"force"`` and a displacement [m] for
    ``"prescribed"``.  ``ramp`` is ``"linear"`` (reaching ``value`` at the
    final time) or ``"constant"``.
    """

    kind: str
    layer: np.ndarray
    value: np.ndarray = field(default_factory=lambda: np.zeros(2))
    ramp: str = "linear"

    def __post_init__(self):
        if self.kind not in ("force", "fixed", "prescribed"):
            raise ValueError(f"unknown layer condition {self.kind!r}")
        if self.ramp not in ("linear", "constant"):
            raise ValueError(f"unknown ramp {self.ramp!r}")
        self.layer = np.asarray(self.layer, dtype=np.int64)
        if len(self.layer) == 0:
            raise ValueError(f"{self.kind} condition on an empty layer")
        self.value = np.asarray(self.value, dtype=float)

    def factor(self, t: float, T: float) -> float:
        return min(t / T, 1.0) if self.ramp == "linear" else 1.0

    def layer_values(self) -> np.ndarray:
        return np.broadcast_to(self.value, (len(self.layer), 2))


@dataclass
class LoadSchedule:
    conditions: list[LayerCondition]
    T: float
    n_steps: int
    dt: float = 0.0

    def __post_init__(self):
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if self.dt == 0.0 and self.n_steps > 0:
            self.dt = self.T / self.n_steps
        if self.n_steps > 0 and not math.isclose(self.n_steps * self.dt, self.T, rel_tol=1e-9):
            raise ValueError(f"n_steps*dt = {self.n_steps * self.dt} differs from T = {self.T}")

    def body_force(self, n_nodes: int, t: float) -> np.ndarray:
        b = np.zeros((n_nodes, 2))
        for c in self.conditions:
            if c.kind == "force":
                b[c.layer] += c.factor(t, self.T) * c.layer_values()
        return b

    def apply_constraints(self, u: np.ndarray, t: float) -> None:
        for c in self.conditions:
            if c.kind == "fixed":
                u[c.layer] = 0.0
            elif c.kind == "prescribed":
                u[c.layer] = c.factor(t, self.T) * c.layer_values()


# ---------------------------------------------------------- integration

@dataclass
class PDState:
    u_prev: np.ndarray
    u_curr: np.ndarray
    t: float = 0.0
    k: int = 0
    damage: Optional[np.ndarray] = None

    @classmethod
    def at_rest(cls, n_nodes: int) -> "PDState":
        z = np.zeros((n_nodes, 2))
        return cls(z.copy(), z.copy(), 0.0, 0, np.zeros(n_nodes))


def step(
    grid: PDGrid, state: PDState, schedule: LoadSchedule, material: Material, want_damage: bool = True
) -> PDState:
    """One central-difference step; returns the new state.

    The damage of the current level is stored on ``state`` as a by-product
    of the force evaluation unless ``want_damage`` is off.
    """
    dt = schedule.dt
    if not dt > 0:
        raise PDError("time step must be positive")
    L, dmg = internal_force(grid, state.u_curr, material, damage=want_damage)
    b = schedule.body_force(grid.n_nodes, state.t)
    u_next = 2.0 * state.u_curr - state.u_prev + (dt * dt / material.rho) * (b + L)
    t_next = (state.k + 1) * dt
    schedule.apply_constraints(u_next, t_next)
    if not np.all(np.isfinite(u_next)):
        bad = int(np.flatnonzero(~np.isfinite(u_next).all(axis=1))[0])
        raise PDError(f"non-finite displacement at node {bad} in step {state.k + 1}")
    state.damage = dmg if want_damage else None
    return PDState(state.u_curr, u_next, t_next, state.k + 1, None)


@dataclass
class Snapshot:
    k: int
    t: float
    u: np.ndarray
    damage: np.ndarray

    @property
    def u_max(self) -> float:
        return float(np.max(np.hypot(self.u[:, 0], self.u[:, 1]))) if len(self.u) else 0.0

    @property
    def max_damage(self) -> float:
        return float(np.max(self.damage)) if len(self.damage) else 0.0


@dataclass
class Trajectory:
    snapshots: list[Snapshot]

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    def index_rows(self):
        return [(s.k, s.t, s.u_max, s.max_damage) for s in self.snapshots]


def run(
    grid: PDGrid,
    schedule: LoadSchedule,
    material: Material,
    snapshot_stride: int = 0,
    on_snapshot: Optional[Callable[[Snapshot], None]] = None,
    keep: bool = True,
    check_stability: bool = True,
) -> Trajectory:
    """Integrate ``n_steps`` steps from rest.

    A snapshot is taken at step 0, every ``snapshot_stride`` steps and at the
    final step.  ``snapshot_stride=0`` records only the first and last.
    """
    if check_stability and schedule.n_steps > 0:
        limit = stable_dt(grid, material)
        if schedule.dt > 0.5 * limit:
            log.warning("dt=%.3g exceeds half the linearized stability limit %.3g", schedule.dt, limit)
    n = grid.n_nodes
    state = PDState.at_rest(n)
    schedule.apply_constraints(state.u_curr, 0.0)
    snaps: list[Snapshot] = []

    def record(st: PDState, dmg: np.ndarray):
        snap = Snapshot(st.k, st.t, st.u_curr.copy(), dmg.copy())
        if on_snapshot is not None:
            on_snapshot(snap)
        if keep:
            snaps.append(snap)
        else:
            snaps[:] = [snap]

    rng = (lambda k: snapshot_stride > 0 and k % snapshot_stride == 0)
    for _ in range(schedule.n_steps):
        k = state.k
        wanted = k == 0 or rng(k)
        new = step(grid, state, schedule, material, want_damage=wanted)
        if wanted:
            record(state, state.damage)
        state = new
    _, dmg = internal_force(grid, state.u_curr, material)
    if schedule.n_steps == 0 or not snaps or snaps[-1].k != state.k:
        record(state, dmg)
    return Trajectory(snaps)
