"""Assembly and solution of plane-strain elasticity over a PUM space.

Dirichlet data are imposed weakly (Nitsche) with penalty ``10 E / h_cell``.
K and the rho-weighted consistent mass matrix are stored patch-block-wise
while assembling, then converted to CSR.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numba
import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from pdpum.geometry import Box
from pdpum.materials import Material
from pdpum.pum.quadrature import EDGE_CODES, Quadrature
from pdpum.pum.space import PUSpace, basis_at

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
NITSCHE_FACTOR = 10.0


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------- conditions

Value = Union[Sequence[float], Callable[[np.ndarray], np.ndarray]]


@dataclass
class EdgeCondition:
    """Condition on ``edge`` (bottom/right/top/left), optionally on the
    sub-interval ``interval`` of the coordinate running along it.

    ``value`` is a vector or a callable mapping ``(m, 2)`` points to
    ``(m, 2)`` values.
    """

    edge: str
    value: Value = (0.0, 0.0)
    interval: Optional[tuple[float, float]] = None

    def __post_init__(self):
        if self.edge not in EDGE_CODES:
            raise ValueError(f"unknown edge {self.edge!r}")

    def mask(self, quad: Quadrature) -> np.ndarray:
        m = quad.boundary_edge == EDGE_CODES[self.edge]
        if self.interval is not None:
            axis = 0 if self.edge in ("bottom", "top") else 1
            s = quad.boundary_points[:, axis]
            m &= (s >= self.interval[0]) & (s <= self.interval[1])
        return m

    def values(self, X: np.ndarray) -> np.ndarray:
        if callable(self.value):
            return np.asarray(self.value(X), dtype=float).reshape(len(X), 2)
        return np.broadcast_to(np.asarray(self.value, dtype=float), (len(X), 2))


@dataclass
class BoundaryConditions:
    dirichlet: list[EdgeCondition] = field(default_factory=list)
    traction: list[EdgeCondition] = field(default_factory=list)
    body_force: tuple[float, float] = (0.0, 0.0)

    @property
    def pure_traction(self) -> bool:
        return not self.dirichlet


# -------------------------------------------------------------------- kernels

@numba.njit(cache=True)
def _slot(ipq, i, j):
    return (ipq[j, 1] - ipq[i, 1] + 1) * 3 + (ipq[j, 0] - ipq[i, 0] + 1)


@numba.njit(cache=True)
def _assemble_volume(
    X, W, Hq, Bq, lam, mu, rho,
    ox, oy, cw, n, a, pid, centers, has_h, ptips, tips, T, nloc, dof_off,
    ipq, blk_off, Kd, Md, F, want_k,
):
    nl = T.shape[2]
    ids = np.empty(4, dtype=np.int64)
    N = np.empty((4, nl))
    dN = np.empty((4, nl, 2))
    for q in range(X.shape[0]):
        m = basis_at(X[q, 0], X[q, 1], Hq[q], ox, oy, cw, n, a, pid, centers, has_h, ptips, tips, T, nloc, ids, N, dN)
        w = W[q]
        bx = Bq[q, 0] * w
        by = Bq[q, 1] * w
        for ka in range(m):
            i = ids[ka]
            oi = dof_off[i]
            for s in range(nloc[i]):
                F[oi + 2 * s] += N[ka, s] * bx
                F[oi + 2 * s + 1] += N[ka, s] * by
            for kb in range(m):
                j = ids[kb]
                off = blk_off[i, _slot(ipq, i, j)]
                nj2 = 2 * nloc[j]
                for s in range(nloc[i]):
                    na = N[ka, s]
                    ax = dN[ka, s, 0]
                    ay = dN[ka, s, 1]
                    r0 = off + (2 * s) * nj2
                    r1 = r0 + nj2
                    for t in range(nloc[j]):
                        nb = N[kb, t]
                        mm = rho * w * na * nb
                        Md[r0 + 2 * t] += mm
                        Md[r1 + 2 * t + 1] += mm
                        if want_k:
                            bxx = dN[kb, t, 0]
                            byy = dN[kb, t, 1]
                            gg = ax * bxx + ay * byy
                            # (c, d) entry: lam dNa_c dNb_d + mu (delta gg + dNa_d dNb_c)
                            Kd[r0 + 2 * t] += w * (lam * ax * bxx + mu * (gg + ax * bxx))
                            Kd[r0 + 2 * t + 1] += w * (lam * ax * byy + mu * ay * bxx)
                            Kd[r1 + 2 * t] += w * (lam * ay * bxx + mu * ax * byy)
                            Kd[r1 + 2 * t + 1] += w * (lam * ay * byy + mu * (gg + ay * byy))


@numba.njit(cache=True)
def _traction_vec(lam, mu, gx, gy, nx, ny, c):
    """``sigma(N e_c) n`` for a scalar function with gradient ``(gx, gy)``."""
    gc = gx if c == 0 else gy
    gn = gx * nx + gy * ny
    nc = nx if c == 0 else ny
    tx = lam * gc * nx + mu * ((gn if c == 0 else 0.0) + gx * nc)
    ty = lam * gc * ny + mu * ((gn if c == 1 else 0.0) + gy * nc)
    return tx, ty


@numba.njit(cache=True)
def _assemble_boundary(
    X, W, Hq, Nrm, Tq, Gq, is_d, gamma, lam, mu,
    ox, oy, cw, n, a, pid, centers, has_h, ptips, tips, T, nloc, dof_off,
    ipq, blk_off, Kd, F,
):
    nl = T.shape[2]
    ids = np.empty(4, dtype=np.int64)
    N = np.empty((4, nl))
    dN = np.empty((4, nl, 2))
    for q in range(X.shape[0]):
        if not is_d[q] and Tq[q, 0] == 0.0 and Tq[q, 1] == 0.0:
            continue
        m = basis_at(X[q, 0], X[q, 1], Hq[q], ox, oy, cw, n, a, pid, centers, has_h, ptips, tips, T, nloc, ids, N, dN)
        w = W[q]
        nx = Nrm[q, 0]
        ny = Nrm[q, 1]
        for ka in range(m):
            i = ids[ka]
            oi = dof_off[i]
            for s in range(nloc[i]):
                na = N[ka, s]
                F[oi + 2 * s] += w * na * Tq[q, 0]
                F[oi + 2 * s + 1] += w * na * Tq[q, 1]
                if is_d[q]:
                    for c in range(2):
                        tx, ty = _traction_vec(lam, mu, dN[ka, s, 0], dN[ka, s, 1], nx, ny, c)
                        gc = Gq[q, c]
                        F[oi + 2 * s + c] += w * (-(tx * Gq[q, 0] + ty * Gq[q, 1]) + gamma * na * gc)
            if not is_d[q]:
                continue
            for kb in range(m):
                j = ids[kb]
                off = blk_off[i, _slot(ipq, i, j)]
                nj2 = 2 * nloc[j]
                for s in range(nloc[i]):
                    na = N[ka, s]
                    for c in range(2):
                        ta = _traction_vec(lam, mu, dN[ka, s, 0], dN[ka, s, 1], nx, ny, c)
                        row = off + (2 * s + c) * nj2
                        for t in range(nloc[j]):
                            nb = N[kb, t]
                            for d in range(2):
                                tb = _traction_vec(lam, mu, dN[kb, t, 0], dN[kb, t, 1], nx, ny, d)
                                v = -na * (tb[0] if c == 0 else tb[1]) - nb * (ta[0] if d == 0 else ta[1])
                                if c == d:
                                    v += gamma * na * nb
                                Kd[row + 2 * t + d] += w * v


@numba.njit(cache=True)
def _block_layout(ipq, pid, nloc, dof_off):
    n = pid.shape[0]
    npatch = ipq.shape[0]
    blk_off = np.full((npatch, 9), -1, dtype=np.int64)
    total = 0
    for i in range(npatch):
        for dq in range(-1, 2):
            for dp in range(-1, 2):
                p = ipq[i, 0] + dp
                q = ipq[i, 1] + dq
                if p < 0 or q < 0 or p >= n or q >= n:
                    continue
                j = pid[p, q]
                if j < 0:
                    continue
                blk_off[i, (dq + 1) * 3 + dp + 1] = total
                total += 4 * nloc[i] * nloc[j]
    rows = np.empty(total, dtype=np.int64)
    cols = np.empty(total, dtype=np.int64)
    for i in range(npatch):
        for dq in range(-1, 2):
            for dp in range(-1, 2):
                p = ipq[i, 0] + dp
                q = ipq[i, 1] + dq
                if p < 0 or q < 0 or p >= n or q >= n:
                    continue
                j = pid[p, q]
                if j < 0:
                    continue
                off = blk_off[i, (dq + 1) * 3 + dp + 1]
                ni2 = 2 * nloc[i]
                nj2 = 2 * nloc[j]
                for r in range(ni2):
                    for c in range(nj2):
                        rows[off + r * nj2 + c] = dof_off[i] + r
                        cols[off + r * nj2 + c] = dof_off[j] + c
    return blk_off, rows, cols


# ------------------------------------------------------------------ assembly

@dataclass
class AssembledSystem:
    """Stiffness, rho-weighted mass and load of a PUM discretization."""

    space: PUSpace
    quad: Quadrature
    material: Material
    K: sp.csr_matrix
    M: sp.csr_matrix
    load: np.ndarray
    bcs: BoundaryConditions
    gamma: float
    rigid: Optional[np.ndarray] = None
    _mass_lu: object = None

    @property
    def n_dof(self) -> int:
        return self.K.shape[0]

    def mass_solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._mass_lu is None:
            self._mass_lu = spla.splu(self.M.tocsc())
        return self._mass_lu.solve(rhs)


def _layout(space: PUSpace):
    cache = space.extras.get("layout")
    if cache is None:
        ipq = np.ascontiguousarray(space.cover.active_index)
        cache = _block_layout(ipq, np.ascontiguousarray(space.cover.patch_id), space.nloc, space.dof_offset)
        cache = (ipq,) + cache
        space.extras["layout"] = cache
    return cache


def assemble(
    space: PUSpace,
    quad: Quadrature,
    material: Material,
    bcs: BoundaryConditions,
    gamma: Optional[float] = None,
) -> AssembledSystem:
    """Assemble K, the rho-weighted mass matrix and the load vector."""
    ipq, blk_off, rows, cols = _layout(space)
    ndof = space.n_dof
    Kd = np.zeros(len(rows))
    Md = np.zeros(len(rows))
    F = np.zeros(ndof)
    kd = space.kernel_data()
    Hq = space.side_values(quad.points)
    Bq = np.broadcast_to(np.asarray(bcs.body_force, dtype=float), (len(quad.weights), 2)).copy()
    lam, mu = material.lam, material.mu
    _assemble_volume(
        quad.points, quad.weights, Hq, Bq, lam, mu, material.rho,
        *kd, space.T, space.nloc, space.dof_offset, ipq, blk_off, Kd, Md, F, True,
    )
    if gamma is None:
        gamma = NITSCHE_FACTOR * material.E / space.cover.cell_width
    Xb = quad.boundary_points
    Tq = np.zeros((len(Xb), 2))
    Gq = np.zeros((len(Xb), 2))
    is_d = np.zeros(len(Xb), dtype=np.bool_)
    for c in bcs.traction:
        m = c.mask(quad)
        Tq[m] += c.values(Xb[m])
    for c in bcs.dirichlet:
        m = c.mask(quad)
        Gq[m] = c.values(Xb[m])
        is_d |= m
    _assemble_boundary(
        Xb, quad.boundary_weights, space.side_values(Xb), quad.boundary_normals, Tq, Gq, is_d, gamma, lam, mu,
        *kd, space.T, space.nloc, space.dof_offset, ipq, blk_off, Kd, F,
    )
    K = sp.csr_matrix((Kd, (rows, cols)), shape=(ndof, ndof))
    M = sp.csr_matrix((Md, (rows, cols)), shape=(ndof, ndof))
    system = AssembledSystem(space, quad, material, K, M, F, bcs, float(gamma))
    if bcs.pure_traction:
        system.rigid = rigid_modes(system)
    return system


def mass_matrix(space: PUSpace, quad: Quadrature) -> sp.csr_matrix:
    """Unweighted consistent mass matrix."""
    ipq, blk_off, rows, cols = _layout(space)
    Md = np.zeros(len(rows))
    Kd = np.zeros(0)
    F = np.zeros(space.n_dof)
    Bq = np.zeros((len(quad.weights), 2))
    _assemble_volume(
        quad.points, quad.weights, space.side_values(quad.points), Bq, 0.0, 0.0, 1.0,
        *space.kernel_data(), space.T, space.nloc, space.dof_offset, ipq, blk_off, Kd, Md, F, False,
    )
    return sp.csr_matrix((Md, (rows, cols)), shape=(space.n_dof, space.n_dof))


def load_from_field(space: PUSpace, quad: Quadrature, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """``int N . fn`` over the domain."""
    ipq, blk_off, rows, cols = _layout(space)
    F = np.zeros(space.n_dof)
    Bq = np.ascontiguousarray(np.asarray(fn(quad.points), dtype=float).reshape(-1, 2))
    _assemble_volume(
        quad.points, quad.weights, space.side_values(quad.points), Bq, 0.0, 0.0, 0.0,
        *space.kernel_data(), space.T, space.nloc, space.dof_offset, ipq, blk_off, np.zeros(0), np.zeros(len(rows)), F, False,
    )
    return F


def l2_projection(space: PUSpace, quad: Quadrature, fn: Callable[[np.ndarray], np.ndarray], M0=None) -> np.ndarray:
    """Coefficients of the L2 projection of a vector field onto the space."""
    if M0 is None:
        M0 = mass_matrix(space, quad)
    return spla.splu(M0.tocsc()).solve(load_from_field(space, quad, fn))


RIGID_FIELDS = (
    lambda X: np.column_stack([np.ones(len(X)), np.zeros(len(X))]),
    lambda X: np.column_stack([np.zeros(len(X)), np.ones(len(X))]),
)


def rigid_modes(system: AssembledSystem) -> np.ndarray:
    """Coefficient vectors of the two translations and the rotation."""
    space, quad = system.space, system.quad
    c = np.mean(np.asarray(space.cover.domain).reshape(2, 2), axis=0)
    rot = lambda X: np.column_stack([-(X[:, 1] - c[1]), X[:, 0] - c[0]])
    M0 = system.M / system.material.rho
    lu = spla.splu(M0.tocsc())
    return np.column_stack([lu.solve(load_from_field(space, quad, f)) for f in (*RIGID_FIELDS, rot)])


# -------------------------------------------------------------------- solves

@dataclass
class PUMSolution:
    space: PUSpace
    coefficients: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    velocity: Optional[np.ndarray] = None
    acceleration: Optional[np.ndarray] = None
    t: float = 0.0

    def evaluate(self, X) -> np.ndarray:
        return self.space.evaluate(self.coefficients, X)


def block_jacobi(system: AssembledSystem):
    """Inverse of the per-patch diagonal blocks of K as a LinearOperator."""
    space = system.space
    K = system.K.tocsr()
    off = space.dof_offset
    inv = []
    for i in range(space.n_patches):
        blk = K[off[i]:off[i + 1], off[i]:off[i + 1]].toarray()
        try:
            inv.append(scipy.linalg.inv(blk))
        except np.linalg.LinAlgError:
            inv.append(np.linalg.pinv(blk))
    inv_bd = sp.block_diag(inv, format="csr")
    return spla.LinearOperator(K.shape, matvec=inv_bd.dot, dtype=float)


def _operator(system: AssembledSystem):
    """K, plus a rank-3 penalty on the rigid modes for pure-traction problems."""
    K = system.K
    if system.rigid is None:
        return K, None
    B = system.M @ system.rigid
    scale = abs(K.diagonal()).max() / max(float(np.abs(B).max()) ** 2, 1e-300)
    return K, (B, scale)


def solve_static(
    system: AssembledSystem,
    load: Optional[np.ndarray] = None,
    rtol: float = 1e-10,
    method: str = "auto",
    maxiter: Optional[int] = None,
) -> PUMSolution:
    """Solve ``K u = load`` (default: the assembled load).

    ``method`` is ``"dense"``, ``"cg"`` or ``"auto"`` (dense below 2000 DOF).
    Pure-traction problems are made definite by penalizing the mass-weighted
    rigid-mode components of ``u``, which selects the solution with zero
    mean translation and rotation.
    """
    f = system.load if load is None else np.asarray(load, dtype=float)
    n = system.n_dof
    K, low = _operator(system)
    if method == "auto":
        method = "dense" if n < DENSE_LIMIT else "cg"
    if method == "dense":
        A = K.toarray()
        if low is not None:
            B, c = low
            A = A + c * B @ B.T
        u = scipy.linalg.solve(A, f, assume_a="sym")
        its = 0
    elif method == "cg":
        if low is None:
            A = K
        else:
            B, c = low
            A = spla.LinearOperator(K.shape, matvec=lambda x: K @ x + c * (B @ (B.T @ x)), dtype=float)
        if maxiter is None:
            maxiter = int(50 * math.sqrt(n))
        count = [0]

        def cb(_):
            count[0] += 1

        u, info = spla.cg(A, f, rtol=rtol, atol=0.0, maxiter=maxiter, M=block_jacobi(system), callback=cb)
        its = count[0]
        if info != 0:
            raise SolverError(f"CG did not converge in {its} iterations (rtol {rtol})")
    else:
        raise ValueError(f"unknown method {method!r}")
    r = K @ u - f
    if low is not None:
        B, c = low
        r = r + c * B @ (B.T @ u)
    fn = np.linalg.norm(f)
    res = float(np.linalg.norm(r) / fn) if fn > 0 else float(np.linalg.norm(r))
    log.info("static solve: %d DOF, %s, %d iterations, residual %.2e", n, method, its, res)
    if method == "cg" and res > 100 * rtol:
        # CG's recursive residual drifts from the true one on ill-conditioned enriched systems
        log.warning("true relative residual %.2e exceeds the CG tolerance %.0e", res, rtol)
    return PUMSolution(system.space, u, its, res)


# ----------------------------------------------------------------- dynamics

@dataclass
class DynamicState:
    u: np.ndarray
    v_half: np.ndarray
    t: float = 0.0
    k: int = 0


def initial_state(system: AssembledSystem, dt: float, load_factor: Callable[[float], float], u0=None, v0=None) -> DynamicState:
    """State at ``t = 0`` with ``v_{-1/2} = v_0 - dt/2 a_0``."""
    n = system.n_dof
    u0 = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float)
    a0 = system.mass_solve(load_factor(0.0) * system.load - system.K @ u0)
    return DynamicState(u0, v0 - 0.5 * dt * a0, 0.0, 0)


def step_dynamic(system: AssembledSystem, state: DynamicState, dt: float, load_factor: Callable[[float], float]) -> DynamicState:
    """Central differences with half-step velocities."""
    a = system.mass_solve(load_factor(state.t) * system.load - system.K @ state.u)
    v = state.v_half + dt * a
    u = state.u + dt * v
    return DynamicState(u, v, (state.k + 1) * dt, state.k + 1)


def run_dynamic(
    system: AssembledSystem,
    T: float,
    dt: float,
    ramp: str = "linear",
    reference_norm: Optional[float] = None,
    on_step: Optional[Callable[[DynamicState], None]] = None,
) -> PUMSolution:
    """Integrate from rest to ``T`` under the (linearly ramped) load.

    Aborts when ``|u|`` exceeds ``1e6`` times ``reference_norm`` (default:
    the norm of the quasi-static solution for the final load).
    """
    n_steps = int(round(T / dt))
    if n_steps < 1 or not math.isclose(n_steps * dt, T, rel_tol=1e-9):
        raise SolverError(f"T = {T} is not a multiple of dt = {dt}")
    factor = (lambda t: min(t / T, 1.0)) if ramp == "linear" else (lambda t: 1.0)
    if reference_norm is None:
        reference_norm = float(np.linalg.norm(solve_static(system).coefficients))
    limit = 1e6 * max(reference_norm, 1e-300)
    state = initial_state(system, dt, factor)
    for _ in range(n_steps):
        state = step_dynamic(system, state, dt, factor)
        nu = np.linalg.norm(state.u)
        if not np.isfinite(nu) or nu > limit:
            raise SolverError(f"explicit integration blew up at step {state.k} (|u| = {nu:.3g})")
        if on_step is not None:
            on_step(state)
    return PUMSolution(system.space, state.u, state.k, 0.0, state.v_half, None, state.t)


def estimate_critical_dt(system: AssembledSystem, rtol: float = 1e-4, maxiter: int = 5000, seed: int = 0) -> float:
    """``2 / sqrt(lambda_max)`` of ``K x = lambda M x`` by power iteration."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(system.n_dof)
    lam_old = 0.0
    for it in range(maxiter):
        y = system.mass_solve(system.K @ x)
        lam = float(x @ (system.K @ x)) / float(x @ (system.M @ x))
        x = y / np.linalg.norm(y)
        if it > 5 and abs(lam - lam_old) <= rtol * abs(lam):
            return 2.0 / math.sqrt(lam)
        lam_old = lam
    raise SolverError(f"power iteration did not converge in {maxiter} iterations")


# ----------------------------------------------------------------- sampling

def grid_points(domain: Box, spacing: float) -> tuple[np.ndarray, tuple[int, int]]:
    """Lattice points of ``domain`` with the given spacing, corners included."""
    nx = int(round((domain[2] - domain[0]) / spacing)) + 1
    ny = int(round((domain[3] - domain[1]) / spacing)) + 1
    xs = np.linspace(domain[0], domain[2], nx)
    ys = np.linspace(domain[1], domain[3], ny)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()]), (nx, ny)


def u_max(solution: PUMSolution, spacing: float, box: Optional[Box] = None) -> float:
    """Largest displacement magnitude over visualization grid points."""
    pts, _ = grid_points(box or solution.space.cover.domain, spacing)
    u = solution.evaluate(pts)
    return float(np.max(np.hypot(u[:, 0], u[:, 1])))
