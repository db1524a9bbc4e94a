"""Global PUM / local PD pipeline.

A quasi-static PUM solve supplies displacements on a horizon-thick layer
around a user-chosen box; a PD run inside the box then predicts damage,
the crack path is extracted from it and fed back as enrichment of the
global PUM model.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from pdpum.crack import DamageSeries, build_crack_polyline, default_filters, extract_tip_sequence
from pdpum.geometry import Box, CrackPolyline, check_box
from pdpum.materials import Material
from pdpum.pd.dynamics import LayerCondition, LoadSchedule, Snapshot, Trajectory, run, stable_dt
from pdpum.pd.grid import PDGrid, build_grid, tag_boundary_layer
from pdpum.pum.model import PUMModel
from pdpum.pum.solver import PUMSolution

log = logging.getLogger(__name__)


class CouplingError(RuntimeError):
    pass


@dataclass
class LocalProblem:
    """PD grid on a sub-box with its Dirichlet layer."""

    box: Box
    grid: PDGrid
    bc_layer: np.ndarray
    bc_values: Optional[np.ndarray] = None

    @property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.grid.n_nodes, dtype=bool)
        mask[self.bc_layer] = False
        return np.flatnonzero(mask)

    @property
    def layer_positions(self) -> np.ndarray:
        return self.grid.nodes[self.bc_layer]


@dataclass
class CouplingConfig:
    """Parameters of the global/local loop.

    Attributes:
        box: local PD box.
        h_pd, delta: local PD spacing and horizon.
        T_local: final time of each local PD run.
        n_steps_local: steps per local run.
        N: number of synchronization steps.
        snapshot_stride: damage snapshot interval for the crack extraction.
    """

    box: Box
    h_pd: float
    delta: float
    T_local: float
    n_steps_local: int
    N: int = 1
    snapshot_stride: int = 250

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")


def define_local_domain(box: Box, h_pd: float, delta: float, crack: Optional[CrackPolyline] = None, domain: Optional[Box] = None) -> LocalProblem:
    """PD grid on ``box`` and the layer of nodes within ``delta`` of its boundary."""
    box = check_box(box)
    if domain is not None:
        d = check_box(domain)
        tol = 1e-12 * max(d[2] - d[0], d[3] - d[1])
        if box[0] < d[0] - tol or box[1] < d[1] - tol or box[2] > d[2] + tol or box[3] > d[3] + tol:
            raise CouplingError(f"local box {box} leaves the domain {d}")
    if box[2] - box[0] <= 2 * delta or box[3] - box[1] <= 2 * delta:
        raise CouplingError(f"local box {box} is too small for horizon {delta}")
    grid = build_grid(box, h_pd, delta, crack)
    layer = tag_boundary_layer(grid, "all", delta, name="bc")
    if len(layer) == grid.n_nodes:
        raise CouplingError("local box has no interior nodes")
    return LocalProblem(box, grid, layer)


def extract_pd_boundary_data(solution, local: LocalProblem) -> np.ndarray:
    """Global displacement at the layer nodes; also stored on ``local``.

    ``solution`` is anything with ``evaluate(points) -> (m, 2)``.
    """
    values = np.asarray(solution.evaluate(local.layer_positions), dtype=float)
    local.bc_values = values
    return values


def write_handshake(path: str, indices: np.ndarray, positions: np.ndarray, values: np.ndarray) -> None:
    """Node list ``index x y u_x u_y`` with round-trip precision."""
    with open(path, "w") as fh:
        fh.write("# index x y u_x u_y\n")
        for i, p, v in zip(indices, positions, values):
            fh.write(f"{int(i)} {p[0]:.17g} {p[1]:.17g} {v[0]:.17g} {v[1]:.17g}\n")


def read_handshake(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 5:
        raise CouplingError(f"{path}: expected 5 columns, found {data.shape[1]}")
    return data[:, 0].astype(np.int64), data[:, 1:3], data[:, 3:5]


def run_local_pd(
    local: LocalProblem,
    material: Material,
    T: float,
    n_steps: int,
    snapshot_stride: int = 0,
    on_snapshot: Optional[Callable[[Snapshot], None]] = None,
    keep: bool = False,
) -> Trajectory:
    """PD run from rest with the layer ramped linearly to ``bc_values``."""
    if local.bc_values is None:
        raise CouplingError("boundary data not extracted")
    cond = LayerCondition("prescribed", local.bc_layer, local.bc_values, ramp="linear")
    schedule = LoadSchedule([cond], T, n_steps)
    return run(local.grid, schedule, material, snapshot_stride, on_snapshot, keep=keep)


@dataclass
class SyncStep:
    n: int
    crack: Optional[CrackPolyline]
    solution: PUMSolution
    u_max: float
    local_u_max: float = float("nan")
    local_max_damage: float = float("nan")
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    trajectory: Optional[Trajectory] = None


@dataclass
class CouplingResult:
    steps: list[SyncStep]
    final: PUMSolution
    final_crack: Optional[CrackPolyline]
    final_u_max: float
    local: LocalProblem
    artifacts: list[str] = field(default_factory=list)

    @property
    def grew(self) -> bool:
        return any(s.left or s.right for s in self.steps)


def _update_crack(crack: CrackPolyline, series: DamageSeries, stride: int, local: LocalProblem):
    lf, rf = default_filters(crack)
    left = extract_tip_sequence(series, stride, lf)
    right = extract_tip_sequence(series, stride, rf)
    # only points beyond the current tips count as growth
    p0, p1 = crack.tips
    t0 = crack.tip_frames()
    left = [p for p in left if np.dot(p - p0, t0[0].tangent) > 0]
    right = [p for p in right if np.dot(p - p1, t0[1].tangent) > 0]
    pos = local.layer_positions
    for p in left + right:
        if np.any(np.all(np.isclose(pos, p, rtol=0, atol=1e-12), axis=1)):
            raise CouplingError(f"crack reached the local boundary layer at {p.tolist()}")
    if not left and not right:
        return crack, left, right
    return build_crack_polyline(crack, left, right), left, right


def run_coupled(
    model: PUMModel,
    crack: Optional[CrackPolyline],
    cfg: CouplingConfig,
    output_dir: Optional[str] = None,
    writer: Optional[Callable] = None,
) -> CouplingResult:
    """Global/local loop with ``N`` synchronization steps.

    Each step solves the global problem with the current crack at load
    factor ``n / N``, hands the layer displacements to a full local PD ramp
    and extends the crack with the extracted tip positions.  A final global
    solve uses the updated crack.  With ``output_dir`` the layer data pass
    through a handshake file and every written file is listed in
    ``manifest.json``; ``writer(kind, name, data)`` may write extra fields
    and returns the paths it wrote.
    """
    local = define_local_domain(cfg.box, cfg.h_pd, cfg.delta, crack, model.domain)
    limit = stable_dt(local.grid, model.material)
    if cfg.T_local / cfg.n_steps_local > limit:
        log.warning("local PD step %.3g exceeds the linear stability limit %.3g", cfg.T_local / cfg.n_steps_local, limit)
    artifacts: list[str] = []
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
    steps: list[SyncStep] = []
    current = crack
    for n in range(1, cfg.N + 1):
        factor = n / cfg.N
        system = model.discretize(current)
        system.load *= factor
        sol = model.solve_static(system=system)
        um = model.u_max(sol)
        if output_dir:
            to_file = extract_pd_boundary_data(sol, local)
            path = os.path.join(output_dir, f"handshake_{n:03d}.txt")
            write_handshake(path, local.bc_layer, local.layer_positions, to_file)
            artifacts.append(path)
            idx, _, vals = read_handshake(path)
            if not np.array_equal(idx, local.bc_layer):
                raise CouplingError(f"{path}: node list does not match the local layer")
            local.bc_values = vals
        else:
            extract_pd_boundary_data(sol, local)
        series = DamageSeries(local.grid.nodes)
        stride = cfg.snapshot_stride

        def collect(s: Snapshot):
            if stride and s.k % stride == 0:
                series.append(s.k, s.damage)

        traj = run_local_pd(local, model.material, cfg.T_local, cfg.n_steps_local, stride, collect)
        step = SyncStep(n, current, sol, um, traj.final.u_max, traj.final.max_damage, trajectory=traj)
        if writer is not None:
            artifacts += writer("global", f"global_{n:03d}", sol) or []
            artifacts += writer("local", f"local_{n:03d}", (local.grid, traj.final)) or []
        if current is not None:
            current, step.left, step.right = _update_crack(current, series, stride, local)
        steps.append(step)
        log.info("sync step %d: U_max %.4g, local U_max %.4g, growth %d/%d points", n, um, step.local_u_max, len(step.left), len(step.right))
    if current is steps[-1].crack:
        final = steps[-1].solution
    else:
        final = model.solve_static(current)
    fu = model.u_max(final)
    if writer is not None:
        artifacts += writer("global", "global_final", final) or []
    result = CouplingResult(steps, final, current, fu, local, artifacts)
    if output_dir:
        write_manifest(os.path.join(output_dir, "manifest.json"), result)
    return result


def write_manifest(path: str, result: CouplingResult, extra: Optional[dict] = None) -> None:
    doc = {
        "sync_steps": [
            {
                "n": s.n,
                "u_max": s.u_max,
                "local_u_max": s.local_u_max,
                "local_max_damage": s.local_max_damage,
                "growth_left": [p.tolist() for p in s.left],
                "growth_right": [p.tolist() for p in s.right],
            }
            for s in result.steps
        ],
        "final_u_max": result.final_u_max,
        "final_crack": None if result.final_crack is None else result.final_crack.points.tolist(),
        "artifacts": sorted(os.path.basename(a) for a in result.artifacts),
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    result.artifacts.append(path)


# ------------------------------------------------------- PD to PUM

@dataclass
class EnrichmentResult:
    """PD run on the full domain followed by an enriched PUM solve."""

    pd_u_max: float
    pd_max_damage: float
    left: list
    right: list
    crack: CrackPolyline
    solution: PUMSolution
    pum_u_max: float
    trajectory: Trajectory
    series: DamageSeries


def enrich_from_pd(
    model: PUMModel,
    grid: PDGrid,
    schedule: LoadSchedule,
    initial: CrackPolyline,
    stride: int = 250,
    first_step: int = 0,
    on_snapshot: Optional[Callable[[Snapshot], None]] = None,
) -> EnrichmentResult:
    """Run PD, extract both crack branches and solve PUM with the grown crack.

    Snapshots before ``first_step`` are ignored by the extraction.
    """
    series = DamageSeries(grid.nodes)

    def collect(s: Snapshot):
        if s.k >= first_step and s.k % stride == 0:
            series.append(s.k, s.damage)
        if on_snapshot is not None:
            on_snapshot(s)

    traj = run(grid, schedule, model.material, stride, collect, keep=False)
    lf, rf = default_filters(initial)
    left = extract_tip_sequence(series, stride, lf)
    right = extract_tip_sequence(series, stride, rf)
    crack = build_crack_polyline(initial, left, right)
    sol = model.solve_static(crack)
    return EnrichmentResult(traj.final.u_max, traj.final.max_damage, left, right, crack, sol, model.u_max(sol), traj, series)
