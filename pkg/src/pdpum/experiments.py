"""Experiment drivers: build PD and PUM problems from a configuration and write results."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from pdpum.coupling import CouplingConfig, run_coupled
from pdpum.crack import DamageSeries, build_crack_polyline, default_filters, extract_tip_sequence
from pdpum.geometry import CrackPolyline
from pdpum.io.config import SimulationConfig
from pdpum.io.tables import RunSummary, write_crack_csv, write_trajectory_index
from pdpum.io.vtk import write_pd_snapshot, write_vtk
from pdpum.pd.dynamics import LayerCondition, LoadSchedule, Snapshot, run
from pdpum.pd.grid import PDGrid, build_grid, edge_length, tag_boundary_layer, traction_force_density
from pdpum.pum.model import PUMModel
from pdpum.pum.solver import BoundaryConditions, EdgeCondition, PUMSolution, grid_points

log = logging.getLogger(__name__)


def crack_of(cfg: SimulationConfig) -> Optional[CrackPolyline]:
    return None if cfg.geometry.crack is None else cfg.geometry.crack.build()


# ---------------------------------------------------------------- builders

def pd_problem(cfg: SimulationConfig, load_factor: float = 1.0) -> tuple[PDGrid, LoadSchedule]:
    """Grid and layer loads; tractions become uniform densities in a ``delta`` layer."""
    pd = cfg.pd
    grid = build_grid(tuple(cfg.geometry.domain), pd.h, pd.delta, crack_of(cfg))
    conds = []
    for i, ld in enumerate(cfg.loads):
        iv = None if ld.interval is None else tuple(ld.interval)
        layer = tag_boundary_layer(grid, ld.edge, pd.delta, iv, name=f"load{i}_{ld.edge}")
        if ld.kind == "traction":
            b = traction_force_density(np.asarray(ld.value) * load_factor, layer, grid, edge_length(grid, ld.edge, iv))
            conds.append(LayerCondition("force", layer, b[layer], "linear"))
        elif ld.kind == "fixed":
            conds.append(LayerCondition("fixed", layer))
        else:
            conds.append(LayerCondition("prescribed", layer, np.asarray(ld.value) * load_factor, "linear"))
    return grid, LoadSchedule(conds, pd.T, pd.n_steps, pd.dt)


def pum_boundary_conditions(cfg: SimulationConfig, load_factor: float = 1.0) -> BoundaryConditions:
    bcs = BoundaryConditions()
    for ld in cfg.loads:
        iv = None if ld.interval is None else tuple(ld.interval)
        if ld.kind == "traction":
            bcs.traction.append(EdgeCondition(ld.edge, tuple(np.asarray(ld.value) * load_factor), iv))
        elif ld.kind == "fixed":
            bcs.dirichlet.append(EdgeCondition(ld.edge, (0.0, 0.0), iv))
        else:
            bcs.dirichlet.append(EdgeCondition(ld.edge, tuple(np.asarray(ld.value) * load_factor), iv))
    return bcs


def pum_model(cfg: SimulationConfig, load_factor: float = 1.0) -> PUMModel:
    p = cfg.pum
    return PUMModel(
        tuple(cfg.geometry.domain),
        cfg.material.build(),
        pum_boundary_conditions(cfg, load_factor),
        level=p.level,
        alpha=p.alpha,
        order=p.order,
        tip_radius=p.tip_radius,
        eps=p.eps,
        rtol=p.rtol,
        sample_spacing=cfg.sample_spacing,
    )


# ---------------------------------------------------------------- outputs

def write_pum_field(path: str, solution: PUMSolution, spacing: float) -> tuple[np.ndarray, np.ndarray, tuple[int, int]]:
    pts, shape = grid_points(solution.space.cover.domain, spacing)
    u = solution.evaluate(pts)
    write_vtk(path, pts, {"displacement": u}, {"magnitude": np.hypot(u[:, 0], u[:, 1])}, "pdpum PUM solution")
    return pts, u, shape


@dataclass
class RunResult:
    summary: RunSummary
    files: list = field(default_factory=list)
    data: dict = field(default_factory=dict)


def _figures(cfg: SimulationConfig) -> bool:
    return cfg.output.figures


# ---------------------------------------------------------------- runs

def _gcd_stride(a: int, b: int) -> int:
    if not a:
        return b
    if not b:
        return a
    return int(np.gcd(a, b))


def run_pd(
    cfg: SimulationConfig,
    out: Optional[str] = None,
    snapshot_stride: Optional[int] = None,
    load_factor: float = 1.0,
    series: Optional[DamageSeries] = None,
    label: str = "PD",
) -> RunResult:
    """Explicit PD run; writes the trajectory index, VTK snapshots and the final field.

    With ``series`` the damage at the extraction steps is collected into it.
    """
    t0 = time.perf_counter()
    grid, schedule = pd_problem(cfg, load_factor)
    stride = cfg.pd.snapshot_stride if snapshot_stride is None else snapshot_stride
    ext = cfg.extraction
    vtk_stride = cfg.output.vtk_stride
    loop_stride = stride
    if series is not None:
        loop_stride = _gcd_stride(loop_stride, ext.stride)
    if out and vtk_stride:
        loop_stride = _gcd_stride(loop_stride, vtk_stride)
    files: list[str] = []
    index: list[tuple] = []
    tag = label.lower()

    def on_snap(s: Snapshot):
        if not stride or s.k % stride == 0 or s.k == schedule.n_steps:
            index.append((s.k, s.t, s.u_max, s.max_damage))
        if series is not None and s.k >= ext.first_step and s.k % ext.stride == 0:
            series.append(s.k, s.damage)
        if out and vtk_stride and s.k % vtk_stride == 0:
            p = os.path.join(out, f"{tag}_{s.k:07d}.vtk")
            write_pd_snapshot(p, grid.nodes, s.u, s.damage)
            files.append(p)

    traj = run(grid, schedule, cfg.material.build(), loop_stride, on_snap, keep=False)
    final = traj.final
    wall = time.perf_counter() - t0
    summary = RunSummary(cfg.name, cfg.hash())
    summary.add(label, final.u_max, 100.0 * final.max_damage, wall, grid.n_nodes)
    if out:
        p = os.path.join(out, f"{tag}_final.vtk")
        write_pd_snapshot(p, grid.nodes, final.u, final.damage)
        files.append(p)
        p = os.path.join(out, f"{tag}_index.csv")
        write_trajectory_index(index, p)
        files.append(p)
        if _figures(cfg):
            from pdpum import plotting

            files += plotting.pd_figures(out, tag, grid, final, index)
    log.info("%s: U_max %.4e, max damage %.3f, %.1f s", label, final.u_max, final.max_damage, wall)
    return RunResult(summary, files, {"grid": grid, "final": final, "index": index})


def run_pum_static(cfg: SimulationConfig, out: Optional[str] = None, crack: Optional[CrackPolyline] = None, label: str = "PUM static", load_factor: float = 1.0) -> RunResult:
    t0 = time.perf_counter()
    model = pum_model(cfg, load_factor)
    crack = crack_of(cfg) if crack is None else crack
    system = model.discretize(crack)
    sol = model.solve_static(system=system)
    um = model.u_max(sol)
    wall = time.perf_counter() - t0
    summary = RunSummary(cfg.name, cfg.hash())
    summary.add(label, um, wall_time=wall, size=system.n_dof, note=f"CG iterations {sol.iterations}, residual {sol.residual:.1e}")
    files = _pum_outputs(cfg, out, sol, label, crack)
    return RunResult(summary, files, {"solution": sol, "system": system, "model": model})


def run_pum_dynamic(cfg: SimulationConfig, out: Optional[str] = None, crack: Optional[CrackPolyline] = None, label: str = "PUM dynamic") -> RunResult:
    t0 = time.perf_counter()
    model = pum_model(cfg)
    crack = crack_of(cfg) if crack is None else crack
    system = model.discretize(crack)
    dyn = cfg.pum.dynamic
    sol, dt = model.solve_dynamic(dyn.T, dyn.dt, system=system, safety=dyn.safety)
    um = model.u_max(sol)
    wall = time.perf_counter() - t0
    summary = RunSummary(cfg.name, cfg.hash())
    summary.add(label, um, wall_time=wall, size=system.n_dof, note=f"dt {dt:.3e}, {sol.iterations} steps")
    files = _pum_outputs(cfg, out, sol, label, crack)
    return RunResult(summary, files, {"solution": sol, "dt": dt})


def _pum_outputs(cfg, out, sol, label, crack) -> list[str]:
    if not out:
        return []
    tag = label.lower().replace(" ", "_")
    p = os.path.join(out, f"{tag}.vtk")
    pts, u, shape = write_pum_field(p, sol, cfg.sample_spacing)
    files = [p]
    if _figures(cfg):
        from pdpum import plotting

        files.append(plotting.field_figure(os.path.join(out, f"{tag}.png"), pts, u, shape, label, crack))
    return files


def extract_crack(cfg: SimulationConfig, series: DamageSeries, out: Optional[str] = None, initial: Optional[CrackPolyline] = None):
    """Both branches of Algorithm-1 extraction and the grown crack polyline."""
    initial = crack_of(cfg) if initial is None else initial
    if initial is None:
        left = extract_tip_sequence(series, cfg.extraction.stride)
        right: list = []
        crack = None
    else:
        lf, rf = default_filters(initial)
        left = extract_tip_sequence(series, cfg.extraction.stride, lf)
        right = extract_tip_sequence(series, cfg.extraction.stride, rf)
        crack = build_crack_polyline(initial, left, right)
    files = []
    if out:
        p = os.path.join(out, "crack.csv")
        write_crack_csv(left, right, p)
        files.append(p)
        if _figures(cfg) and initial is not None:
            from pdpum import plotting

            files.append(plotting.crack_figure(os.path.join(out, "crack.png"), cfg.geometry.domain, initial, left, right))
    return left, right, crack, files


def run_coupling(cfg: SimulationConfig, out: Optional[str] = None) -> RunResult:
    if cfg.coupling is None:
        raise ValueError("configuration has no coupling block")
    cb = cfg.coupling
    ccfg = CouplingConfig(tuple(cb.box), cb.h_pd, cb.delta, cb.T, cb.n_steps, cb.N, cb.snapshot_stride)
    model = pum_model(cfg)
    t0 = time.perf_counter()

    def writer(kind, name, data):
        if not out:
            return []
        p = os.path.join(out, f"{name}.vtk")
        if kind == "global":
            write_pum_field(p, data, cfg.sample_spacing)
        else:
            grid, snap = data
            write_pd_snapshot(p, grid.nodes, snap.u, snap.damage)
        return [p]

    res = run_coupled(model, crack_of(cfg), ccfg, out, writer)
    wall = time.perf_counter() - t0
    summary = RunSummary(cfg.name, cfg.hash())
    for s in res.steps:
        summary.add(f"global n={s.n}", s.u_max, size=s.solution.space.n_dof)
        summary.add(f"local PD n={s.n}", s.local_u_max, 100.0 * s.local_max_damage, size=res.local.grid.n_nodes)
    summary.add("global final", res.final_u_max, wall_time=wall, size=res.final.space.n_dof)
    return RunResult(summary, list(res.artifacts), {"coupling": res})


def run_enrichment(cfg: SimulationConfig, out: Optional[str] = None) -> RunResult:
    """PD on the full domain, crack extraction, enriched quasi-static PUM at the same load."""
    initial = crack_of(cfg)
    if initial is None:
        raise ValueError("the enrichment pipeline needs an initial crack")
    grid_nodes = pd_problem_nodes(cfg)
    series = DamageSeries(grid_nodes)
    pd_res = run_pd(cfg, out, series=series)
    left, right, crack, files = extract_crack(cfg, series, out, initial)
    pum_res = run_pum_static(cfg, out, crack=crack, label="PUM enriched")
    summary = pd_res.summary
    summary.rows += pum_res.summary.rows
    data = {**pd_res.data, **pum_res.data, "left": left, "right": right, "crack": crack, "series": series}
    return RunResult(summary, pd_res.files + files + pum_res.files, data)


def pd_problem_nodes(cfg: SimulationConfig) -> np.ndarray:
    pd = cfg.pd
    return build_grid(tuple(cfg.geometry.domain), pd.h).nodes


def summary_files(summary: RunSummary, out: str) -> list[str]:
    p1 = os.path.join(out, "summary.csv")
    p2 = os.path.join(out, "summary.json")
    summary.write_csv(p1)
    summary.write_json(p2)
    return [p1, p2]


def reproduce(name: str, cfg: SimulationConfig, out: str, snapshot_stride: Optional[int] = None) -> RunResult:
    """Bundled experiments: ``bar`` and ``mode1`` compare PUM and PD, ``inclined`` runs PD to PUM."""
    if name == "inclined":
        return run_enrichment(cfg, out)
    parts = [run_pum_static(cfg, out)]
    if name == "mode1":
        parts.append(run_pum_dynamic(cfg, out))
    elif name != "bar":
        raise ValueError(f"unknown experiment {name!r}")
    parts.append(run_pd(cfg, out, snapshot_stride))
    summary = parts[0].summary
    files = []
    data: dict = {}
    for p in parts:
        if p is not parts[0]:
            summary.rows += p.summary.rows
        files += p.files
        data.update(p.data)
    return RunResult(summary, files, data)
