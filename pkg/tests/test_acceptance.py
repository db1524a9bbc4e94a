"""Acceptance criteria A1-A11.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts it.  Reference values are the published ones; nothing here is
tuned to the implementation.
"""

import math

import mpmath
import numpy as np
import pytest

from pdpum import experiments as ex
from pdpum.coupling import CouplingConfig, run_coupled
from pdpum.crack import (
    BoxFilter,
    DamageSeries,
    HalfPlane,
    chord_angle_from_vertical,
    collapse_repeats,
    extract_tip_sequence,
    growth_is_monotone,
)
from pdpum.io.config import bundled_config_path, load_config, scaled
from pdpum.materials import calibrate
from pdpum.pd import dynamics as D
from pdpum.pd.grid import build_grid
from pdpum.pum import solver as S
from pdpum.pum.cover import build_cover, shepard_values
from pdpum.pum.quadrature import build_quadrature
from pdpum.pum.space import build_space

from conftest import ACCEPTANCE

pytestmark = pytest.mark.acceptance


def record(key: str, ok: bool, msg: str):
    ACCEPTANCE[key] = (bool(ok), msg)
    print(f"{key} {'PASS' if ok else 'FAIL'}: {msg}")
    return ok


def rel(a, b):
    return abs(a - b) / abs(b)


def _cfg(name, scale=1.0):
    cfg = scaled(load_config(bundled_config_path(name)), scale)
    cfg.output.figures = False
    return cfg


# ----------------------------------------------------------- shared runs

@pytest.fixture(scope="module")
def bar_pum():
    cfg = _cfg("bar")
    return ex.run_pum_static(cfg)


@pytest.fixture(scope="module")
def bar_pd_desk():
    # h = 0.005, delta = 0.02, dt = 2e-7, 5000 steps
    cfg = _cfg("bar", 10)
    assert (cfg.pd.h, cfg.pd.delta, cfg.pd.n_steps) == pytest.approx((0.005, 0.02, 5000))
    assert cfg.pd.dt == pytest.approx(2e-7)
    return cfg, ex.run_pd(cfg)


@pytest.fixture(scope="module")
def mode1_pum():
    return ex.run_pum_static(_cfg("mode1"))


# -------------------------------------------------------------------- A1

def test_a1_calibration():
    mpmath.mp.dps = 50
    m = calibrate(1200.0, 3.25e9, 1.0 / 3.0, 500.0)
    E, nu, Gc = mpmath.mpf("3.25e9"), mpmath.mpf(1.0 / 3.0), mpmath.mpf(500)
    C = mpmath.pi * Gc / 4
    beta = 4 * E * nu / (C * (1 - nu) * (1 - 2 * nu))
    r_c = mpmath.sqrt(mpmath.mpf("0.5") / beta)
    errs = [float(abs((mpmath.mpf(v) - ref) / ref)) for v, ref in ((m.C, C), (m.beta, beta), (m.r_c, r_c))]
    ok = max(errs) <= 1e-9 and float(abs(mpmath.mpf(m.C) - 125 * mpmath.pi) / (125 * mpmath.pi)) <= 1e-15
    record("A1", ok, f"C={m.C:.12g} beta={m.beta:.12g} r_c={m.r_c:.12g}; max rel error vs 50-digit oracle {max(errs):.1e} (tol 1e-9)")
    assert ok


# -------------------------------------------------------------------- A2

def test_a2_partition_of_unity():
    rng = np.random.default_rng(2)
    worst_phi = worst_grad = 0.0
    domain = (0.0, 0.0, 0.1, 0.1)
    for level in range(1, 7):
        for alpha in (1.1, 1.25, 1.5):
            cov = build_cover(domain, level, alpha)
            x = rng.random((10000, 2)) * 0.1
            _, phi, dphi = shepard_values(cov, x)
            worst_phi = max(worst_phi, float(np.abs(phi.sum(axis=1) - 1).max()))
            worst_grad = max(worst_grad, float(np.abs(dphi.sum(axis=1)).max()))
    ok = worst_phi <= 1e-12 and worst_grad <= 1e-10
    record("A2", ok, f"max |sum phi - 1| = {worst_phi:.1e} (tol 1e-12), max |sum grad phi| = {worst_grad:.1e} (tol 1e-10), levels 1-6, alpha 1.1/1.25/1.5")
    assert ok


# -------------------------------------------------------------------- A3

def test_a3_patch_test(material):
    A = np.array([[2e-4, -1e-4], [0.5e-4, 1.5e-4]])
    b = np.array([1e-5, -2e-5])

    def exact(X):
        return X @ A.T + b

    cov = build_cover((0.0, 0.0, 0.1, 0.1), 3)
    q = build_quadrature(cov, order=6)
    space = build_space(cov, None, q)
    bcs = S.BoundaryConditions(dirichlet=[S.EdgeCondition(e, exact) for e in ("bottom", "right", "top", "left")])
    sol = S.solve_static(S.assemble(space, q, material, bcs), method="dense")
    X = np.random.default_rng(3).random((100, 2)) * 0.1
    ref = exact(X)
    err = float(np.linalg.norm(sol.evaluate(X) - ref) / np.linalg.norm(ref))
    ok = err <= 1e-8
    record("A3", ok, f"linear Dirichlet patch test, level 3, Gauss order 6: relative error {err:.2e} at 100 points (tol 1e-8)")
    assert ok


# -------------------------------------------------------------------- A4

def test_a4_bar_pum(bar_pum):
    u = bar_pum.summary.value("PUM static")
    ok = rel(u, 1.235e-4) <= 0.02
    record("A4-PUM", ok, f"bar PUM level 6 U_max = {u:.4e} vs 1.235e-4 ({100 * (u / 1.235e-4 - 1):+.2f}%, tol 2%)")
    assert ok


@pytest.mark.slow
def test_a4_bar_pd_displacement(bar_pum, bar_pd_desk):
    u_pum = bar_pum.summary.value("PUM static")
    _, res = bar_pd_desk
    u = res.summary.value("PD")
    ok = rel(u, u_pum) <= 0.10
    record("A4-PD", ok, f"desk PD U_max = {u:.4e} vs PUM {u_pum:.4e} ({100 * (u / u_pum - 1):+.1f}%, tol 10%)")
    assert ok


@pytest.mark.slow
def test_a4_bar_pd_damage(bar_pd_desk):
    _, res = bar_pd_desk
    d = res.summary.rows[0]["damage_percent"]
    ok = 4.0 <= d <= 12.0
    record("A4-dmg", ok, f"desk PD max damage = {d:.2f}% (band [4%, 12%])")
    assert ok


# -------------------------------------------------------------------- A5

def test_a5_pum_linearity(bar_pum):
    u1 = bar_pum.summary.value("PUM static")
    u12 = ex.run_pum_static(_cfg("bar"), load_factor=12.0).summary.value("PUM static")
    err = rel(u12, 12 * u1)
    ok = err <= 1e-8
    record("A5-PUM", ok, f"PUM U_max(12x) / (12 U_max(1x)) - 1 = {err:.1e} (tol 1e-8)")
    assert ok


@pytest.mark.slow
def test_a5_pd_softening(bar_pd_desk):
    cfg, res1 = bar_pd_desk
    u1 = res1.summary.value("PD")
    u8 = ex.run_pd(cfg, load_factor=8.0).summary.value("PD")
    excess = u8 / (8 * u1) - 1
    ok = 0.03 <= excess and 0.01 <= excess <= 0.15
    record("A5-PD", ok, f"desk PD U_max(8x) = {u8:.4e} vs 8 U_max(1x) = {8 * u1:.4e}: excess {100 * excess:.1f}% (need >= 3%, band [1%, 15%])")
    assert ok


# -------------------------------------------------------------------- A6

def test_a6_mode1_static(mode1_pum):
    u = mode1_pum.summary.value("PUM static")
    ok = rel(u, 8.688e-8) <= 0.02
    record("A6-stat", ok, f"mode-I PUM level 6 U_max = {u:.4e} vs 8.688e-8 ({100 * (u / 8.688e-8 - 1):+.2f}%, tol 2%)")
    assert ok


@pytest.mark.slow
def test_a6_mode1_dynamic(mode1_pum):
    u_s = mode1_pum.summary.value("PUM static")
    cfg = _cfg("mode1")
    model = ex.pum_model(cfg)
    system = mode1_pum.data["system"]
    sol, dt = model.solve_dynamic(cfg.pum.dynamic.T, cfg.pum.dynamic.dt, system=system, safety=cfg.pum.dynamic.safety)
    u_d = model.u_max(sol)
    ok = rel(u_d, u_s) <= 0.01
    record("A6-dyn", ok, f"mode-I explicit PUM U_max = {u_d:.4e} vs quasi-static {u_s:.4e} ({100 * (u_d / u_s - 1):+.2f}%, tol 1%; dt = {dt:.3e}, {sol.iterations} steps)")
    assert ok


# -------------------------------------------------------------------- A7

@pytest.mark.slow
def test_a7_pd_refinement(mode1_pum):
    u_pum = mode1_pum.summary.value("PUM static")
    out = {}
    for delta, h in ((0.004, 0.001), (0.002, 0.00025)):
        cfg = _cfg("mode1")
        cfg.pd.h, cfg.pd.delta, cfg.pd.dt, cfg.pd.n_steps = h, delta, 2e-7, 5000
        out[delta] = ex.run_pd(cfg).summary.value("PD")
    e_c = abs(out[0.004] - u_pum)
    e_f = abs(out[0.002] - u_pum)
    factor = e_c / e_f if e_f > 0 else math.inf
    ok = factor >= 1.5
    record(
        "A7",
        ok,
        f"PD U_max {out[0.004]:.4e} (delta 0.004, h 0.001) -> {out[0.002]:.4e} (delta 0.002, h 0.00025) vs PUM {u_pum:.4e}: "
        f"gap reduced by factor {factor:.2f} (need >= 1.5)",
    )
    assert ok


# -------------------------------------------------------------------- A8

def _brute_force(positions, steps, damage, stride, inside):
    out = []
    for step, d in zip(steps, damage):
        if step % stride:
            continue
        best, index = 0.0, -1
        for i in range(len(d)):
            if inside[i] and d[i] > 1 and d[i] > best:
                best, index = d[i], i
        if best > 0:
            out.append(positions[index])
    return out


def test_a8_extraction_oracle():
    rng = np.random.default_rng(8)
    mismatches = 0
    for trial in range(50):
        n = int(rng.integers(1, 10001))
        m = int(rng.integers(1, 101))
        pos = rng.random((n, 2))
        stride = int(rng.choice([1, 2, 5, 250]))
        steps = sorted(rng.choice(np.arange(0, 100 * max(stride, 1) + 1), size=m, replace=False).tolist())
        # coarse levels produce ties and values exactly at the threshold
        damage = [np.round(rng.random(n) * rng.uniform(0.5, 3.0), 1) for _ in range(m)]
        kind = trial % 3
        if kind == 0:
            filt = None
        elif kind == 1:
            filt = HalfPlane(tuple(rng.random(2)), tuple(rng.standard_normal(2)), strict=bool(trial % 2))
        else:
            lo = rng.random(2) * 0.5
            filt = BoxFilter((lo[0], lo[1], lo[0] + 0.5, lo[1] + 0.5))
        series = DamageSeries(pos)
        for s, d in zip(steps, damage):
            series.append(s, d)
        got = extract_tip_sequence(series, stride, filt)
        inside = np.ones(n, dtype=bool) if filt is None else filt(pos)
        ref = _brute_force(pos, steps, damage, stride, inside)
        if len(got) != len(ref) or any(not np.array_equal(a, b) for a, b in zip(got, ref)):
            mismatches += 1
    ok = mismatches == 0
    record("A8", ok, f"{50 - mismatches}/50 randomized series match the brute-force extraction exactly")
    assert ok


# -------------------------------------------------------------------- A9

@pytest.mark.slow
def test_a9_coupling_fixed_point(mode1_pum, tmp_path):
    cfg = _cfg("mode1")
    cb = cfg.coupling
    ccfg = CouplingConfig(tuple(cb.box), cb.h_pd, cb.delta, cb.T, cb.n_steps, 1, cb.snapshot_stride)
    model = ex.pum_model(cfg)
    res = run_coupled(model, ex.crack_of(cfg), ccfg, output_dir=str(tmp_path))
    initial = mode1_pum.data["solution"]
    resolved = model.solve_static(res.final_crack)
    pts, _ = S.grid_points(model.domain, model.sample_spacing)
    a, b = initial.evaluate(pts), resolved.evaluate(pts)
    diff = float(np.abs(a - b).max() / np.abs(a).max())
    tol = model.rtol
    ok = not res.grew and diff <= tol
    record(
        "A9",
        ok,
        f"N = 1: growth {len(res.steps[0].left)}+{len(res.steps[0].right)} points, local PD max damage {res.steps[0].local_max_damage:.3f}; "
        f"re-solved vs initial field max rel difference {diff:.1e} (tol {tol:.0e})",
    )
    assert ok


# ------------------------------------------------------------------- A10

@pytest.fixture(scope="module")
def inclined_desk():
    # h = 0.002, delta = 0.008
    cfg = _cfg("inclined", 4)
    assert (cfg.pd.h, cfg.pd.delta) == pytest.approx((0.002, 0.008))
    return cfg, ex.run_enrichment(cfg)


@pytest.mark.slow
def test_a10_branches_grow_from_tips(inclined_desk):
    cfg, res = inclined_desk
    h = cfg.pd.h
    initial = ex.crack_of(cfg)
    msgs, ok = [], True
    for name, tip, seq in (("left", initial.tips[0], res.data["left"]), ("right", initial.tips[1], res.data["right"])):
        pts = collapse_repeats(seq)
        if not pts:
            ok = False
            msgs.append(f"{name}: no points")
            continue
        dist = [float(np.hypot(*(p - tip))) for p in pts]
        near = dist[0] <= cfg.pd.delta
        mono = growth_is_monotone(tip, pts, h, 1)
        grows = len(pts) > 1 and dist[-1] > dist[0]
        ok &= near and mono and grows
        msgs.append(f"{name}: {len(pts)} distinct points, distance {dist[0]:.4f} -> {dist[-1]:.4f} m")
    record("A10(i)", ok, "; ".join(msgs) + " (need start within delta of the tip and monotone growth)")
    assert ok


@pytest.mark.slow
def test_a10_branches_turn_vertical(inclined_desk):
    _, res = inclined_desk
    angles = [chord_angle_from_vertical(collapse_repeats(res.data[k])) for k in ("left", "right")]
    ok = all(np.isfinite(a) and a <= 45.0 for a in angles)
    record("A10(ii)", ok, f"branch chord angles from vertical: left {angles[0]:.1f}, right {angles[1]:.1f} deg (need <= 45; nan = no chord)")
    assert ok


@pytest.mark.slow
def test_a10_enriched_pum_vs_pd(inclined_desk):
    _, res = inclined_desk
    u_pd = res.summary.value("PD")
    u_pum = res.summary.value("PUM enriched")
    ok = rel(u_pum, u_pd) <= 0.5
    record("A10(iii)", ok, f"enriched PUM U_max {u_pum:.4e} vs PD {u_pd:.4e} ({100 * (u_pum / u_pd - 1):+.1f}%, tol 50%)")
    assert ok


# ------------------------------------------------------------------- A11

def test_a11_pd_recurrence_exact(material):
    grid = build_grid((0.0, 0.0, 0.01, 0.01), 0.001, 0.003)
    b = np.array([3.0e7, -1.0e7])
    a = b / material.rho
    dt, n = 1e-7, 200
    sched = D.LoadSchedule([D.LayerCondition("force", np.arange(grid.n_nodes), b, "constant")], n * dt, n, dt)

    def exact(t):
        return np.broadcast_to(0.5 * a * t * t, (grid.n_nodes, 2))

    st = D.PDState(exact(-dt).copy(), exact(0.0).copy())
    worst = 0.0
    for _ in range(n):
        st = D.step(grid, st, sched, material, want_damage=False)
        worst = max(worst, float(np.abs(st.u_curr - exact(st.t)).max() / np.abs(exact(st.t)).max()))
    ok = worst <= 1e-12
    record("A11-PD", ok, f"central differences on u = a t^2/2: max relative error {worst:.1e} over {n} steps (tol 1e-12)")
    assert ok


def test_a11_pum_second_order():
    import scipy.sparse as sp

    k, m = 9.0, 1.0
    w = math.sqrt(k / m)
    sys_ = S.AssembledSystem(None, None, None, sp.csr_matrix([[k]]), sp.csr_matrix([[m]]), np.zeros(1), S.BoundaryConditions(), 0.0)
    T = 2.0
    errs = []
    for n in (200, 400, 800, 1600):
        dt = T / n
        st = S.initial_state(sys_, dt, lambda t: 0.0, u0=[1.0])
        for _ in range(n):
            st = S.step_dynamic(sys_, st, dt, lambda t: 0.0)
        errs.append(abs(st.u[0] - math.cos(w * T)))
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    ok = all(abs(r - 4.0) <= 0.5 for r in ratios)
    record("A11-PUM", ok, f"1-DOF oscillator error ratios per dt halving {', '.join(f'{r:.3f}' for r in ratios)} (need 4 +- 0.5)")
    assert ok
