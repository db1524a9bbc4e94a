import numpy as np
import pytest
import scipy.sparse as sp

from pdpum.geometry import CrackPolyline
from pdpum.pum import solver as S
from pdpum.pum.cover import build_cover
from pdpum.pum.model import PUMModel
from pdpum.pum.quadrature import build_quadrature
from pdpum.pum.space import build_space

SIG = 1e6


def _tension(material, level=3):
    cov = build_cover((0, 0, 0.1, 0.1), level)
    q = build_quadrature(cov)
    space = build_space(cov, None, q)
    bcs = S.BoundaryConditions(traction=[S.EdgeCondition("left", (-SIG, 0)), S.EdgeCondition("right", (SIG, 0))])
    return S.assemble(space, q, material, bcs)


def test_pure_traction_uniaxial(material):
    sys_ = _tension(material)
    assert sys_.rigid is not None and sys_.rigid.shape == (sys_.n_dof, 3)
    sol = S.solve_static(sys_, method="dense")
    X = np.random.default_rng(1).random((50, 2)) * 0.1
    E, nu = material.E, material.nu
    exx = (1 - nu**2) * SIG / E
    eyy = -nu * (1 + nu) * SIG / E
    ref = np.column_stack([exx * (X[:, 0] - 0.05), eyy * (X[:, 1] - 0.05)])
    assert np.abs(sol.evaluate(X) - ref).max() <= 1e-7 * np.abs(ref).max()


def test_cg_matches_dense(material):
    sys_ = _tension(material)
    a = S.solve_static(sys_, method="dense").coefficients
    b = S.solve_static(sys_, method="cg", rtol=1e-12)
    assert b.iterations > 0 and b.residual < 1e-11
    assert np.linalg.norm(a - b.coefficients) <= 1e-9 * np.linalg.norm(a)


def test_symmetric_and_mass_positive(material):
    sys_ = _tension(material)
    assert abs(sys_.K - sys_.K.T).max() <= 1e-12 * abs(sys_.K).max()
    x = np.random.default_rng(2).standard_normal(sys_.n_dof)
    assert x @ (sys_.M @ x) > 0
    # rigid modes are in the kernel of K
    assert np.abs(sys_.K @ sys_.rigid).max() <= 1e-8 * abs(sys_.K).max() * np.abs(sys_.rigid).max()


def test_dirichlet_cracked_problem(material):
    crack = CrackPolyline([[0.05, 0.0], [0.05, 0.02]])
    bcs = S.BoundaryConditions(
        dirichlet=[S.EdgeCondition("top")],
        traction=[S.EdgeCondition("bottom", (-1e3, 0), (0, 0.05)), S.EdgeCondition("bottom", (1e3, 0), (0.05, 0.1))],
    )
    m = PUMModel((0, 0, 0.1, 0.1), material, bcs, level=3, sample_spacing=0.005)
    sys_ = m.discretize(crack)
    assert sys_.rigid is None
    sol = m.solve_static(system=sys_)
    # crack faces open symmetrically
    u = sol.evaluate([[0.0499, 0.0], [0.0501, 0.0]])
    assert u[0, 0] < 0 < u[1, 0]
    assert u[0, 0] == pytest.approx(-u[1, 0], rel=1e-6)
    assert np.abs(sol.evaluate([[0.02, 0.1], [0.08, 0.1]])).max() < 1e-3 * m.u_max(sol)


def test_linearity(material):
    sys_ = _tension(material)
    a = S.solve_static(sys_, method="dense").coefficients
    b = S.solve_static(sys_, load=12 * sys_.load, method="dense").coefficients
    assert np.linalg.norm(b - 12 * a) <= 1e-10 * np.linalg.norm(b)


def _oscillator(k=4.0, m=1.0, f=0.0):
    K = sp.csr_matrix([[k]])
    M = sp.csr_matrix([[m]])
    return S.AssembledSystem(None, None, None, K, M, np.array([f]), S.BoundaryConditions(), 0.0)


def test_step_dynamic_free_oscillation():
    sys_ = _oscillator()
    dt = 1e-3
    st = S.initial_state(sys_, dt, lambda t: 0.0, u0=[1.0])
    for _ in range(1000):
        st = S.step_dynamic(sys_, st, dt, lambda t: 0.0)
    assert st.u[0] == pytest.approx(np.cos(2.0), abs=1e-5)
    assert S.estimate_critical_dt(sys_) == pytest.approx(1.0, rel=1e-12)


def test_grid_points_order():
    pts, (nx, ny) = S.grid_points((0, 0, 1, 0.5), 0.25)
    assert (nx, ny) == (5, 3)
    assert pts[1].tolist() == [0.25, 0.0] and pts[-1].tolist() == [1.0, 0.5]


def test_run_dynamic_rejects_non_multiple():
    with pytest.raises(S.SolverError):
        S.run_dynamic(_oscillator(f=1.0), 1.0, 0.3)
