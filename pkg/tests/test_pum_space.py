import numpy as np
import pytest

from pdpum.geometry import CrackPolyline
from pdpum.pum.cover import build_cover
from pdpum.pum.quadrature import build_quadrature
from pdpum.pum.space import HEAVISIDE, TIP, SpaceError, build_space, interior_tips, select_enrichments, stabilize_basis, tip_enrichment


def _space(level=4):
    cov = build_cover((0, 0, 0.1, 0.1), level)
    crack = CrackPolyline([[0.05, 0.0], [0.05, 0.02]])
    q = build_quadrature(cov, crack, tips=[crack.tips[1]])
    return cov, crack, q, build_space(cov, crack, q)


def test_enrichment_selection():
    cov, crack, _, sp = _space()
    a = sp.assignment
    assert interior_tips(crack, cov.domain, 1e-12) == [1]
    assert a.count(TIP) > 0 and a.count(HEAVISIDE) > 0
    # the boundary end point is not enriched
    assert np.all(a.tip_ids[a.tags == TIP] != 0)
    assert select_enrichments(cov, None).count(TIP) == 0


def test_stabilized_local_gram_is_identity_on_enrichments():
    _, _, q, sp = _space()
    G = sp.extras["gram"]
    for i in np.flatnonzero(sp.nraw > 3):
        T = sp.T[i, : sp.nraw[i], : sp.nloc[i]]
        Gt = T.T @ G[i, : sp.nraw[i], : sp.nraw[i]] @ T
        assert np.allclose(Gt[3:, 3:], np.eye(sp.nloc[i] - 3), atol=1e-8)
        assert np.allclose(Gt[:3, 3:], 0.0, atol=1e-8 * np.sqrt(np.diag(Gt)[:3]).max())


def test_stabilize_drops_dependent_direction():
    G = np.diag([1.0, 2.0, 3.0, 1.0, 1.0])
    G[3, 4] = G[4, 3] = 1.0  # two identical enrichments
    T, removed = stabilize_basis(G, 3, 1e-10)
    assert removed == 1 and T.shape == (5, 4)


def test_tip_functions_jump_across_crack():
    _, crack, _, sp = _space()
    fr = crack.tip_frames()[1]
    above = np.array([[0.049, 0.01]])
    below = np.array([[0.051, 0.01]])
    f_a = tip_enrichment(fr, above)[0][0]
    f_b = tip_enrichment(fr, below)[0][0]
    # r^(1/2) sin(theta/2) flips sign through theta = +-pi, cos(theta/2) does not
    assert f_a[0] == pytest.approx(-f_b[0], rel=1e-12)
    assert f_a[1] == pytest.approx(f_b[1], rel=1e-12)
    assert abs(f_a[0]) > 10 * abs(f_a[1])


def test_evaluate_outside_raises():
    _, _, _, sp = _space()
    with pytest.raises(SpaceError):
        sp.evaluate(np.zeros(sp.n_dof), [[0.2, 0.0]])
