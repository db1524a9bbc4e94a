import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdpum.geometry import CrackPolyline
from pdpum.pd.grid import GridError, brute_force_neighbors, build_grid, edge_length, tag_boundary_layer, traction_force_density


def test_node_count_and_volumes():
    g = build_grid((0, 0, 0.1, 0.1), 0.0005)
    assert g.n_nodes == 201 * 201
    assert g.volumes.sum() == pytest.approx(0.01, rel=1e-12)
    assert g.volumes.min() == pytest.approx(0.0005**2 / 4)


def test_spacing_must_divide():
    with pytest.raises(GridError):
        build_grid((0, 0, 1, 1), 0.3)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(4, 12), m=st.integers(2, 5), seed=st.integers(0, 1000))
def test_neighbors_match_brute_force(n, m, seed):
    rng = np.random.default_rng(seed)
    h = 1.0 / n
    delta = m * h + 1e-3 * h
    a, b = rng.random(2), rng.random(2)
    crack = CrackPolyline([a, b]) if np.hypot(*(a - b)) > 1e-3 else None
    g = build_grid((0, 0, 1, 1), h, delta, crack)
    ref = brute_force_neighbors(g.nodes, delta, crack, h)
    for i in range(g.n_nodes):
        assert np.array_equal(g.neighbors_of(i), ref[i])


def test_neighbor_symmetry():
    g = build_grid((0, 0, 0.02, 0.01), 0.001, 0.004, CrackPolyline([[0.01, 0.0], [0.01, 0.005]]))
    pairs = {(i, int(j)) for i in range(g.n_nodes) for j in g.neighbors_of(i)}
    assert all((j, i) in pairs for i, j in pairs)
    assert g.n_excluded > 0


def test_layer_and_traction():
    g = build_grid((0, 0, 1, 0.1), 0.005, 0.02)
    layer = tag_boundary_layer(g, "left", 0.02)
    assert np.all(g.nodes[layer, 0] <= 0.02 + 1e-12)
    b = traction_force_density((9e5, 0.0), layer, g, edge_length(g, "left"))
    total = (b[layer] * g.volumes[layer, None]).sum(axis=0)
    assert total[0] == pytest.approx(9e4, rel=1e-12)
    assert total[1] == 0.0


def test_layer_interval():
    g = build_grid((0, 0, 0.1, 0.1), 0.005, 0.02)
    layer = tag_boundary_layer(g, "bottom", 0.02, (0.0, 0.05))
    assert g.nodes[layer, 0].max() <= 0.05 + 1e-12
    assert edge_length(g, "bottom", (0.0, 0.05)) == pytest.approx(0.05)
