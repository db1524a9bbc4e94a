import numpy as np
import pytest

from pdpum.pum.cover import CoverError, build_cover, flat_top_region, shepard_values


def test_geometry_of_cover():
    c = build_cover((0, 0, 1, 0.1), 3)
    assert c.n == 8
    assert c.h == pytest.approx(1 / 16)
    assert c.patch_half_width == pytest.approx(1.25 / 16)
    # the bounding box is cubic; only the first row meets the strip
    assert c.n_active == 8


@pytest.mark.parametrize("kw", [dict(level=-1), dict(level=2, alpha=1.0), dict(level=2, alpha=2.0)])
def test_rejects_bad_parameters(kw):
    with pytest.raises(CoverError):
        build_cover((0, 0, 1, 1), **kw)


def test_partition_of_unity(rng):
    c = build_cover((0, 0, 0.1, 0.1), 4, 1.5)
    ids, phi, dphi = shepard_values(c, 0.1 * rng.random((500, 2)))
    assert np.allclose(phi.sum(axis=1), 1.0, atol=1e-13)
    assert np.allclose(dphi.sum(axis=1), 0.0, atol=1e-9)
    assert np.all((ids >= 0) == (phi > 0))


def test_flat_top():
    c = build_cover((0, 0, 1, 1), 3)
    pid = 9
    b = flat_top_region(c, pid)
    x = np.array([[b[0] + 1e-9, b[1] + 1e-9], [0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3])]])
    ids, phi, _ = shepard_values(c, x)
    assert np.all(ids[:, 0] == pid) and np.allclose(phi[:, 0], 1.0)
