import math

import pytest

from pdpum.materials import Material, MaterialError, calibrate, lame_parameters


def test_calibration_constants(material):
    assert material.C == pytest.approx(math.pi * 125.0, rel=1e-15)
    # C * beta = 6 E for nu = 1/3
    assert material.C * material.beta == pytest.approx(6 * material.E, rel=1e-12)
    assert material.r_c == pytest.approx(math.sqrt(0.5 / material.beta), rel=1e-15)


def test_lame_plane_strain():
    mu, lam = lame_parameters(3.0, 0.25)
    assert mu == pytest.approx(1.2)
    assert lam == pytest.approx(1.2)


@pytest.mark.parametrize("kw", [dict(E=-1.0), dict(nu=0.5), dict(Gc=0.0), dict(rho=float("nan"))])
def test_rejects_bad_constants(kw):
    args = dict(rho=1200.0, E=3.25e9, nu=1 / 3, Gc=500.0)
    args.update(kw)
    with pytest.raises(MaterialError):
        calibrate(**args)


def test_as_dict_roundtrip(material):
    d = material.as_dict()
    assert d["E"] == material.E and d["beta"] == material.beta
    assert Material(d["rho"], d["E"], d["nu"], d["Gc"]) == material
