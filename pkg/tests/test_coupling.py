import json

import numpy as np
import pytest

from pdpum.coupling import (
    CouplingConfig,
    CouplingError,
    define_local_domain,
    extract_pd_boundary_data,
    read_handshake,
    run_coupled,
    run_local_pd,
    write_handshake,
)
from pdpum.geometry import CrackPolyline
from pdpum.pum import solver as S
from pdpum.pum.model import PUMModel

CRACK = CrackPolyline([[0.05, 0.0], [0.05, 0.02]])


class _Linear:
    """Stand-in global solution u = A x."""

    A = np.array([[1e-6, 2e-7], [0.0, -3e-7]])

    def evaluate(self, X):
        return np.asarray(X) @ self.A.T


def test_local_domain_layer():
    loc = define_local_domain((0.04, 0.01, 0.06, 0.03), 0.001, 0.003, CRACK, (0, 0, 0.1, 0.1))
    assert loc.grid.n_nodes == 21 * 21
    p = loc.layer_positions
    inner = (p[:, 0] > 0.043 + 1e-12) & (p[:, 0] < 0.057 - 1e-12) & (p[:, 1] > 0.013 + 1e-12) & (p[:, 1] < 0.027 - 1e-12)
    assert not inner.any()
    assert len(loc.interior) + len(loc.bc_layer) == loc.grid.n_nodes


@pytest.mark.parametrize("box", [(0.09, 0.0, 0.11, 0.02), (0.04, 0.01, 0.045, 0.03)])
def test_local_domain_errors(box):
    with pytest.raises(CouplingError):
        define_local_domain(box, 0.001, 0.003, None, (0, 0, 0.1, 0.1))


def test_handshake_roundtrip(tmp_path):
    loc = define_local_domain((0.0, 0.0, 0.02, 0.02), 0.001, 0.003)
    vals = extract_pd_boundary_data(_Linear(), loc)
    p = str(tmp_path / "h.txt")
    write_handshake(p, loc.bc_layer, loc.layer_positions, vals)
    idx, pos, v = read_handshake(p)
    assert np.array_equal(idx, loc.bc_layer)
    assert np.array_equal(pos, loc.layer_positions) and np.array_equal(v, vals)


def test_local_run_reproduces_homogeneous_field(material):
    loc = define_local_domain((0.0, 0.0, 0.02, 0.02), 0.001, 0.003)
    with pytest.raises(CouplingError):
        run_local_pd(loc, material, 1e-3, 10)
    extract_pd_boundary_data(_Linear(), loc)
    tr = run_local_pd(loc, material, 1e-3, 2000)
    u = tr.final.u
    assert np.array_equal(u[loc.bc_layer], loc.bc_values)
    ref = _Linear().evaluate(loc.grid.nodes)
    assert np.abs(u - ref).max() < 0.05 * np.abs(ref).max()


def _model(material):
    bcs = S.BoundaryConditions(
        dirichlet=[S.EdgeCondition("top")],
        traction=[S.EdgeCondition("bottom", (-1e3, 0), (0, 0.05)), S.EdgeCondition("bottom", (1e3, 0), (0.05, 0.1))],
    )
    return PUMModel((0, 0, 0.1, 0.1), material, bcs, level=3, sample_spacing=0.005)


def test_file_and_memory_handshake_agree(material, tmp_path):
    cfg = CouplingConfig((0.04, 0.01, 0.06, 0.03), 0.001, 0.004, 1e-4, 200, snapshot_stride=50)
    a = run_coupled(_model(material), CRACK, cfg)
    b = run_coupled(_model(material), CRACK, cfg, output_dir=str(tmp_path))
    assert not a.grew and not b.grew
    assert np.array_equal(a.steps[0].trajectory.final.u, b.steps[0].trajectory.final.u)
    assert a.final_u_max == b.final_u_max
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["artifacts"] == ["handshake_001.txt"]
    assert doc["final_crack"] == CRACK.points.tolist()
