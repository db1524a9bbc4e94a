import numpy as np
import pytest

from pdpum.geometry import CrackPolyline, GeometryError, check_box, point_in_box, segment_intersects_box, segments_intersect


def test_check_box():
    assert check_box([0, 0, 1, 2]) == (0.0, 0.0, 1.0, 2.0)
    with pytest.raises(GeometryError):
        check_box((0, 0, 0, 1))


def test_segments_intersect():
    assert segments_intersect((0, 0), (1, 1), (0, 1), (1, 0))
    assert not segments_intersect((0, 0), (1, 0), (0, 1), (1, 1))


def test_segment_box():
    box = (0, 0, 1, 1)
    assert segment_intersects_box((-1, 0.5), (2, 0.5), box)
    assert not segment_intersects_box((-1, 2), (2, 2), box)
    # touching an edge only is not a strict intersection
    assert not segment_intersects_box((1, -1), (1, 2), box, strict=True)


def test_point_in_box():
    m = point_in_box(np.array([[0.5, 0.5], [1.0, 0.5]]), (0, 0, 1, 1))
    assert m.tolist() == [True, False]


def test_crack_frames_and_side():
    c = CrackPolyline([[0.0, 0.0], [1.0, 0.0], [2.0, 1.0]])
    assert c.length == pytest.approx(1 + np.sqrt(2))
    f0, f1 = c.tip_frames()
    assert np.allclose(f0.tangent, [-1, 0])
    assert np.allclose(f1.tangent, np.array([1, 1]) / np.sqrt(2))
    s = c.side(np.array([[0.5, 0.1], [0.5, -0.1]]))
    assert s.tolist() == [1.0, -1.0]


def test_from_center_degrees():
    c = CrackPolyline.from_center((0.05, 0.05), 0.02, 90.0)
    assert np.allclose(c.points, [[0.05, 0.04], [0.05, 0.06]], atol=1e-15)


def test_crosses_segment():
    c = CrackPolyline([[0.5, 0.0], [0.5, 1.0]])
    assert c.crosses_segment((0.4, 0.5), (0.6, 0.5))
    assert not c.crosses_segment((0.1, 0.5), (0.3, 0.5))
