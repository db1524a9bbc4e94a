import numpy as np
import pytest

from pdpum.crack import (
    BoxFilter,
    DamageSeries,
    build_crack_polyline,
    chord_angle_from_vertical,
    collapse_repeats,
    default_filters,
    extract_tip_sequence,
    growth_is_monotone,
    selected_snapshots,
)
from pdpum.geometry import CrackPolyline


def _series():
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    s = DamageSeries(pos)
    s.append(0, [0.0, 0.5, 0.9])
    s.append(250, [1.5, 1.2, 0.0])
    s.append(300, [0.0, 9.0, 0.0])
    s.append(500, [2.0, 0.0, 2.0])
    return s


def test_stride_selection():
    s = _series()
    assert selected_snapshots(s, 250) == [0, 1, 3]
    with pytest.raises(ValueError):
        selected_snapshots(s, 0)


def test_extraction_threshold_and_ties():
    seq = extract_tip_sequence(_series(), 250)
    # step 0 has no d > 1; step 500 is a tie resolved to the lowest index
    assert [p.tolist() for p in seq] == [[0.0, 0.0], [0.0, 0.0]]


def test_extraction_filter():
    seq = extract_tip_sequence(_series(), 250, BoxFilter((0.5, -1, 3, 1)))
    assert [p.tolist() for p in seq] == [[1.0, 0.0], [2.0, 0.0]]


def test_empty_series():
    s = DamageSeries(np.zeros((0, 2)))
    assert extract_tip_sequence(s) == []


def test_length_mismatch():
    s = DamageSeries(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        s.append(0, [1.0])


def test_default_filters():
    left, right = default_filters(CrackPolyline([[0.0, 0.0], [2.0, 0.0]]))
    x = np.array([[0.5, 0.0], [1.0, 3.0], [1.5, 0.0]])
    assert left(x).tolist() == [True, False, False]
    assert right(x).tolist() == [False, True, True]


def test_polyline_assembly():
    init = CrackPolyline([[0.0, 0.0], [1.0, 0.0]])
    c = build_crack_polyline(init, [[-0.5, 0.1], [-0.5, 0.1], [-1.0, 0.3]], [[1.0, 0.0], [1.5, 0.2]])
    assert c.points.tolist() == [[-1.0, 0.3], [-0.5, 0.1], [0.0, 0.0], [1.0, 0.0], [1.5, 0.2]]
    assert len(collapse_repeats([np.zeros(2), np.zeros(2), np.ones(2)])) == 2


def test_monotone_and_angle():
    tip = np.zeros(2)
    seq = [np.array([0.0, 1.0]), np.array([0.0, 2.0]), np.array([0.0, 1.95]), np.array([0.0, 3.0])]
    assert growth_is_monotone(tip, seq, tol=0.1)
    assert not growth_is_monotone(tip, seq, tol=0.01)
    assert chord_angle_from_vertical([np.zeros(2), np.array([1.0, 1.0])]) == pytest.approx(45.0)
    assert np.isnan(chord_angle_from_vertical([np.zeros(2)]))
