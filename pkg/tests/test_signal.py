import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from naed.signal import Dataset, TimeSeries, group_by_grid, interpolate, one_hot


def test_interpolation_examples():
    ts = TimeSeries("a", [0.0, 1.0], [[0.0], [2.0]])
    assert interpolate(ts, 0.5) == pytest.approx([1.0])
    assert interpolate(ts, 1.0) == pytest.approx([2.0])
    assert interpolate(ts, -1.0) == pytest.approx([0.0])
    assert interpolate(ts, 5.0) == pytest.approx([2.0])


series_st = st.integers(2, 12).flatmap(lambda k: st.tuples(
    st.lists(st.floats(0.01, 3.0), min_size=k - 1, max_size=k - 1),
    st.lists(st.floats(-100, 100), min_size=k, max_size=k),
))


@settings(max_examples=80, deadline=None)
@given(series_st, st.floats(0, 1))
def test_interpolation_properties(data, lam):
    gaps, vals = data
    times = np.concatenate([[0.0], np.cumsum(gaps)])
    ts = TimeSeries("p", times, vals)
    x = np.array(vals)
    for j, t in enumerate(times):
        assert interpolate(ts, t)[0] == x[j]
    for j in range(len(gaps)):
        t = times[j] + lam * (times[j + 1] - times[j])
        got = interpolate(ts, t)[0]
        want = (1 - lam) * x[j] + lam * x[j + 1]
        assert abs(got - want) <= 1e-12 * max(1.0, abs(x[j]), abs(x[j + 1]))
        assert min(x[j], x[j + 1]) - 1e-12 <= got <= max(x[j], x[j + 1]) + 1e-12


def test_timeseries_validation():
    with pytest.raises(ValueError):
        TimeSeries("a", [0.5, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        TimeSeries("a", [0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        TimeSeries("a", [0.0, 1.0], [1.0, np.inf])
    with pytest.raises(ValueError):
        TimeSeries("a", [0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        TimeSeries("a", [0.0, 1.0], [1.0, 2.0], label=[0.5, 0.5])


def test_dataset_validation_and_helpers():
    t = [0.0, 1.0]
    a = TimeSeries("a", t, [0, 1], one_hot(0, 2))
    b = TimeSeries("b", t, [0, 1], one_hot(1, 2))
    ds = Dataset([a, b], 1, 2)
    assert ds.class_counts().tolist() == [1, 1]
    assert ds.subset([1]).labels().tolist() == [1]
    with pytest.raises(ValueError):
        Dataset([a, a], 1, 2)
    with pytest.raises(ValueError):
        Dataset([a], 2, 2)


def test_group_by_grid():
    a = TimeSeries("a", [0.0, 1.0], [0, 1])
    b = TimeSeries("b", [0.0, 2.0], [0, 1])
    c = TimeSeries("c", [0.0, 1.0], [3, 1])
    assert group_by_grid([a, b, c]) == [[0, 2], [1]]
