import math

import pytest
from hypothesis import given, strategies as st

from netsense.geometry import (
    GridConfig,
    delay_in_samples,
    direct_distance,
    half_quantum,
    range_from_delay,
    range_quantum,
    sum_distance,
)

GRID = GridConfig(n_subcarriers=3300, subcarrier_spacing=120e3, speed_of_light=3e8)

coords = st.floats(min_value=-1000, max_value=1000, allow_nan=False)
points = st.tuples(coords, coords)


def test_direct_distance_345():
    assert direct_distance((0, 0), (3, 4)) == 5.0


def test_direct_distance_identity():
    assert direct_distance((7.5, -2.25), (7.5, -2.25)) == 0.0


def test_direct_distance_scaled():
    assert direct_distance((0, 0), (30, 40)) == pytest.approx(50.0)


def test_sum_distance_monostatic():
    assert sum_distance((0, 0), (0, 0), (3, 4)) == pytest.approx(10.0)


def test_sum_distance_bistatic():
    assert sum_distance((0, 0), (60, 80), (30, 40)) == pytest.approx(100.0)


@given(points, points, points)
def test_sum_distance_symmetric(u, m, t):
    assert sum_distance(u, m, t) == pytest.approx(sum_distance(m, u, t))


@given(points, points, points)
def test_triangle_inequality(a, b, c):
    assert direct_distance(a, c) <= direct_distance(a, b) + direct_distance(b, c) + 1e-9


def test_delay_zero_distance():
    assert delay_in_samples(0.0, GRID) == 0


def test_delay_100m():
    # 3300 * 120 kHz * 100 / 3e8 = 132.0 exactly
    assert delay_in_samples(100.0, GRID) == 132


def test_delay_floors():
    assert delay_in_samples(100.5, GRID) == 132


def test_delay_rejects_negative():
    with pytest.raises(ValueError):
        delay_in_samples(-1.0, GRID)


@given(st.floats(min_value=0, max_value=500), st.floats(min_value=0, max_value=500))
def test_delay_monotone(d1, d2):
    lo, hi = sorted([d1, d2])
    assert delay_in_samples(lo, GRID) <= delay_in_samples(hi, GRID)


def test_range_quantum_full_grid():
    assert range_quantum(GRID) == pytest.approx(3e8 / 3.96e8)
    assert half_quantum(GRID) == pytest.approx(0.5 * 3e8 / 3.96e8)


def test_range_quantum_scaling():
    doubled = GridConfig(6600, 120e3, 3e8)
    assert range_quantum(doubled) == pytest.approx(range_quantum(GRID) / 2)


def test_range_quantum_unity():
    grid = GridConfig(n_subcarriers=1, subcarrier_spacing=3e8, speed_of_light=3e8)
    assert range_quantum(grid) == 1.0


@given(st.floats(min_value=0, max_value=500))
def test_bin_center_error_bound(d):
    est = range_from_delay(delay_in_samples(d, GRID), GRID)
    assert abs(est - d) <= half_quantum(GRID) + 1e-9


def test_grid_validation():
    with pytest.raises(ValueError):
        GridConfig(0, 120e3)
    with pytest.raises(ValueError):
        GridConfig(100, -1.0)
