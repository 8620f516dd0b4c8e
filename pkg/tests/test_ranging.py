import numpy as np
import pytest

from netsense.geometry import GridConfig, range_quantum
from netsense.ranging import (
    RangeTable,
    corrected_supports,
    estimate_sto,
    load_handoff,
    ranges_from_support,
    save_handoff,
)

GRID = GridConfig(n_subcarriers=3300, subcarrier_spacing=120e3, speed_of_light=3e8)
Q = range_quantum(GRID)

# BS geometry with known direct delays: d(0,1)=60 -> 79, d(0,2)=60 -> 79,
# d(1,2)=60*sqrt(2)=84.85 -> 112
BS = np.array([[0.0, 0.0], [60.0, 0.0], [0.0, 60.0]])


def test_range_table_basics():
    t = RangeTable({(0, 1): [5.0, 1.0, 3.0]})
    assert t.sets[(0, 1)] == [1.0, 3.0, 5.0]  # stored sorted
    assert t.get(0, 1, 1) == 1.0
    assert t.get(0, 1, 3) == 5.0
    assert t.size(0, 1) == 3
    assert t.size(2, 2) == 0
    with pytest.raises(IndexError):
        t.get(0, 1, 0)


def test_range_table_indices_near():
    t = RangeTable({(0, 0): [10.0, 12.0, 12.5, 20.0]})
    assert t.indices_near(0, 0, 12.0, 0.6) == [2, 3]
    assert t.indices_near(0, 0, 12.0, 0.4) == [2]
    assert t.indices_near(0, 0, 50.0, 1.0) == []
    assert t.indices_near(1, 1, 10.0, 1.0) == []


def test_range_table_dict_roundtrip():
    t = RangeTable({(0, 1): [1.5, 2.5], (2, 0): []})
    assert RangeTable.from_dict(t.to_dict()) == t


def test_estimate_sto_basic():
    # virtual supports = true delays + tau
    support = {
        (0, 1): [79 + 4, 150 + 4],
        (1, 0): [79 - 4],
        (0, 2): [79 - 2],
        (2, 0): [79 + 2],
        (1, 2): [112 + 0],
        (2, 1): [112 - 0],
        (0, 0): [0, 90],
        (1, 1): [0],
        (2, 2): [0],
    }
    est = estimate_sto(support, BS, GRID)
    assert est.ok
    expect = np.array([[0, 4, -2], [-4, 0, 0], [2, 0, 0]])
    assert np.array_equal(est.tau, expect)
    # diagonal untouched by estimation
    assert np.all(np.diag(est.tau) == 0)


def test_estimate_sto_missing_pair_flagged():
    support = {(0, 1): [], (1, 0): [75]}
    est = estimate_sto(support, BS, GRID)
    assert (0, 1) in est.failed_pairs
    assert not est.ok
    assert est.tau[0, 1] == 0


def test_corrected_supports():
    support = {(0, 1): [83, 154], (0, 0): [0, 90]}
    est = estimate_sto({(0, 1): [83], (1, 0): [75]}, BS, GRID)
    corr = corrected_supports(support, est)
    assert corr[(0, 1)] == {79, 150}
    assert corr[(0, 0)] == {0, 90}  # monostatic: no clock offset


def test_ranges_from_support_excludes_direct_and_centers():
    support = {
        (0, 1): [83, 154],  # tau = +4; direct at 83 excluded, 154 -> delay 150
        (0, 0): [0, 90],    # self tap at 0 excluded
    }
    est = estimate_sto({(0, 1): [83], (1, 0): [75]}, BS, GRID)
    table = ranges_from_support(support, est, GRID)
    assert table.sets[(0, 1)] == [pytest.approx(150 * Q + Q / 2)]
    assert table.sets[(0, 0)] == [pytest.approx(90 * Q + Q / 2)]


def test_ranges_from_support_direct_only_pair_empty():
    support = {(0, 1): [83]}
    est = estimate_sto({(0, 1): [83], (1, 0): [75]}, BS, GRID)
    assert ranges_from_support(support, est, GRID).sets[(0, 1)] == []


def test_ranges_from_support_failed_pair_empty():
    support = {(0, 1): [], (1, 0): [75, 100]}
    est = estimate_sto(support, BS, GRID)
    table = ranges_from_support(support, est, GRID)
    assert table.sets[(0, 1)] == []
    assert len(table.sets[(1, 0)]) == 1


def test_ranges_from_support_drops_negative_corrected():
    # spurious early tap below the direct one would go negative after correction
    support = {(0, 1): [83, 85, 2], (1, 0): [75]}
    est = estimate_sto(support, BS, GRID)
    # min index 2 treated as the direct tap -> tau = 2 - 79 = -77; entry 85
    # corrects to 162, entry 83 to 160, both kept; nothing negative here, so
    # craft a clearly negative case instead
    support = {(0, 0): [0, 1], (0, 1): [83], (1, 0): [75]}
    est = estimate_sto({(0, 1): [83], (1, 0): [75]}, BS, GRID)
    est.tau[0, 0] = 5  # force an inconsistent monostatic correction
    table = ranges_from_support(support, est, GRID)
    assert table.sets[(0, 0)] == []


def test_ranges_from_support_dedups_delays():
    support = {(0, 0): [0, 90, 90], (0, 1): [83], (1, 0): [75]}
    est = estimate_sto({(0, 1): [83], (1, 0): [75]}, BS, GRID)
    table = ranges_from_support(support, est, GRID)
    assert len(table.sets[(0, 0)]) == 1


def test_handoff_roundtrip(tmp_path):
    table = RangeTable({(0, 0): [10.1, 20.2], (0, 1): [], (1, 0): [33.3]})
    p = tmp_path / "handoff.json"
    save_handoff(p, table, BS, GRID)
    back_table, back_bs, back_grid = load_handoff(p)
    assert back_table == table
    assert np.allclose(back_bs, BS)
    assert back_grid == GRID
