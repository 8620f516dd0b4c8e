"""Brute-force reference implementations shared by the unit and acceptance tests."""

from itertools import combinations

import numpy as np

from netsense.geometry import direct_distance, sum_distance
from netsense.ranging import RangeTable


def max_conflict_free(mappings) -> int:
    """Exhaustive maximum-cardinality conflict-free subset size.

    Exact for the small instances used in tests (subset enumeration over the
    filtered candidate list).
    """
    n = len(mappings)
    best = 0
    for size in range(n, 0, -1):
        if size <= best:
            break
        for subset in combinations(range(n), size):
            ok = all(
                not mappings[subset[i]].conflicts(mappings[subset[j]])
                for i in range(len(subset))
                for j in range(i + 1, len(subset))
            )
            if ok:
                best = size
                break
    return best


def synthetic_range_table(
    bs: np.ndarray,
    targets: np.ndarray,
    los_mask: np.ndarray,
    rng: np.random.Generator,
    n_clutter: int = 0,
    max_range: float = 220.0,
    jitter: float = 0.0,
) -> RangeTable:
    """Geometry-true range sets with optional clutter entries and jitter.

    Clutter mimics scattered paths: entries longer than the pair's shortest
    legitimate sum range, mirrored across both receive directions.
    """
    M = len(bs)
    sets: dict[tuple[int, int], list[float]] = {
        (u, m): [] for u in range(M) for m in range(M)
    }
    for k in range(len(targets)):
        for u in range(M):
            for m in range(M):
                if los_mask[u, k] and los_mask[m, k]:
                    d = sum_distance(bs[u], bs[m], targets[k])
                    sets[(u, m)].append(d + jitter * rng.uniform(-1, 1))
    for _ in range(n_clutter):
        u = int(rng.integers(0, M))
        m = int(rng.integers(0, M))
        lo = direct_distance(bs[u], bs[m]) + 5.0
        r = float(rng.uniform(lo, max_range))
        sets[(u, m)].append(r)
        if u != m:
            sets[(m, u)].append(r)
    return RangeTable(sets)
