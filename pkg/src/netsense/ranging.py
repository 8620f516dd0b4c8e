"""Phase I back end: STO estimation, delay correction, and range sets.

The sparse-recovery supports are expressed on the *virtual* delay grid
(shifted by the unknown per-pair clock offsets). The inter-BS direct tap is
the earliest one for every pair, and since BS positions are surveyed, its
true delay is known; the difference gives the per-pair STO. Correcting every
other support index by the estimated STO and centering in the bin yields the
per-pair range sets handed to Phase II.
"""

from __future__ import annotations

import json
import logging
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    GridConfig,
    delay_in_samples,
    direct_distance,
    range_from_delay,
)

log = logging.getLogger(__name__)

Pair = tuple[int, int]


@dataclass
class StoEstimate:
    """Estimated per-pair clock offsets in sample periods."""

    tau: np.ndarray  # (M, M) int
    failed_pairs: list[Pair] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed_pairs


class RangeTable:
    """Per (u, m) BS pair, the sorted estimated ranges D_{u,m} in meters.

    Indexing follows the 1-based convention `get(u, m, g)` = g-th smallest;
    g = 0 is reserved by callers for "no range assigned".
    """

    def __init__(self, sets: dict[Pair, list[float]]):
        self.sets = {pair: sorted(vals) for pair, vals in sets.items()}

    def get(self, u: int, m: int, g: int) -> float:
        if g < 1:
            raise IndexError("range indices are 1-based; 0 means absent")
        return self.sets[(u, m)][g - 1]

    def size(self, u: int, m: int) -> int:
        return len(self.sets.get((u, m), []))

    def pairs(self) -> list[Pair]:
        return sorted(self.sets.keys())

    def indices_near(self, u: int, m: int, value: float, tol: float) -> list[int]:
        """1-based indices of entries within `tol` of `value`."""
        vals = self.sets.get((u, m), [])
        lo = bisect_left(vals, value - tol)
        hi = bisect_right(vals, value + tol)
        return list(range(lo + 1, hi + 1))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RangeTable) and self.sets == other.sets

    def to_dict(self) -> dict:
        return {f"{u},{m}": vals for (u, m), vals in sorted(self.sets.items())}

    @classmethod
    def from_dict(cls, data: dict) -> "RangeTable":
        sets = {}
        for key, vals in data.items():
            u, m = (int(t) for t in key.split(","))
            sets[(u, m)] = [float(v) for v in vals]
        return cls(sets)


def estimate_sto(
    support: dict[Pair, list[int]],
    bs_positions: np.ndarray,
    grid: GridConfig,
) -> StoEstimate:
    """Estimate the STO matrix from the earliest recovered tap of each pair.

    For u != m the minimum support index is the inter-BS direct tap on the
    virtual grid; subtracting the known direct delay gives the offset. An
    empty support for some pair is a Phase-I failure for that pair and is
    reported in `failed_pairs` (its tau entry is left at 0).
    """
    n_bs = len(bs_positions)
    tau = np.zeros((n_bs, n_bs), dtype=int)
    failed: list[Pair] = []
    for u in range(n_bs):
        for m in range(n_bs):
            if u == m:
                continue
            idx = support.get((u, m), [])
            if not idx:
                failed.append((u, m))
                continue
            l_true = delay_in_samples(
                direct_distance(bs_positions[u], bs_positions[m]), grid
            )
            tau[u, m] = min(idx) - l_true
    return StoEstimate(tau=tau, failed_pairs=failed)


def corrected_supports(
    support: dict[Pair, list[int]], sto: StoEstimate
) -> dict[Pair, set[int]]:
    """Shift every support index back by the estimated STO of its pair."""
    out = {}
    for (u, m), idx in support.items():
        t = int(sto.tau[u, m])
        out[(u, m)] = {l - t for l in idx}
    return out


def ranges_from_support(
    support: dict[Pair, list[int]],
    sto: StoEstimate,
    grid: GridConfig,
) -> RangeTable:
    """Build the per-pair range sets, excluding the inter-BS direct tap.

    For u != m the excluded index is the minimum of the support; for the
    monostatic pair the direct (self) tap sits at delay 0. Corrected delays
    that come out negative indicate an inconsistent recovery and are dropped
    with a warning. Duplicate corrected delays collapse to one entry.
    """
    sets: dict[Pair, list[float]] = {}
    failed = set(sto.failed_pairs)
    for (u, m), idx in support.items():
        if (u, m) in failed or not idx:
            sets[(u, m)] = []
            continue
        t = int(sto.tau[u, m])
        excluded = min(idx) if u != m else 0
        delays = set()
        for l in idx:
            if l == excluded:
                continue
            corrected = l - t
            if corrected < 0:
                log.warning(
                    "dropping negative corrected delay %d for pair (%d, %d)",
                    corrected, u, m,
                )
                continue
            delays.add(corrected)
        sets[(u, m)] = [range_from_delay(l, grid) for l in sorted(delays)]
    return RangeTable(sets)


def save_handoff(path, table: RangeTable, bs_positions, grid: GridConfig) -> None:
    """Write the Phase I -> Phase II handoff document as JSON."""
    doc = {
        "bs_positions": [list(map(float, p)) for p in bs_positions],
        "grid": {
            "n_subcarriers": grid.n_subcarriers,
            "subcarrier_spacing": grid.subcarrier_spacing,
            "speed_of_light": grid.speed_of_light,
        },
        "range_sets": table.to_dict(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_handoff(path) -> tuple[RangeTable, np.ndarray, GridConfig]:
    with open(path) as fh:
        doc = json.load(fh)
    grid = GridConfig(
        n_subcarriers=int(doc["grid"]["n_subcarriers"]),
        subcarrier_spacing=float(doc["grid"]["subcarrier_spacing"]),
        speed_of_light=float(doc["grid"]["speed_of_light"]),
    )
    bs = np.asarray(doc["bs_positions"], dtype=float)
    return RangeTable.from_dict(doc["range_sets"]), bs, grid
