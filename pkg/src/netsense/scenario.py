"""Ground-truth scene generation: BS/target placement, blockage, multipath.

A scene fixes everything the estimator does not know: target positions, the
LOS blockage mask, the inventory of reflected (non-direct) paths, and the
per-pair clock offsets. The same structures double as the evaluation oracle.

Path taxonomy per (u, m) BS pair:
  direct    - BS u to BS m line-of-sight (always present; delay 0 when u == m)
  two_hop   - BS u -> target -> BS m, requires LOS on both legs
  scattered - any longer reflected path involving extra scatterers (NLOS)
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np

from .geometry import (
    GridConfig,
    delay_in_samples,
    direct_distance,
    half_quantum,
    range_from_delay,
    range_quantum,
    sum_distance,
)
from .ranging import RangeTable

log = logging.getLogger(__name__)

_MAX_SCENE_ATTEMPTS = 2000


class PathType(str, Enum):
    DIRECT = "direct"
    TWO_HOP = "two_hop"
    SCATTERED = "scattered"


@dataclass(frozen=True)
class ScenarioConfig:
    n_targets: int
    n_bs: int = 4
    area_side: float = 80.0
    blockage_prob: float = 0.1
    nlos_prob: float = 0.5
    max_sto: int = 10
    max_taps: int = 300
    min_bs_separation: float = 39.0
    rng_seed: int = 0
    # Scattered paths are mirrored across (u, m) and (m, u) by default so both
    # receive directions see the same clutter ranges.
    nlos_reciprocal: bool = True

    def __post_init__(self) -> None:
        if self.n_bs < 3:
            raise ValueError("need at least 3 BSs")
        if self.n_targets < 0:
            raise ValueError("n_targets must be >= 0")
        for name in ("blockage_prob", "nlos_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.max_sto < 0:
            raise ValueError("max_sto must be >= 0")


@dataclass(frozen=True)
class NlosPath:
    u: int
    m: int
    k: int
    range_m: float


@dataclass
class Scenario:
    bs_positions: np.ndarray      # (M, 2)
    target_positions: np.ndarray  # (K, 2)
    los_mask: np.ndarray          # (M, K) bool, True = LOS between BS m and target k
    nlos_paths: list[NlosPath]
    sto: np.ndarray               # (M, M) int, antisymmetric

    @property
    def n_bs(self) -> int:
        return len(self.bs_positions)

    @property
    def n_targets(self) -> int:
        return len(self.target_positions)

    def detecting_bs(self, k: int) -> list[int]:
        return [m for m in range(self.n_bs) if self.los_mask[m, k]]

    def to_json(self, path) -> None:
        doc = {
            "bs_positions": self.bs_positions.tolist(),
            "target_positions": self.target_positions.tolist(),
            "los_mask": self.los_mask.astype(int).tolist(),
            "nlos_paths": [asdict(p) for p in self.nlos_paths],
            "sto": self.sto.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "Scenario":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(
            bs_positions=np.asarray(doc["bs_positions"], dtype=float),
            target_positions=np.asarray(doc["target_positions"], dtype=float).reshape(-1, 2),
            los_mask=np.asarray(doc["los_mask"], dtype=bool),
            nlos_paths=[NlosPath(**p) for p in doc["nlos_paths"]],
            sto=np.asarray(doc["sto"], dtype=int),
        )


@dataclass(frozen=True)
class TruePath:
    delay: int
    path_type: PathType
    target: int | None
    gain: complex


class TruePathTable:
    """Per (u, m) pair, the list of true channel taps."""

    def __init__(self, paths: dict[tuple[int, int], list[TruePath]]):
        self.paths = paths

    def __getitem__(self, pair):
        return self.paths[pair]

    def pairs(self):
        return sorted(self.paths.keys())

    def delay_sets(self) -> dict[tuple[int, int], set[int]]:
        return {pair: {p.delay for p in taps} for pair, taps in self.paths.items()}


def nlos_range_draw(
    d_los: float, grid: GridConfig, max_taps: int, rng: np.random.Generator
) -> float | None:
    """Draw a scattered-path range, uniform over the resolvable interval.

    The draw is strictly longer than the corresponding two-hop range (positive
    excess path length) with a two-half-quantum guard so the extra tap stays
    resolvable, and capped at the longest delay the channel model can carry.
    Returns None when the interval is empty.
    """
    if d_los <= 0:
        raise ValueError("d_los must be positive")
    q = range_quantum(grid)
    low = d_los + 2.0 * half_quantum(grid)
    high = max_taps * q * (1.0 - 1e-12)
    if low >= high:
        return None
    return float(rng.uniform(low, high))


def _resolvable(scene_pos, mask, bs, k, candidate, others, grid) -> bool:
    """Check the 2*half-quantum separation rules for a candidate target spot."""
    guard = 2.0 * half_quantum(grid)
    n_bs = len(bs)
    los_k = [m for m in range(n_bs) if mask[m, k]]
    # two-hop vs direct inter-BS separation
    for i, u in enumerate(los_k):
        for m in los_k[i + 1:]:
            d_um = direct_distance(bs[u], bs[m])
            if sum_distance(bs[u], bs[m], candidate) - d_um <= guard:
                return False
    # two-hop vs two-hop of already placed targets, same pair
    for j in others:
        los_j = [m for m in range(n_bs) if mask[m, j]]
        common = [m for m in los_k if m in los_j]
        for u in common:
            for m in common:
                if u > m:
                    continue
                dk = sum_distance(bs[u], bs[m], candidate)
                dj = sum_distance(bs[u], bs[m], scene_pos[j])
                if abs(dk - dj) <= guard:
                    return False
    return True


def generate(
    config: ScenarioConfig,
    grid: GridConfig,
    rng: np.random.Generator | None = None,
) -> Scenario:
    """Generate a random scene satisfying all placement invariants.

    BSs are drawn uniformly in the square with rejection until pairwise
    separations exceed the configured minimum; each target's LOS row is
    repaired until at least three BSs see it; target positions are rejection
    resampled until all same-pair path ranges are mutually resolvable.
    """
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    M, K, side = config.n_bs, config.n_targets, config.area_side

    for _ in range(_MAX_SCENE_ATTEMPTS):
        bs = rng.uniform(0.0, side, size=(M, 2))
        ok = all(
            direct_distance(bs[u], bs[m]) >= config.min_bs_separation
            for u in range(M) for m in range(u + 1, M)
        )
        if ok:
            break
    else:
        raise RuntimeError("could not place BSs with the required separation")

    sto = np.zeros((M, M), dtype=int)
    for u in range(M):
        for m in range(u + 1, M):
            t = int(rng.integers(-config.max_sto, config.max_sto + 1))
            sto[u, m] = t
            sto[m, u] = -t
    # The direct inter-BS tap must stay on the grid after the clock shift.
    for u in range(M):
        for m in range(M):
            if u != m:
                l_um = delay_in_samples(direct_distance(bs[u], bs[m]), grid)
                if l_um + sto[u, m] < 0:
                    raise RuntimeError(
                        "BS separation too small for the drawn clock offsets"
                    )

    # Blockage mask with the >= 3 detecting BSs repair.
    mask = rng.random((M, K)) >= config.blockage_prob
    for k in range(K):
        attempts = 0
        while mask[:, k].sum() < 3:
            mask[:, k] = rng.random(M) >= config.blockage_prob
            attempts += 1
            if attempts > _MAX_SCENE_ATTEMPTS:
                raise RuntimeError("blockage repair did not converge")

    positions = np.zeros((K, 2))
    for k in range(K):
        for attempt in range(_MAX_SCENE_ATTEMPTS):
            cand = rng.uniform(0.0, side, size=2)
            if _resolvable(positions, mask, bs, k, cand, range(k), grid):
                positions[k] = cand
                break
        else:
            raise RuntimeError(f"could not place target {k} resolvably")

    nlos: list[NlosPath] = []
    for k in range(K):
        pair_iter = (
            [(u, m) for u in range(M) for m in range(u, M)]
            if config.nlos_reciprocal
            else [(u, m) for u in range(M) for m in range(M)]
        )
        for u, m in pair_iter:
            if rng.random() >= config.nlos_prob:
                continue
            d_los = sum_distance(bs[u], bs[m], positions[k])
            r = nlos_range_draw(d_los, grid, config.max_taps, rng)
            if r is None:
                log.warning("scattered path for (%d,%d,%d) unresolvable, dropped", u, m, k)
                continue
            nlos.append(NlosPath(u, m, k, r))
            if config.nlos_reciprocal and u != m:
                nlos.append(NlosPath(m, u, k, r))

    return Scenario(
        bs_positions=bs,
        target_positions=positions,
        los_mask=mask,
        nlos_paths=nlos,
        sto=sto,
    )


def validate(scene: Scenario, config: ScenarioConfig, grid: GridConfig) -> list[str]:
    """Re-check every scene invariant; returns a list of violations."""
    errors = []
    M, K = scene.n_bs, scene.n_targets
    bs, pos = scene.bs_positions, scene.target_positions
    if not np.array_equal(scene.sto, -scene.sto.T):
        errors.append("STO matrix is not antisymmetric")
    if np.any(np.abs(scene.sto) > config.max_sto):
        errors.append("STO magnitude exceeds max_sto")
    if np.any(np.diag(scene.sto) != 0):
        errors.append("diagonal STO entries must be zero")
    for k in range(K):
        if scene.los_mask[:, k].sum() < 3:
            errors.append(f"target {k} detected by fewer than 3 BSs")
    guard = 2.0 * half_quantum(grid)
    for u in range(M):
        for m in range(M):
            if u != m and delay_in_samples(direct_distance(bs[u], bs[m]), grid) + scene.sto[u, m] < 0:
                errors.append(f"pair ({u},{m}) direct tap shifted below zero")
            los = [k for k in range(K) if scene.los_mask[u, k] and scene.los_mask[m, k]]
            for i, k in enumerate(los):
                for kk in los[i + 1:]:
                    if abs(sum_distance(bs[u], bs[m], pos[k]) - sum_distance(bs[u], bs[m], pos[kk])) <= guard:
                        errors.append(f"targets {k},{kk} unresolvable on pair ({u},{m})")
    for p in scene.nlos_paths:
        if p.range_m <= sum_distance(bs[p.u], bs[p.m], pos[p.k]):
            errors.append(f"scattered path {p} not longer than its two-hop range")
    return errors


def build_true_channels(
    scene: Scenario,
    grid: GridConfig,
    rng: np.random.Generator,
    max_taps: int,
    gain_model: str = "unit",
) -> TruePathTable:
    """Lay every physical path onto the per-pair delay grid.

    Every ordered pair gets a direct tap (delay 0 for u == m); each target
    with LOS to both endpoints contributes a two-hop tap; scattered paths
    are taken from the scene inventory. Taps landing in one bin add up.
    """
    if gain_model not in ("unit", "free_space"):
        raise ValueError(f"unknown gain model {gain_model!r}")
    M = scene.n_bs
    bs, pos = scene.bs_positions, scene.target_positions

    def gain(total_len: float) -> complex:
        phase = complex(np.exp(2j * np.pi * rng.random()))
        if gain_model == "free_space":
            return phase / max(total_len, 1.0)
        return phase

    paths: dict[tuple[int, int], list[TruePath]] = {}
    for u in range(M):
        for m in range(M):
            taps: list[TruePath] = []
            d_um = direct_distance(bs[u], bs[m])
            taps.append(TruePath(delay_in_samples(d_um, grid), PathType.DIRECT, None, gain(d_um)))
            for k in range(scene.n_targets):
                if scene.los_mask[u, k] and scene.los_mask[m, k]:
                    d = sum_distance(bs[u], bs[m], pos[k])
                    taps.append(TruePath(delay_in_samples(d, grid), PathType.TWO_HOP, k, gain(d)))
            for p in scene.nlos_paths:
                if p.u == u and p.m == m:
                    taps.append(
                        TruePath(delay_in_samples(p.range_m, grid), PathType.SCATTERED, p.k, gain(p.range_m))
                    )
            for t in taps:
                if t.delay >= max_taps:
                    raise ValueError(
                        f"path {t.path_type.value} on pair ({u},{m}) has delay "
                        f"{t.delay} >= max_taps {max_taps}"
                    )
            paths[(u, m)] = taps
    return TruePathTable(paths)


def true_range_table(
    scene: Scenario, grid: GridConfig
) -> tuple[RangeTable, dict[tuple[int, int], list[tuple[PathType, int | None]]]]:
    """Oracle range sets: quantized ranges of all non-direct paths.

    Returns the table plus, per pair, labels aligned with the sorted ranges
    marking each entry's origin (path type and target index). When a two-hop
    and a scattered path collapse into one bin, the two-hop label wins.
    """
    M = scene.n_bs
    bs, pos = scene.bs_positions, scene.target_positions
    sets: dict[tuple[int, int], list[float]] = {}
    labels: dict[tuple[int, int], list[tuple[PathType, int | None]]] = {}
    for u in range(M):
        for m in range(M):
            by_delay: dict[int, tuple[PathType, int | None]] = {}
            for p in scene.nlos_paths:
                if p.u == u and p.m == m:
                    by_delay[delay_in_samples(p.range_m, grid)] = (PathType.SCATTERED, p.k)
            for k in range(scene.n_targets):
                if scene.los_mask[u, k] and scene.los_mask[m, k]:
                    d = delay_in_samples(sum_distance(bs[u], bs[m], pos[k]), grid)
                    by_delay[d] = (PathType.TWO_HOP, k)
            delays = sorted(by_delay)
            sets[(u, m)] = [range_from_delay(l, grid) for l in delays]
            labels[(u, m)] = [by_delay[l] for l in delays]
    return RangeTable(sets), labels
