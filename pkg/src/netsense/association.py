"""Joint LOS identification and data association over per-pair range sets.

A candidate mapping assigns one range index (or 0 = absent) per BS pair to a
hypothesized target. Candidates are enumerated per detection level l (number
of BSs seeing the target), pruned by the sum-range triangle constraints and
by the localization residual, then a maximal conflict-free set is selected
greedily per level, working from l = M down to 3 and removing assigned
ranges between levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from . import localizer
from .geometry import delay_in_samples, direct_distance, half_quantum, range_from_delay
from .localizer import GnConfig, NlsProblem
from .ranging import RangeTable

Pair = tuple[int, int]


@dataclass
class AssociationConfig:
    delta: float                    # sum-range tolerance, meters
    beta: float                     # residual threshold coefficient, m^2
    min_detect: int = 3
    frontier_cap: int = 256
    anchor: int = 0
    # threshold grows with the detection level (more terms in the residual);
    # set False to use `beta` as an absolute per-mapping threshold
    beta_per_level: bool = True

    def __post_init__(self) -> None:
        if self.delta <= 0 or self.beta <= 0:
            raise ValueError("delta and beta must be positive")

    def residual_threshold(self, level: int) -> float:
        return self.beta * level if self.beta_per_level else self.beta


@dataclass
class Mapping:
    g: np.ndarray  # (M, M) int, 1-based indices into the range sets, 0 = absent
    residual: float = math.inf
    location: tuple[float, float] | None = None

    def detecting(self) -> list[int]:
        return [m for m in range(len(self.g)) if self.g[m, m] > 0]

    def key(self) -> tuple:
        u, m = np.nonzero(self.g)
        return tuple((int(a), int(b), int(self.g[a, b])) for a, b in zip(u, m))

    def conflicts(self, other: "Mapping") -> bool:
        return bool(np.any((self.g > 0) & (self.g == other.g)))


@dataclass
class LevelSolution:
    level: int
    mappings: list[Mapping]
    count: int
    total_residual: float
    truncated: bool = False


@dataclass
class LevelStats:
    level: int
    n_unconstrained: float  # analytic |G^(l)|, not enumerated
    n_feasible: int         # after sum-range constraints
    n_filtered: int         # after the residual gate


@dataclass
class SensingResult:
    n_targets: int
    locations: list[tuple[float, float]]
    residuals: list[float]
    mappings: list[Mapping]   # indices into the *original* range sets
    levels: list[int]
    level_stats: list[LevelStats] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_targets": self.n_targets,
            "locations": [list(p) for p in self.locations],
            "residuals": self.residuals,
            "levels": self.levels,
            "mappings": [m.g.tolist() for m in self.mappings],
            "level_stats": [
                {
                    "level": s.level,
                    "n_unconstrained": s.n_unconstrained,
                    "n_feasible": s.n_feasible,
                    "n_filtered": s.n_filtered,
                }
                for s in self.level_stats
            ],
        }


def count_unconstrained(table: RangeTable, level: int, n_bs: int) -> float:
    """Analytic count of index assignments with exactly `level` detecting BSs."""
    total = 0.0
    for subset in combinations(range(n_bs), level):
        prod = 1.0
        for m in subset:
            prod *= table.size(m, m)
        for u in subset:
            for m in subset:
                if u != m:
                    prod *= table.size(u, m)
        total += prod
    return total


def enumerate_feasible(
    table: RangeTable, level: int, cfg: AssociationConfig, n_bs: int
) -> list[Mapping]:
    """All mappings passing the index bounds and the sum-range constraints.

    Direct (monostatic) indices drive the search: the predicted sum range for
    a pair is the mean of the two round-trip ranges, and both receive
    directions must contain an entry within delta of it. BSs are added one at
    a time so infeasible pairs prune the product early.
    """
    out: list[Mapping] = []
    for subset in combinations(range(n_bs), level):
        if any(table.size(m, m) == 0 for m in subset):
            continue
        _search(table, cfg, list(subset), 0, {}, out, n_bs)
    return out


def _search(table, cfg, subset, depth, mono, out, n_bs):
    if depth == len(subset):
        _emit(table, cfg, subset, mono, out, n_bs)
        return
    m = subset[depth]
    for g in range(1, table.size(m, m) + 1):
        dm = table.get(m, m, g) / 2.0
        ok = True
        for u in subset[:depth]:
            s = table.get(u, u, mono[u]) / 2.0 + dm
            if not table.indices_near(u, m, s, cfg.delta) or not table.indices_near(
                m, u, s, cfg.delta
            ):
                ok = False
                break
        if ok:
            mono[m] = g
            _search(table, cfg, subset, depth + 1, mono, out, n_bs)
            del mono[m]


def _emit(table, cfg, subset, mono, out, n_bs):
    """Expand every combination of bistatic candidates for fixed direct indices."""
    pairs = [(u, m) for u, m in combinations(subset, 2)]
    options = []
    for u, m in pairs:
        s = table.get(u, u, mono[u]) / 2.0 + table.get(m, m, mono[m]) / 2.0
        c_um = table.indices_near(u, m, s, cfg.delta)
        c_mu = table.indices_near(m, u, s, cfg.delta)
        options.append([(a, b) for a in c_um for b in c_mu])
    for combo in product(*options):
        g = np.zeros((n_bs, n_bs), dtype=int)
        for m, gm in mono.items():
            g[m, m] = gm
        for (u, m), (a, b) in zip(pairs, combo):
            g[u, m] = a
            g[m, u] = b
        out.append(Mapping(g=g))


def build_problem(
    g: np.ndarray, table: RangeTable, bs_positions: np.ndarray
) -> NlsProblem:
    """Localization problem from a mapping: one term per positive index."""
    a, b, d = [], [], []
    for u in range(len(g)):
        for m in range(len(g)):
            if g[u, m] > 0:
                a.append(bs_positions[u])
                b.append(bs_positions[m])
                d.append(table.get(u, m, int(g[u, m])))
    return NlsProblem(bs_a=np.array(a), bs_b=np.array(b), ranges=np.array(d))


def residual_filter(
    candidates: list[Mapping],
    table: RangeTable,
    bs_positions: np.ndarray,
    cfg: AssociationConfig,
    gn_cfg: GnConfig,
) -> list[Mapping]:
    """Keep candidates whose localization residual passes the gate."""
    kept = []
    for cand in candidates:
        fit = localizer.fit(build_problem(cand.g, table, bs_positions), gn_cfg)
        if not math.isfinite(fit.residual):
            continue
        level = len(cand.detecting())
        if fit.residual <= cfg.residual_threshold(level):
            cand.residual = fit.residual
            cand.location = fit.location
            kept.append(cand)
    return kept


def partition_by_anchor(
    filtered: list[Mapping], n_anchor: int, anchor: int = 0
) -> list[list[Mapping]]:
    """Split mappings into n_anchor + 1 buckets by their anchor direct index."""
    buckets: list[list[Mapping]] = [[] for _ in range(n_anchor + 1)]
    for m in filtered:
        buckets[int(m.g[anchor, anchor])].append(m)
    return buckets


def greedy_select(
    partition: list[list[Mapping]], cfg: AssociationConfig
) -> LevelSolution:
    """Greedy maximal conflict-free selection across the anchor buckets.

    Bucket 0 (targets invisible to the anchor BS) places no per-bucket limit
    on the selection, so each of its mappings is treated as its own singleton
    bucket. A frontier of partial selections is carried along; whenever any
    frontier set can absorb a mapping from the current bucket, all extended
    sets replace the frontier and the count grows by one.
    """
    def order(ms):
        return sorted(ms, key=lambda m: (m.residual, m.key()))

    buckets: list[list[Mapping]] = [[m] for m in order(partition[0])]
    buckets += [order(b) for b in partition[1:] if b]

    frontier: list[tuple[tuple[Mapping, ...], float]] = [((), 0.0)]
    count = 0
    truncated = False
    for bucket in buckets:
        extended = []
        for sel, tot in frontier:
            for cand in bucket:
                if all(not cand.conflicts(s) for s in sel):
                    extended.append((sel + (cand,), tot + cand.residual))
        if extended:
            count += 1
            extended.sort(key=lambda e: (e[1], tuple(m.key() for m in e[0])))
            if len(extended) > cfg.frontier_cap:
                truncated = True
                extended = extended[: cfg.frontier_cap]
            frontier = extended
    best_sel, best_tot = min(
        frontier, key=lambda e: (e[1], tuple(m.key() for m in e[0]))
    )
    level = len(best_sel[0].detecting()) if best_sel else 0
    return LevelSolution(
        level=level,
        mappings=list(best_sel),
        count=count,
        total_residual=best_tot,
        truncated=truncated,
    )


def solve_level(
    table: RangeTable,
    level: int,
    bs_positions: np.ndarray,
    cfg: AssociationConfig,
    gn_cfg: GnConfig,
) -> tuple[LevelSolution, LevelStats]:
    n_bs = len(bs_positions)
    if not cfg.min_detect <= level <= n_bs:
        raise ValueError(f"level must be in [{cfg.min_detect}, {n_bs}]")
    candidates = enumerate_feasible(table, level, cfg, n_bs)
    filtered = residual_filter(candidates, table, bs_positions, cfg, gn_cfg)
    stats = LevelStats(
        level=level,
        n_unconstrained=count_unconstrained(table, level, n_bs),
        n_feasible=len(candidates),
        n_filtered=len(filtered),
    )
    partition = partition_by_anchor(filtered, table.size(cfg.anchor, cfg.anchor), cfg.anchor)
    sol = greedy_select(partition, cfg)
    sol.level = level
    return sol, stats


def solve_all(
    table: RangeTable,
    bs_positions: np.ndarray,
    cfg: AssociationConfig,
    gn_cfg: GnConfig,
) -> SensingResult:
    """Level sweep from M down to 3 with range removal between levels.

    Accepted mappings are reported with indices into the *original* range
    sets; removal guarantees that no range feeds two accepted mappings.
    """
    n_bs = len(bs_positions)
    working: dict[Pair, list[tuple[float, int]]] = {
        pair: [(v, i + 1) for i, v in enumerate(vals)]
        for pair, vals in table.sets.items()
    }
    result = SensingResult(0, [], [], [], [])
    for level in range(n_bs, cfg.min_detect - 1, -1):
        view = RangeTable({pair: [v for v, _ in ents] for pair, ents in working.items()})
        sol, stats = solve_level(view, level, bs_positions, cfg, gn_cfg)
        result.level_stats.append(stats)
        to_remove: dict[Pair, set[int]] = {}
        for mp in sol.mappings:
            orig = np.zeros_like(mp.g)
            for u in range(n_bs):
                for m in range(n_bs):
                    gg = int(mp.g[u, m])
                    if gg > 0:
                        orig[u, m] = working[(u, m)][gg - 1][1]
                        to_remove.setdefault((u, m), set()).add(gg - 1)
            result.mappings.append(Mapping(orig, mp.residual, mp.location))
            result.locations.append(mp.location)
            result.residuals.append(mp.residual)
            result.levels.append(level)
        for pair, positions in to_remove.items():
            working[pair] = [
                e for i, e in enumerate(working[pair]) if i not in positions
            ]
        result.n_targets += sol.count
    return result


def verify_mappings(
    mappings: list[Mapping],
    table: RangeTable,
    bs_positions: np.ndarray,
    cfg: AssociationConfig,
    gn_cfg: GnConfig,
    levels: list[int] | None = None,
) -> list[str]:
    """Independent post-hoc constraint checker; returns violation messages."""
    errors = []
    n_bs = len(bs_positions)
    for i, mp in enumerate(mappings):
        g = mp.g
        det = mp.detecting()
        if levels is not None and len(det) != levels[i]:
            errors.append(f"mapping {i}: detecting-set size != recorded level")
        if len(det) < cfg.min_detect:
            errors.append(f"mapping {i}: fewer than {cfg.min_detect} detecting BSs")
        broken = False
        for u in range(n_bs):
            for m in range(n_bs):
                gg = int(g[u, m])
                if gg < 0 or gg > table.size(u, m):
                    errors.append(f"mapping {i}: index out of bounds at ({u},{m})")
                    broken = True
                want = g[u, u] > 0 and g[m, m] > 0
                if (gg > 0) != want:
                    errors.append(f"mapping {i}: structure violated at ({u},{m})")
                    broken = True
        if broken:
            continue  # range lookups below would be meaningless
        for u, m in combinations(det, 2):
            s = table.get(u, u, int(g[u, u])) / 2.0 + table.get(m, m, int(g[m, m])) / 2.0
            if abs(s - table.get(u, m, int(g[u, m]))) > cfg.delta + 1e-12:
                errors.append(f"mapping {i}: sum-range constraint failed at ({u},{m})")
            if abs(s - table.get(m, u, int(g[m, u]))) > cfg.delta + 1e-12:
                errors.append(f"mapping {i}: sum-range constraint failed at ({m},{u})")
        fit = localizer.fit(build_problem(g, table, bs_positions), gn_cfg)
        if fit.residual > cfg.residual_threshold(len(det)) + 1e-9:
            errors.append(f"mapping {i}: residual {fit.residual:.3g} above threshold")
    for i, a in enumerate(mappings):
        for j in range(i + 1, len(mappings)):
            if a.conflicts(mappings[j]):
                errors.append(f"mappings {i} and {j} share an assigned range")
    return errors


def detect_error_propagation(
    result: SensingResult, table: RangeTable, scene, grid
) -> list[dict]:
    """Spurious-mapping events: accepted above-minimum-level mappings sharing
    at most two direct ranges with every true target (evaluation only)."""
    n_bs = scene.n_bs
    true_idx = np.zeros((n_bs, scene.n_targets), dtype=int)
    tol = half_quantum(grid)
    for m in range(n_bs):
        for k in range(scene.n_targets):
            if not scene.los_mask[m, k]:
                continue
            d = 2.0 * direct_distance(scene.bs_positions[m], scene.target_positions[k])
            expected = range_from_delay(delay_in_samples(d, grid), grid)
            hits = table.indices_near(m, m, expected, tol)
            if hits:
                true_idx[m, k] = hits[0]
    events = []
    for i, (mp, level) in enumerate(zip(result.mappings, result.levels)):
        if level <= 3:
            continue
        max_shared = 0
        for k in range(scene.n_targets):
            shared = sum(
                1
                for m in range(n_bs)
                if mp.g[m, m] > 0 and mp.g[m, m] == true_idx[m, k]
            )
            max_shared = max(max_shared, shared)
        if max_shared <= 2:
            events.append({"mapping_index": i, "level": level, "max_shared": max_shared})
    return events
