"""Monte Carlo experiment driver, baselines, and metrics.

A trial runs the full pipeline: scene generation, channel/echo synthesis,
sparse recovery, STO-corrected ranging, then target number and location
estimation by the proposed level-sweep association or one of two baselines
(no range-exclusivity constraint; oracle data association with residual-test
LOS identification). Trials are reproducible from (seed, trial_index) alone,
so results do not depend on the parallelism level.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from itertools import combinations
from pathlib import Path

import numpy as np

from . import association, localizer, ofdm, ranging, scenario, sparse
from .association import AssociationConfig, LevelStats, Mapping, SensingResult
from .geometry import GridConfig, half_quantum
from .localizer import GnConfig
from .ofdm import OfdmConfig
from .ranging import RangeTable
from .scenario import PathType, Scenario, ScenarioConfig
from .sparse import LassoConfig

METHODS = ("proposed", "bench1", "bench2")


@dataclass
class ExperimentConfig:
    trials: int
    scenario: ScenarioConfig
    ofdm: OfdmConfig
    lasso: LassoConfig = field(default_factory=LassoConfig)
    assoc: AssociationConfig | None = None
    gn: GnConfig = field(default_factory=GnConfig)
    success_radius: float = 0.5
    method: str = "proposed"  # proposed | bench1 | bench2 | all
    parallelism: int = 1
    seed: int = 0
    speed_of_light: float = 3e8
    gain_model: str = "unit"

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.success_radius <= 0:
            raise ValueError("success_radius must be positive")
        if self.method not in METHODS + ("all",):
            raise ValueError(f"unknown method {self.method!r}")
        if self.assoc is None:
            dd = half_quantum(self.grid)
            self.assoc = AssociationConfig(delta=3.0 * dd, beta=(2.0 * dd) ** 2)

    @property
    def grid(self) -> GridConfig:
        return GridConfig(
            n_subcarriers=self.ofdm.n_subcarriers,
            subcarrier_spacing=self.ofdm.subcarrier_spacing,
            speed_of_light=self.speed_of_light,
        )

    @property
    def tap_span(self) -> int:
        return self.scenario.max_taps + self.scenario.max_sto

    def methods(self) -> tuple[str, ...]:
        return METHODS if self.method == "all" else (self.method,)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["scenario"] = ScenarioConfig(**d["scenario"])
        d["ofdm"] = OfdmConfig(**d["ofdm"])
        if d.get("lasso"):
            d["lasso"] = LassoConfig(**d["lasso"])
        if d.get("assoc"):
            d["assoc"] = AssociationConfig(**d["assoc"])
        if d.get("gn"):
            d["gn"] = GnConfig(**d["gn"])
        return cls(**d)


def load_config(path) -> ExperimentConfig:
    """Read an experiment config from a JSON or TOML document."""
    path = Path(path)
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib

        with open(path, "rb") as fh:
            return ExperimentConfig.from_dict(tomllib.load(fh))
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def fast_config(n_targets: int = 4, **overrides) -> ExperimentConfig:
    """Reduced-subcarrier grid with the same occupied bandwidth (396 MHz)."""
    defaults = dict(
        trials=100,
        scenario=ScenarioConfig(n_targets=n_targets),
        ofdm=OfdmConfig(
            n_subcarriers=512,
            cp_length=330,
            tx_power=20.0,
            noise_variance=1.0,
            subcarrier_spacing=396e6 / 512,
        ),
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


def full_config(n_targets: int = 4, **overrides) -> ExperimentConfig:
    """Full 3300-subcarrier, 120 kHz spacing grid (B = 400 MHz class)."""
    defaults = dict(
        trials=300,
        scenario=ScenarioConfig(n_targets=n_targets),
        ofdm=OfdmConfig(
            n_subcarriers=3300,
            cp_length=330,
            tx_power=20.0,
            noise_variance=1.0,
            subcarrier_spacing=120e3,
        ),
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


@dataclass
class MethodOutcome:
    detected: int
    correct: int
    wall_time: float


@dataclass
class TrialOutcome:
    trial_index: int
    true_count: int
    phase1_error: bool
    methods: dict[str, MethodOutcome]
    error_propagation: int = 0
    level_stats: list[LevelStats] = field(default_factory=list)
    failure: str | None = None


@dataclass
class MetricsReport:
    p_md: dict[str, float]
    p_fa: dict[str, float]
    phase1_error_rate: float
    mean_runtime: dict[str, float]
    cardinality: dict[int, dict[str, float]]  # level -> mean set sizes
    trials: int
    failures: int


def greedy_match(true_pos: np.ndarray, est_pos: list, radius: float) -> int:
    """Greedy nearest-pair matching within the success radius."""
    if len(true_pos) == 0 or not est_pos:
        return 0
    cand = []
    for ti, tp in enumerate(true_pos):
        for ei, ep in enumerate(est_pos):
            if ep is None or any(not math.isfinite(c) for c in ep):
                continue
            d = math.hypot(tp[0] - ep[0], tp[1] - ep[1])
            if d <= radius:
                cand.append((d, ti, ei))
    cand.sort()
    used_t: set[int] = set()
    used_e: set[int] = set()
    n = 0
    for _, ti, ei in cand:
        if ti in used_t or ei in used_e:
            continue
        used_t.add(ti)
        used_e.add(ei)
        n += 1
    return n


def phase1_error_metric(
    corrected: dict[tuple[int, int], set[int]],
    truth: dict[tuple[int, int], set[int]],
) -> bool:
    """True when any pair's corrected support differs from the true delay set."""
    pairs = set(corrected) | set(truth)
    return any(corrected.get(p, set()) != truth.get(p, set()) for p in pairs)


def benchmark1(
    table: RangeTable,
    bs_positions: np.ndarray,
    cfg: AssociationConfig,
    gn_cfg: GnConfig,
    merge_radius: float,
) -> SensingResult:
    """No range-exclusivity baseline: every residual-passing mapping detects a
    target; detections closer than the success radius are merged."""
    n_bs = len(bs_positions)
    all_mappings: list[Mapping] = []
    stats = []
    for level in range(n_bs, cfg.min_detect - 1, -1):
        cands = association.enumerate_feasible(table, level, cfg, n_bs)
        filtered = association.residual_filter(cands, table, bs_positions, cfg, gn_cfg)
        stats.append(
            LevelStats(
                level,
                association.count_unconstrained(table, level, n_bs),
                len(cands),
                len(filtered),
            )
        )
        all_mappings.extend(filtered)
    all_mappings.sort(key=lambda m: (m.residual, m.key()))
    result = SensingResult(0, [], [], [], [], stats)
    for mp in all_mappings:
        if any(
            math.hypot(mp.location[0] - loc[0], mp.location[1] - loc[1]) <= merge_radius
            for loc in result.locations
        ):
            continue
        result.mappings.append(mp)
        result.locations.append(mp.location)
        result.residuals.append(mp.residual)
        result.levels.append(len(mp.detecting()))
        result.n_targets += 1
    return result


def _label_entries(table: RangeTable, paths: scenario.TruePathTable, grid):
    """Match each estimated range entry to the true path that produced it."""
    from .geometry import range_from_delay

    labels: dict[tuple[int, int], list] = {}
    for (u, m), vals in table.sets.items():
        by_delay = {}
        for p in paths[(u, m)]:
            if p.path_type == PathType.DIRECT:
                continue
            cur = by_delay.get(p.delay)
            if cur is None or cur[0] == PathType.SCATTERED:
                by_delay[p.delay] = (p.path_type, p.target)
        lab = []
        for v in vals:
            match = None
            for delay, tag in by_delay.items():
                if abs(v - range_from_delay(delay, grid)) < 0.25 * half_quantum(grid):
                    match = tag
                    break
            lab.append(match)
        labels[(u, m)] = lab
    return labels


def benchmark2(
    table: RangeTable,
    paths: scenario.TruePathTable,
    scene: Scenario,
    grid: GridConfig,
    cfg: AssociationConfig,
    gn_cfg: GnConfig,
) -> SensingResult:
    """Oracle data association baseline: per true target, only LOS
    identification remains, done by a residual test over BS subsets.

    For each target the candidate range per pair is the shortest estimated
    entry attributed to it (excess path length of scattered paths is always
    positive). The largest BS subset whose fit residual passes the gate wins.
    """
    labels = _label_entries(table, paths, grid)
    groups: dict[int, dict[tuple[int, int], list[float]]] = {
        k: {} for k in range(scene.n_targets)
    }
    for (u, m), lab in labels.items():
        for idx, tag in enumerate(lab):
            if tag is None:
                continue
            _, k = tag
            groups[k].setdefault((u, m), []).append(table.sets[(u, m)][idx])

    result = SensingResult(0, [], [], [], [])
    for k in range(scene.n_targets):
        grp = groups[k]
        avail = [m for m in range(scene.n_bs) if (m, m) in grp]
        best = None
        for size in range(len(avail), cfg.min_detect - 1, -1):
            for subset in combinations(avail, size):
                pairs = [(u, m) for u in subset for m in subset]
                if any(p not in grp for p in pairs):
                    continue
                a = [scene.bs_positions[u] for u, _ in pairs]
                b = [scene.bs_positions[m] for _, m in pairs]
                d = [min(grp[p]) for p in pairs]
                fit = localizer.fit(
                    localizer.NlsProblem(np.array(a), np.array(b), np.array(d)), gn_cfg
                )
                if fit.residual <= cfg.residual_threshold(size):
                    if best is None or fit.residual < best[1].residual:
                        best = (size, fit)
            if best is not None:
                break
        if best is not None:
            _, fit = best
            result.n_targets += 1
            result.locations.append(fit.location)
            result.residuals.append(fit.residual)
            result.levels.append(best[0])
            result.mappings.append(Mapping(np.zeros((scene.n_bs, scene.n_bs), dtype=int)))
    return result


def run_phase1(cfg: ExperimentConfig, trial_index: int):
    """Scene synthesis plus Phase I; returns everything Phase II needs."""
    grid = cfg.grid
    cfg.ofdm.check_cp(cfg.tap_span)
    seq = np.random.SeedSequence([cfg.seed, trial_index])
    scene_rng, gain_rng, pilot_rng, noise_rng = (
        np.random.default_rng(s) for s in seq.spawn(4)
    )
    scene = scenario.generate(cfg.scenario, grid, rng=scene_rng)
    paths = scenario.build_true_channels(
        scene, grid, gain_rng, cfg.scenario.max_taps, cfg.gain_model
    )
    pilots = ofdm.make_pilots(cfg.scenario.n_bs, cfg.ofdm.n_subcarriers, pilot_rng)
    virtual = ofdm.virtual_shift(paths, scene.sto, cfg.tap_span)
    stacked = ofdm.receiver_stack(virtual, cfg.scenario.n_bs, cfg.tap_span)
    measurements = ofdm.synthesize(pilots, stacked, cfg.ofdm, noise_rng)
    op = ofdm.SensingOperator(pilots, cfg.tap_span)

    lasso_cfg = cfg.lasso
    if lasso_cfg.penalty is None:
        penalty = sparse.default_penalty(
            cfg.ofdm.tx_power,
            cfg.ofdm.noise_variance,
            cfg.ofdm.n_subcarriers,
            op.dim,
        )
        lasso_cfg = LassoConfig(
            penalty=penalty,
            max_iterations=lasso_cfg.max_iterations,
            convergence_tol=lasso_cfg.convergence_tol,
            support_threshold=lasso_cfg.support_threshold,
        )
    rec = sparse.solve_lasso(measurements, op, cfg.ofdm.tx_power, lasso_cfg)
    support = sparse.extract_support(rec)
    sto_est = ranging.estimate_sto(support, scene.bs_positions, grid)
    table = ranging.ranges_from_support(support, sto_est, grid)
    p1err = phase1_error_metric(
        ranging.corrected_supports(support, sto_est), paths.delay_sets()
    )
    return scene, paths, table, p1err


def run_trial(cfg: ExperimentConfig, trial_index: int) -> TrialOutcome:
    grid = cfg.grid
    try:
        scene, paths, table, p1err = run_phase1(cfg, trial_index)
    except Exception as exc:  # a failed trial is recorded, never dropped
        return TrialOutcome(
            trial_index, cfg.scenario.n_targets, True, {}, failure=repr(exc)
        )

    outcomes: dict[str, MethodOutcome] = {}
    errprop = 0
    level_stats: list[LevelStats] = []
    for method in cfg.methods():
        t0 = time.perf_counter()
        if method == "proposed":
            result = association.solve_all(table, scene.bs_positions, cfg.assoc, cfg.gn)
            errprop = len(
                association.detect_error_propagation(result, table, scene, grid)
            )
            level_stats = result.level_stats
        elif method == "bench1":
            result = benchmark1(
                table, scene.bs_positions, cfg.assoc, cfg.gn, cfg.success_radius
            )
        else:
            result = benchmark2(table, paths, scene, grid, cfg.assoc, cfg.gn)
        dt = time.perf_counter() - t0
        correct = greedy_match(
            scene.target_positions, result.locations, cfg.success_radius
        )
        outcomes[method] = MethodOutcome(result.n_targets, correct, dt)
    return TrialOutcome(
        trial_index,
        scene.n_targets,
        p1err,
        outcomes,
        error_propagation=errprop,
        level_stats=level_stats,
    )


def _trial_worker(args) -> TrialOutcome:
    cfg_dict, index = args
    return run_trial(ExperimentConfig.from_dict(cfg_dict), index)


def run_trials(cfg: ExperimentConfig) -> list[TrialOutcome]:
    indices = list(range(cfg.trials))
    if cfg.parallelism > 1:
        payload = [(cfg.to_dict(), i) for i in indices]
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            outcomes = list(pool.map(_trial_worker, payload, chunksize=4))
    else:
        outcomes = [run_trial(cfg, i) for i in indices]
    outcomes.sort(key=lambda o: o.trial_index)
    return outcomes


def aggregate(cfg: ExperimentConfig, outcomes: list[TrialOutcome]) -> MetricsReport:
    """Miss-detection and false-alarm rates over all trials, per method."""
    k_total = sum(o.true_count for o in outcomes)
    denom = max(k_total, 1)
    p_md, p_fa, mean_rt = {}, {}, {}
    for method in cfg.methods():
        missed = alarms = 0
        times = []
        for o in outcomes:
            mo = o.methods.get(method)
            if mo is None:  # failed trial: all targets missed, none detected
                missed += o.true_count
                continue
            missed += o.true_count - mo.correct
            alarms += mo.detected - mo.correct
            times.append(mo.wall_time)
        p_md[method] = missed / denom
        p_fa[method] = alarms / denom
        mean_rt[method] = float(np.mean(times)) if times else math.nan
    card: dict[int, dict[str, list[float]]] = {}
    for o in outcomes:
        for s in o.level_stats:
            acc = card.setdefault(
                s.level, {"unconstrained": [], "feasible": [], "filtered": []}
            )
            acc["unconstrained"].append(s.n_unconstrained)
            acc["feasible"].append(s.n_feasible)
            acc["filtered"].append(s.n_filtered)
    cardinality = {
        lvl: {k: float(np.mean(v)) for k, v in acc.items()} for lvl, acc in card.items()
    }
    return MetricsReport(
        p_md=p_md,
        p_fa=p_fa,
        phase1_error_rate=sum(o.phase1_error for o in outcomes) / len(outcomes),
        mean_runtime=mean_rt,
        cardinality=cardinality,
        trials=len(outcomes),
        failures=sum(o.failure is not None for o in outcomes),
    )


def write_outputs(cfg, outcomes, report, out_dir) -> None:
    """Emit trials.csv, timings.csv, cardinality.csv, and summary.json.

    trials.csv carries only deterministic fields so its bytes are identical
    for a given config at any parallelism level; wall times go to
    timings.csv.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    methods = cfg.methods()
    with open(out / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["trial", "K"]
        for m in methods:
            prefix = "" if len(methods) == 1 else f"{m}_"
            header += [f"{prefix}K_i", f"{prefix}N_i"]
        header += ["phase1_err", "errprop"]
        w.writerow(header)
        for o in outcomes:
            row = [o.trial_index, o.true_count]
            for m in methods:
                mo = o.methods.get(m)
                row += [mo.detected, mo.correct] if mo else ["", ""]
            row += [int(o.phase1_error), o.error_propagation]
            w.writerow(row)
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial"] + [f"{m}_time_s" for m in methods])
        for o in outcomes:
            w.writerow(
                [o.trial_index]
                + [
                    f"{o.methods[m].wall_time:.6f}" if m in o.methods else ""
                    for m in methods
                ]
            )
    with open(out / "cardinality.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "mean_unconstrained", "mean_feasible", "mean_filtered"])
        for lvl in sorted(report.cardinality):
            c = report.cardinality[lvl]
            w.writerow(
                [lvl, c["unconstrained"], c["feasible"], c["filtered"]]
            )
    summary = {
        "p_md": report.p_md,
        "p_fa": report.p_fa,
        "phase1_error_rate": report.phase1_error_rate,
        "mean_runtime": report.mean_runtime,
        "cardinality": {str(k): v for k, v in report.cardinality.items()},
        "trials": report.trials,
        "failures": report.failures,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> MetricsReport:
    outcomes = run_trials(cfg)
    report = aggregate(cfg, outcomes)
    if out_dir is not None:
        write_outputs(cfg, outcomes, report, out_dir)
    return report
