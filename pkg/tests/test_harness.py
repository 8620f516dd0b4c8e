import filecmp
import json
import math

import numpy as np
import pytest

from netsense import cli, harness
from netsense.association import AssociationConfig
from netsense.harness import (
    ExperimentConfig,
    MethodOutcome,
    TrialOutcome,
    aggregate,
    benchmark1,
    benchmark2,
    fast_config,
    greedy_match,
    load_config,
    full_config,
    phase1_error_metric,
    run_experiment,
    run_phase1,
    run_trial,
)
from netsense.localizer import GnConfig
from netsense.ofdm import OfdmConfig
from netsense.scenario import ScenarioConfig


def noiseless_cfg(n_targets=2, trials=2, **kw):
    cfg = fast_config(n_targets=n_targets, trials=trials, **kw)
    cfg.ofdm = OfdmConfig(
        n_subcarriers=512,
        cp_length=330,
        tx_power=20.0,
        noise_variance=0.0,
        subcarrier_spacing=396e6 / 512,
    )
    cfg.scenario = ScenarioConfig(
        n_targets=n_targets, blockage_prob=0.0, nlos_prob=0.0
    )
    return cfg


def test_config_presets():
    fc = fast_config()
    assert fc.grid.bandwidth == pytest.approx(396e6)
    assert fc.tap_span == 310
    assert fc.assoc is not None and fc.assoc.delta > 0
    pc = full_config()
    assert pc.ofdm.n_subcarriers == 3300
    assert pc.grid.bandwidth == pytest.approx(396e6)
    assert fc.methods() == ("proposed",)
    fc.method = "all"
    assert fc.methods() == ("proposed", "bench1", "bench2")
    with pytest.raises(ValueError):
        fast_config(method="nope")
    with pytest.raises(ValueError):
        fast_config(trials=0)


def test_config_dict_roundtrip_and_files(tmp_path):
    cfg = fast_config(n_targets=3, trials=7, seed=5)
    back = ExperimentConfig.from_dict(cfg.to_dict())
    assert back.to_dict() == cfg.to_dict()
    j = tmp_path / "cfg.json"
    j.write_text(json.dumps(cfg.to_dict()))
    assert load_config(j).to_dict() == cfg.to_dict()


def test_load_config_toml(tmp_path):
    doc = """
trials = 4
seed = 9

[scenario]
n_targets = 2

[ofdm]
n_subcarriers = 512
cp_length = 330
tx_power = 20.0
noise_variance = 0.5
subcarrier_spacing = 773437.5
"""
    p = tmp_path / "cfg.toml"
    p.write_text(doc)
    cfg = load_config(p)
    assert cfg.trials == 4 and cfg.seed == 9
    assert cfg.scenario.n_targets == 2
    assert cfg.ofdm.noise_variance == 0.5


def test_greedy_match():
    true_pos = np.array([[0.0, 0.0], [10.0, 10.0]])
    est = [(0.1, 0.1), (30.0, 30.0)]
    assert greedy_match(true_pos, est, radius=0.5) == 1
    assert greedy_match(true_pos, est, radius=50.0) == 2
    # one estimate cannot claim two targets
    assert greedy_match(np.array([[0.0, 0.0], [0.2, 0.0]]), [(0.1, 0.0)], 0.5) == 1
    assert greedy_match(true_pos, [], 0.5) == 0
    assert greedy_match(np.zeros((0, 2)), est, 0.5) == 0
    assert greedy_match(true_pos, [(math.nan, math.nan)], 0.5) == 0


def test_phase1_error_metric():
    truth = {(0, 0): {0, 5}, (0, 1): {7}}
    assert not phase1_error_metric({(0, 0): {0, 5}, (0, 1): {7}}, truth)
    assert phase1_error_metric({(0, 0): {0}, (0, 1): {7}}, truth)
    assert phase1_error_metric({(0, 0): {0, 5}}, truth)
    assert phase1_error_metric({(0, 0): {0, 5}, (0, 1): {7}, (1, 1): {0}}, truth)


def test_aggregate_formulas():
    cfg = noiseless_cfg(trials=2)
    outcomes = [
        TrialOutcome(0, 4, False, {"proposed": MethodOutcome(5, 3, 0.1)}),
        TrialOutcome(1, 4, True, {"proposed": MethodOutcome(3, 3, 0.3)}),
    ]
    rep = aggregate(cfg, outcomes)
    # missed = (4-3) + (4-3) = 2 over 8; alarms = (5-3) + 0 = 2 over 8
    assert rep.p_md["proposed"] == pytest.approx(0.25)
    assert rep.p_fa["proposed"] == pytest.approx(0.25)
    assert rep.phase1_error_rate == pytest.approx(0.5)
    assert rep.mean_runtime["proposed"] == pytest.approx(0.2)
    assert rep.failures == 0


def test_aggregate_failed_trial_counts_as_missed():
    cfg = noiseless_cfg(trials=2)
    outcomes = [
        TrialOutcome(0, 4, False, {"proposed": MethodOutcome(4, 4, 0.1)}),
        TrialOutcome(1, 4, True, {}, failure="RuntimeError('x')"),
    ]
    rep = aggregate(cfg, outcomes)
    assert rep.p_md["proposed"] == pytest.approx(0.5)
    assert rep.p_fa["proposed"] == pytest.approx(0.0)
    assert rep.failures == 1


def test_run_phase1_noiseless_exact():
    cfg = noiseless_cfg(n_targets=2)
    scene, paths, table, p1err = run_phase1(cfg, 0)
    assert not p1err
    # range-set sizes match the oracle everywhere
    from netsense.scenario import true_range_table

    oracle, _ = true_range_table(scene, cfg.grid)
    assert table == oracle


def test_run_trial_deterministic_and_correct():
    cfg = noiseless_cfg(n_targets=2)
    a = run_trial(cfg, 0)
    b = run_trial(cfg, 0)
    assert a.methods["proposed"].detected == b.methods["proposed"].detected
    assert a.true_count == 2
    assert a.methods["proposed"].correct == 2
    assert a.failure is None
    # different trial index gives a different scene
    c = run_trial(cfg, 1)
    assert c.failure is None


def test_benchmarks_on_clean_trial():
    cfg = noiseless_cfg(n_targets=2)
    cfg.method = "all"
    out = run_trial(cfg, 0)
    for method in ("proposed", "bench1", "bench2"):
        assert out.methods[method].correct == 2
    # bench1 never detects fewer than the exclusivity-constrained method
    assert out.methods["bench1"].detected >= out.methods["proposed"].detected


def test_benchmark2_respects_min_detect():
    cfg = noiseless_cfg(n_targets=1)
    scene, paths, table, _ = run_phase1(cfg, 3)
    res = benchmark2(table, paths, scene, cfg.grid, cfg.assoc, cfg.gn)
    assert res.n_targets == 1
    assert res.levels[0] >= cfg.assoc.min_detect


def test_run_experiment_outputs(tmp_path):
    cfg = noiseless_cfg(n_targets=2, trials=3)
    cfg.method = "all"
    rep = run_experiment(cfg, out_dir=tmp_path)
    for name in ("trials.csv", "timings.csv", "cardinality.csv", "summary.json"):
        assert (tmp_path / name).exists()
    rows = (tmp_path / "trials.csv").read_text().strip().splitlines()
    assert len(rows) == 4  # header + 3 trials
    assert rows[0].startswith("trial,K,proposed_K_i,proposed_N_i,bench1_K_i")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["trials"] == 3
    assert set(summary["p_md"]) == {"proposed", "bench1", "bench2"}
    assert rep.p_md["proposed"] <= 0.5


def test_trials_csv_parallelism_invariant(tmp_path):
    cfg1 = noiseless_cfg(n_targets=2, trials=3, seed=11)
    run_experiment(cfg1, out_dir=tmp_path / "p1")
    cfg2 = noiseless_cfg(n_targets=2, trials=3, seed=11)
    cfg2.parallelism = 2
    run_experiment(cfg2, out_dir=tmp_path / "p2")
    assert filecmp.cmp(
        tmp_path / "p1" / "trials.csv", tmp_path / "p2" / "trials.csv", shallow=False
    )


def test_cli_simulate_and_phase_handoff(tmp_path, capsys):
    rc = cli.main(
        [
            "phase1",
            "--preset", "fast",
            "--targets", "2",
            "--seed", "1",
            "--out", str(tmp_path),
        ]
    )
    assert rc == 0
    assert (tmp_path / "ranges.json").exists()
    assert (tmp_path / "scene.json").exists()
    rc = cli.main(
        ["phase2", str(tmp_path / "ranges.json"), "--out", str(tmp_path / "res.json")]
    )
    assert rc == 0
    doc = json.loads((tmp_path / "res.json").read_text())
    assert "n_targets" in doc and "locations" in doc
    capsys.readouterr()


def test_cli_validate(tmp_path, capsys):
    rc = cli.main(["validate", "--scenes", "5", "--targets", "2", "--seed", "0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "5/5 scenes valid" in out
