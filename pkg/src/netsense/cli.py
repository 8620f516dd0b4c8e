"""Command-line front end for simulation, Phase I/II handoffs, and sweeps."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import association, harness, ranging, scenario
from .harness import ExperimentConfig, fast_config, load_config, full_config


def _base_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        preset = full_config if args.preset == "full" else fast_config
        cfg = preset(n_targets=args.targets)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.trials is not None:
        cfg.trials = args.trials
    if args.method is not None:
        cfg.method = {"bench1": "bench1", "bench2": "bench2"}.get(args.method, args.method)
    cfg.parallelism = _parallelism(args)
    return cfg


def _parallelism(args) -> int:
    env = os.environ.get("NETSENSE_PARALLELISM")
    if args.parallelism is not None:
        return args.parallelism
    if env:
        return int(env)
    return 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (JSON or TOML)")
    p.add_argument("--preset", choices=["fast", "full"], default="fast")
    p.add_argument("--targets", type=int, default=4, help="targets when no config given")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument(
        "--method", choices=["proposed", "bench1", "bench2", "all"], default=None
    )
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument(
        "--parallelism", type=int, default=None,
        help="worker processes (env NETSENSE_PARALLELISM)",
    )


def cmd_simulate(args) -> int:
    cfg = _base_config(args)
    report = harness.run_experiment(cfg, out_dir=args.out)
    for method in cfg.methods():
        print(
            f"{method}: P_MD={report.p_md[method]:.4f} P_FA={report.p_fa[method]:.4f} "
            f"mean_time={report.mean_runtime[method]:.4f}s"
        )
    print(f"phase1_error_rate={report.phase1_error_rate:.4f}")
    print(f"outputs written to {args.out}")
    return 0


def cmd_phase1(args) -> int:
    cfg = _base_config(args)
    scene, _, table, p1err = harness.run_phase1(cfg, args.trial)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handoff = out / "ranges.json"
    ranging.save_handoff(handoff, table, scene.bs_positions, cfg.grid)
    scene.to_json(out / "scene.json")
    print(f"phase1_error={p1err}")
    print(f"range sets written to {handoff}")
    return 0


def cmd_phase2(args) -> int:
    table, bs_positions, grid = ranging.load_handoff(args.ranges)
    from .geometry import half_quantum

    dd = half_quantum(grid)
    assoc = association.AssociationConfig(delta=3.0 * dd, beta=(2.0 * dd) ** 2)
    from .localizer import GnConfig

    result = association.solve_all(table, bs_positions, assoc, GnConfig())
    doc = result.to_dict()
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2)
        print(f"result written to {args.out}")
    else:
        json.dump(doc, sys.stdout, indent=2)
        print()
    return 0


def cmd_sweep(args) -> int:
    cfg = _base_config(args)
    cells = []
    for k in args.k:
        for pb in args.blockage:
            for pnl in args.nlos:
                cells.append((k, pb, pnl))
    out_root = Path(args.out)
    for k, pb, pnl in cells:
        cell = ExperimentConfig.from_dict(cfg.to_dict())
        sc = cell.scenario
        cell.scenario = scenario.ScenarioConfig(
            **{
                **sc.__dict__,
                "n_targets": k,
                "blockage_prob": pb,
                "nlos_prob": pnl,
            }
        )
        name = f"K{k}_Pb{pb}_Pnl{pnl}"
        report = harness.run_experiment(cell, out_dir=out_root / name)
        for method in cell.methods():
            print(
                f"{name} {method}: P_MD={report.p_md[method]:.4f} "
                f"P_FA={report.p_fa[method]:.4f}"
            )
    return 0


def cmd_validate(args) -> int:
    cfg = _base_config(args)
    grid = cfg.grid
    n_bad = 0
    for i in range(args.scenes):
        rng = np.random.default_rng([cfg.seed or 0, i])
        scene = scenario.generate(cfg.scenario, grid, rng=rng)
        errors = scenario.validate(scene, cfg.scenario, grid)
        if errors:
            n_bad += 1
            for e in errors:
                print(f"scene {i}: {e}")
    print(f"{args.scenes - n_bad}/{args.scenes} scenes valid")
    return 0 if n_bad == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="netsense",
        description="Networked device-free sensing simulation and estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the full pipeline Monte Carlo")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("phase1", help="run one trial's Phase I, emit range sets")
    _add_common(p)
    p.add_argument("--trial", type=int, default=0)
    p.set_defaults(func=cmd_phase1)

    p = sub.add_parser("phase2", help="run Phase II on a recorded range-set JSON")
    p.add_argument("ranges", help="handoff JSON from `phase1`")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_phase2)

    p = sub.add_parser("sweep", help="grid sweep over K / blockage / NLOS probability")
    _add_common(p)
    p.add_argument("--k", type=int, nargs="+", default=[4])
    p.add_argument("--blockage", type=float, nargs="+", default=[0.1])
    p.add_argument("--nlos", type=float, nargs="+", default=[0.5])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="generate scenes and check invariants")
    _add_common(p)
    p.add_argument("--scenes", type=int, default=20)
    p.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
