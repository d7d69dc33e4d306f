"""Command-line pipeline: design -> train -> calibrate -> run -> report, plus sweep.

All artifacts are read from and written to the ``--out`` directory. Exit code
0 means success, 1 a failed step (with a one-line diagnostic on stderr) and 2
a usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline
from .config import ConfigError, load_config, serialize_config
from .evo import SweepReport, sweep_table1, training_csv
from .harness import (
    CONTROLLERS,
    SCENARIO_ORDER,
    CellSummary,
    MetricError,
    ReportError,
    read_trajectory_csv,
    report_table2,
    run_repeats,
    write_trajectory_csv,
)
from .lqg import ControllerFault, SynthesisError, format_design
from .neural import GenomeError, load_genome, save_genome
from .plant import InvalidParameter, NumericBlowup
from .switching import RegionError, load_region, save_region

GENOME_FILE = "genome.txt"
RUNS_DIR = "runs"
TABLE1_PAIRS_CM = ((0.5, 2.0), (0.5, 1.0), (0.5, 0.5), (1.0, 0.5), (2.0, 0.5))


class StepError(RuntimeError):
    """A pipeline step cannot proceed; the message is the user-facing diagnostic."""


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # registered on the main parser and on every subcommand so the flags may go on either side
    p = argparse.ArgumentParser(add_help=False)
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=default(None), help="master seed (overrides the config)")
    p.add_argument("--config", default=default("default"), help="config file, or 'default'")
    p.add_argument("--out", default=default("out"), help="artifact directory (default: out)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridpend", description=__doc__.splitlines()[0],
                                     parents=[_global_flags(False)])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = [_global_flags(True)]

    sub.add_parser("design", parents=common, help="synthesize the LQG controller and print it")
    sub.add_parser("config", parents=common, help="print the reference configuration")

    p = sub.add_parser("train", parents=common, help="evolve the neural controller")
    p.add_argument("--generations", type=int, help="override ga.generations")
    p.add_argument("--population", type=int, help="override ga.population")
    p.add_argument("--quiet", action="store_true", help="no per-generation progress lines")

    p = sub.add_parser("calibrate", parents=common, help="derive a switching region from a trajectory")
    p.add_argument("trajectory", help="trajectory CSV (relative paths resolve inside --out)")
    p.add_argument("--kind", choices=("nhc", "lhc"), required=True,
                   help="nhc: entry box from an LQG run; lhc: exit box from a neural run")

    p = sub.add_parser("run", parents=common, help="run one scenario with one controller")
    p.add_argument("scenario", choices=[k.value for k in SCENARIO_ORDER])
    p.add_argument("controller", choices=("lqg", "neural", "hybrid"))
    p.add_argument("--duration", type=float, help="seconds (default: scenario.duration)")
    p.add_argument("--repeats", type=int, help="seeded repeats (default: scenario.repeats)")
    p.add_argument("--scenario-seed", type=int, default=0, help="scenario seed; calibration runs use 1")
    p.add_argument("--tag", help="output file stem (default: SCENARIO_CONTROLLER)")

    sub.add_parser("report", parents=common, help="controller x scenario grid from the run summaries")

    p = sub.add_parser("sweep", parents=common, help="weight sweep: one trained network per (P_w, A_w) pair")
    p.add_argument("--pairs", help="comma separated P_w:A_w pairs, P_w in cm and A_w in degrees "
                   "(default: 0.5:2,0.5:1,0.5:0.5,1:0.5,2:0.5)")
    p.add_argument("--generations", type=int, help="override ga.generations")
    p.add_argument("--population", type=int, help="override ga.population")
    p.add_argument("--duration", type=float, default=100.0, help="balancing run length, s")
    p.add_argument("--repeats", type=int, default=1, help="balancing runs per controller")
    return parser


def _parse_pairs(text: str | None) -> list[tuple[float, float]]:
    """``P_w:A_w`` pairs in (cm, deg) -> (m, deg)."""
    if text is None:
        pairs = TABLE1_PAIRS_CM
    else:
        try:
            pairs = [tuple(float(v) for v in item.split(":")) for item in text.split(",") if item.strip()]
        except ValueError:
            raise StepError(f"--pairs: cannot parse {text!r}") from None
        if not pairs or any(len(p) != 2 for p in pairs):
            raise StepError(f"--pairs: expected P_w:A_w items, got {text!r}")
    return [(pw / 100.0, aw) for pw, aw in pairs]


def _ga_overrides(cfg, args):
    changes = {k: getattr(args, k) for k in ("generations", "population") if getattr(args, k) is not None}
    if not changes:
        return cfg
    try:
        return replace(cfg, ga=replace(cfg.ga, **changes))
    except InvalidParameter as exc:
        raise StepError(f"ga.{exc}") from None


def _require(path: Path, hint: str) -> Path:
    if not path.is_file():
        raise StepError(f"missing artifact {path} ({hint})")
    return path


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_design(cfg, out: Path, args) -> None:
    setup = pipeline.build_setup(cfg)
    text = format_design(setup.design)
    _write(out / "design.txt", text)
    print(text, end="")


def cmd_config(cfg, out: Path, args) -> None:
    print(serialize_config(cfg), end="")


def cmd_train(cfg, out: Path, args) -> None:
    cfg = _ga_overrides(cfg, args)
    setup = pipeline.build_setup(cfg)

    def progress(s):
        if not args.quiet:
            print(f"generation {s.generation:3d}  best F {s.best_F:.6g}  mean F {s.mean_F:.6g}  "
                  f"survival {s.survival_rate:.2f}", flush=True)

    result = pipeline.train(cfg, setup, progress)
    check = pipeline.balance_check(cfg, setup, result.best_genome)
    save_genome(out / GENOME_FILE, result.best_genome)
    _write(out / "training.csv", training_csv(result))
    report = pipeline.training_report(cfg, result, check)
    _write(out / "training_report.txt", report)
    print(report, end="")


def cmd_calibrate(cfg, out: Path, args) -> None:
    path = Path(args.trajectory)
    if not path.is_absolute():
        path = out / path
    _require(path, "produce it with `run`")
    log = read_trajectory_csv(path)
    if args.kind == "nhc":
        box, target = pipeline.nhc_region(cfg, log), cfg.switch.nhc_file
        meta = {}
    else:
        box, target = pipeline.lhc_region(cfg, log), cfg.switch.lhc_file
        meta = {"margin": repr(cfg.switch.lhc_margin)}
    save_region(out / target, box, cfg.switch.coverage, path.name, samples=str(len(log)), **meta)
    print(f"{args.kind} -> {out / target}")
    for name, lo, hi in zip(("p", "p_dot", "theta", "theta_dot"), box.lo, box.hi):
        print(f"  {name:9s} [{lo:+.6g}, {hi:+.6g}]")


def cmd_run(cfg, out: Path, args) -> None:
    setup = pipeline.build_setup(cfg)
    genome = switch = None
    if args.controller in ("neural", "hybrid"):
        genome = load_genome(_require(out / GENOME_FILE, "run `train` first"))
    if args.controller == "hybrid":
        nhc, _ = load_region(_require(out / cfg.switch.nhc_file, "run `calibrate --kind nhc` first"))
        lhc, _ = load_region(_require(out / cfg.switch.lhc_file, "run `calibrate --kind lhc` first"))
        switch = pipeline.switch_config(cfg, nhc, lhc)
    sc = pipeline.scenario(cfg, args.scenario, args.duration, args.scenario_seed)
    repeats = cfg.scenario.repeats if args.repeats is None else args.repeats
    if repeats < 1:
        raise StepError("--repeats must be >= 1")
    results = run_repeats(sc, args.controller, setup, pipeline.root_stream(cfg), repeats, genome, switch)

    stem = args.tag or f"{args.scenario}_{args.controller}"
    runs = out / RUNS_DIR
    runs.mkdir(parents=True, exist_ok=True)
    per_run = []
    for i, r in enumerate(results):
        write_trajectory_csv(runs / f"{stem}_r{i}.csv", r.trace)
        per_run.append({
            "repeat": i, "pos_rms": r.pos_rms, "angle_rms": r.angle_rms, "status": r.status,
            "failure_time": r.failure_time, "switch_events": len(r.switch_events),
            "neural_fraction": r.neural_fraction,
        })
    summary = {
        "scenario": sc.kind.value, "controller": args.controller, "seed": cfg.seed,
        "scenario_seed": sc.seed, "duration": sc.duration, "repeats": repeats,
        "pos_rms": float(np.mean([r.pos_rms for r in results])),
        "angle_rms": float(np.mean([r.angle_rms for r in results])),
        "switch_events": float(np.mean([len(r.switch_events) for r in results])),
        "failures": sum(r.failed for r in results),
        "runs": per_run,
    }
    _write(runs / f"{stem}.json", json.dumps(summary, indent=2) + "\n")
    print(f"{sc.kind.value} {args.controller}: pos RMS {summary['pos_rms']:.6g} m, "
          f"angle RMS {summary['angle_rms']:.6g} deg, switch events {summary['switch_events']:g}, "
          f"failures {summary['failures']}/{repeats}")


def cmd_report(cfg, out: Path, args) -> None:
    cells = {}
    for c in CONTROLLERS:
        for kind in SCENARIO_ORDER:
            path = out / RUNS_DIR / f"{kind.value}_{c}.json"
            if not path.is_file():
                raise ReportError(f"missing run: controller={c} scenario={kind.value} ({path})")
            s = json.loads(path.read_text())
            cells[c, kind.value] = CellSummary(s["pos_rms"], s["angle_rms"], int(round(s["switch_events"])),
                                               s["failures"])
    text, table = report_table2(cells)
    _write(out / "table2.txt", text)
    _write(out / "table2.csv", table)
    print(text, end="")


def cmd_sweep(cfg, out: Path, args) -> None:
    cfg = _ga_overrides(cfg, args)
    pairs = _parse_pairs(args.pairs)
    if args.repeats < 1 or not args.duration > 0:
        raise StepError("--repeats must be >= 1 and --duration > 0")
    setup = pipeline.build_setup(cfg)
    report: SweepReport = sweep_table1(pairs, cfg.ga, cfg.fitness, cfg.safe, setup,
                                       pipeline.root_stream(cfg).child("table1"), args.duration, args.repeats,
                                       progress=lambda msg: print(msg, flush=True))
    _write(out / "table1.txt", report.text())
    _write(out / "table1.csv", report.csv())
    print(report.text(), end="")


COMMANDS = {
    "design": cmd_design, "config": cmd_config, "train": cmd_train, "calibrate": cmd_calibrate,
    "run": cmd_run, "report": cmd_report, "sweep": cmd_sweep,
}

FAILURES = (StepError, ConfigError, GenomeError, RegionError, ReportError, MetricError, InvalidParameter,
            SynthesisError, ControllerFault, NumericBlowup, OSError, ValueError)


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, args)
    except FAILURES as exc:
        print(f"hybridpend {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
