"""Command-line entry point: ``cgsnn <subcommand> [flags]``.

Failures print one JSON object ``{"error": category, "message": ...}`` on
stderr and exit with a category-specific code.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import __version__, experiments, reproduce, taskgen
from .experiments import ConfigInvalid, IoError, RunConfig

EXIT_CODES = {"usage": 2, "config": 3, "io": 4, "diverged": 5}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would print free text and exit
        raise UsageError(message)


def _config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value file with a [run] section")
    group = parser.add_argument_group("run config overrides")
    for f in dataclasses.fields(RunConfig):
        flags = {"--" + f.name}
        flags.add("--" + f.name.lower().replace("_", "-"))
        kind = {"int": int, "float": float}.get(f.type, str)
        group.add_argument(*sorted(flags), dest=f.name, type=kind, default=argparse.SUPPRESS,
                           metavar=f.name.upper())


def _load_config(args) -> RunConfig:
    base = RunConfig.from_file(args.config) if args.config else RunConfig()
    names = {f.name for f in dataclasses.fields(RunConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names}
    cfg = dataclasses.replace(base, **overrides).normalized()
    if not experiments.writable(cfg.out):
        raise IoError(f"output directory {cfg.out} is not writable")
    return cfg


def _csv_list(text: str, kind=str) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    try:
        return [kind(t) for t in items]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _emit(obj) -> None:
    sys.stdout.write(experiments.dump_json(obj))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    grid = taskgen.make_grid(cfg.D, cfg.blur)
    cur = experiments.curriculum_for(cfg)
    experiments._write_bytes(out / "templates.csv", taskgen.trials_to_csv(grid).encode("utf-8"))
    experiments._write_bytes(out / "curriculum.csv", taskgen.trials_to_csv(cur.trials).encode("utf-8"))
    _emit({"templates": len(grid), "trials": len(cur.trials), "out": str(out)})
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    net, log = experiments.train(cfg)
    out = Path(cfg.out)
    experiments.save_checkpoint(out / "checkpoint.npz", cfg, net)
    experiments.save_trainlog(out / "trainlog.npz", log)
    _emit({"out": str(out), "final_accuracy": {str(t): log.final_accuracy(t) for t in (1, 2)}})
    return 0


def cmd_analyze(args) -> int:
    src = Path(args.source)
    t0 = time.perf_counter()
    cfg, net = experiments.load_checkpoint(src / "checkpoint.npz")
    log = experiments.load_trainlog(src / "trainlog.npz")
    out = Path(args.out) if args.out else src
    report = experiments.analyze(cfg, log)
    manifest = experiments.RunManifest(cfg.result_fields(), __version__, 0.0)
    manifest.files = experiments.write_outputs(report, net, out)
    manifest.duration_s = round(time.perf_counter() - t0, 3)
    experiments._write_bytes(out / "manifest.json", manifest.to_json().encode("utf-8"))
    _emit({"out": str(out), "manifest_hash": manifest.manifest_hash, "stats": report.stats})
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    manifest, report, _ = experiments.run(cfg)
    _emit({"out": cfg.out, "manifest_hash": manifest.manifest_hash, "duration_s": manifest.duration_s,
           "final_accuracy": report.stats["final_accuracy"]})
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    values = _csv_list(args.values)
    seeds = _csv_list(args.seeds, int)
    manifests, summary = experiments.sweep(cfg, args.axis, values, seeds)
    sys.stdout.write(summary)
    return 0


def cmd_reproduce(args) -> int:
    seeds = _csv_list(args.seeds, int) if args.seeds else reproduce.SEEDS
    try:
        rep = reproduce.reproduce(args.figure, seeds)
    except reproduce.UsageError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out) / args.figure
    rep.write(out)
    for check in rep.checks:
        print(f"{'PASS' if check.passed else 'FAIL'}  {check.name}: {check.detail}")
    print(f"report written to {out}")
    return 1 if (args.strict and not rep.passed) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cgsnn", description="Context-gated spiking networks on the two-context trees task.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write the template grid and a curriculum as CSV")
    _config_flags(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train and save checkpoint.npz and trainlog.npz")
    _config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="analyse a trained run directory")
    p.add_argument("source", help="directory holding checkpoint.npz and trainlog.npz")
    p.add_argument("--out", help="where to write results (defaults to SOURCE)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("run", help="train, analyse and write every output file")
    _config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one axis over a list of values and seeds")
    _config_flags(p)
    p.add_argument("--axis", required=True, choices=experiments.SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma list; schedule values look like 2x4")
    p.add_argument("--seeds", default="0", help="comma list of seeds (ignored for the seed axis)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="run a canned multi-seed experiment and check it")
    p.add_argument("figure", help=", ".join(reproduce.FIGURES))
    p.add_argument("--seeds", help="comma list (default 0..9)")
    p.add_argument("--out", default="reports")
    p.add_argument("--strict", action="store_true", help="exit 1 when any check fails")
    p.set_defaults(func=cmd_reproduce)
    return parser


def _fail(category: str, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": category, "message": str(exc)}) + "\n")
    return EXIT_CODES[category]


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", exc)
    except ConfigInvalid as exc:
        return _fail("config", exc)
    except IoError as exc:
        return _fail("io", exc)
    except FloatingPointError as exc:
        return _fail("diverged", exc)


if __name__ == "__main__":
    sys.exit(main())
