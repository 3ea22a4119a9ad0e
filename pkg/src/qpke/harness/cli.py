"""Command line entry point: ``qpke run|sweep|attack|constellation|acceptance``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from ..config import ATTACKS, ConfigError, dumps, load, with_override
from ..detection import constellation_dump
from ..protocol import run_session
from . import presets
from .report import attack_table, constellation_table, summary_text, write_constellation, write_session_outputs
from .sweep import load_sweep, run_sweep, write_sweep_csv

OUTPUT_ENV = "QPKE_OUTPUT_DIR"

log = logging.getLogger("qpke")


def _config(args):
    if args.preset:
        try:
            return presets.get(args.preset)
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from None
    if not args.config:
        raise ConfigError("a config file or --preset is required")
    return load(args.config)


def _outdir(args, cfg) -> Path:
    if getattr(args, "output_dir", None):
        return Path(args.output_dir)
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output.directory)


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.seed is not None:
        cfg = with_override(cfg, "master_seed", args.seed)
    res = run_session(cfg, collect_ledger=cfg.output.ledger or cfg.output.constellation)
    out = _outdir(args, cfg)
    files = write_session_outputs(out, res)
    (out / "config.yaml").write_text(dumps(cfg))
    sys.stdout.write(summary_text(res))
    for kind, path in files.items():
        log.info("wrote %s: %s", kind, path)
    return 0


def cmd_attack(args) -> int:
    cfg = _config(args)
    if args.attack is not None:
        if args.attack not in ATTACKS:
            raise ConfigError(f"unknown attack {args.attack!r}; supported: {', '.join(ATTACKS)}", "attack.kind")
        cfg = with_override(cfg, "attack.kind", args.attack)
    baseline = run_session(with_override(cfg, "attack.kind", "none"))
    attacked = run_session(cfg) if cfg.attack.kind != "none" else baseline
    table = attack_table(baseline, attacked)
    out = _outdir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "attack_report.txt").write_text(table)
    sys.stdout.write(table)
    return 0


def cmd_constellation(args) -> int:
    cfg = _config(args)
    res = run_session(cfg, collect_ledger=True)
    out = _outdir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_constellation(out / "constellation.csv", res)
    c = res.constellation
    sys.stdout.write(constellation_table(constellation_dump(c["symbol"], c["phase"], c["ring"])))
    return 0


def cmd_sweep(args) -> int:
    if args.preset:
        if args.preset not in presets.SWEEP_PRESETS:
            raise ConfigError(f"unknown sweep preset {args.preset!r}; available: "
                              f"{', '.join(sorted(presets.SWEEP_PRESETS))}")
        base, spec = presets.SWEEP_PRESETS[args.preset]()
        target = None
    elif args.spec:
        spec, base, target = load_sweep(args.spec)
    else:
        raise ConfigError("a sweep spec file or --preset is required")
    rows = run_sweep(spec, base, parallel=args.parallel, workers=args.workers)
    if args.output:
        path = Path(args.output)
    else:
        path = _outdir(args, base) / (target or "sweep.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(path, rows)
    print(f"{len(rows)} rows -> {path}")
    return 0


def cmd_acceptance(args) -> int:
    from .acceptance import CHECKS, run

    numbers = args.only or sorted(CHECKS)
    failed = 0
    for n in numbers:
        res = run(n)
        print(res.headline())
        for line in res.lines:
            print("    " + line)
        failed += not res.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qpke", description="Phase-randomised Glauber-state key exchange simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def session_args(sp):
        sp.add_argument("config", nargs="?", help="YAML experiment config")
        sp.add_argument("--preset", help=f"named preset: {', '.join(sorted(presets.PRESETS))}")
        sp.add_argument("--output-dir", help=f"output directory (also {OUTPUT_ENV})")

    sp = sub.add_parser("run", help="run one session and write summary, ledger and constellation")
    session_args(sp)
    sp.add_argument("--seed", type=int, help="override master_seed")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("attack", help="compare a session with and without an attack")
    session_args(sp)
    sp.add_argument("--attack", help=f"one of: {', '.join(ATTACKS)}")
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("constellation", help="write the constellation CSV and print cluster stats")
    session_args(sp)
    sp.set_defaults(func=cmd_constellation)

    sp = sub.add_parser("sweep", help="parameter sweep with replications -> CSV")
    sp.add_argument("spec", nargs="?", help="YAML sweep spec")
    sp.add_argument("--preset", help=f"named sweep: {', '.join(sorted(presets.SWEEP_PRESETS))}")
    sp.add_argument("--output", help="CSV path")
    sp.add_argument("--output-dir", help=f"output directory (also {OUTPUT_ENV})")
    sp.add_argument("--parallel", action="store_true", help="run replications in worker processes")
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("acceptance", help="run the acceptance checks")
    sp.add_argument("--only", type=int, nargs="+", metavar="N")
    sp.set_defaults(func=cmd_acceptance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
