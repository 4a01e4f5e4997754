"""``softpg`` command line.

Exit codes: 0 success, 1 usage error, 2 divergence or failed property,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .. import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .presets import PRESETS, list_presets, load_preset
from .runner import HarnessIOError, run_experiment, verify_suite

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_IO = 0, 1, 2, 3


def _load(target: str) -> ExperimentConfig:
    if target in PRESETS:
        return load_preset(target)
    if Path(target).is_file():
        return load_config(target)
    raise ConfigError(f"{target!r} is neither a preset nor a config file (see `softpg list-presets`)")


def _out_dir(cfg: ExperimentConfig, flag: str | None) -> Path:
    root = flag or os.environ.get("SOFTPG_OUT") or cfg.out
    return Path(root) / cfg.name


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softpg", description="Softmax policy-gradient experiments and checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a preset or config file")
    p.add_argument("target", help="preset name or path to a config file")
    p.add_argument("--seed", type=int, default=None, help="base seed (default: from config)")
    p.add_argument("--iters", type=int, default=None, help="iterations per run T (default: from config)")
    p.add_argument("--instances", type=int, default=None, help="override the instance count")
    p.add_argument("--repeats", type=int, default=None, help="override repeats per instance")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default: 1)")
    p.add_argument("--out", default=None, help="output root (default: $SOFTPG_OUT or config 'out')")

    p = sub.add_parser("verify", help="run the property checkers")
    p.add_argument("--config", default=None, help="config file with a [verify] section (default: verify-all preset)")
    p.add_argument("--trials", type=int, default=None, help="override trials per property")
    p.add_argument("--out", default=None, help="output root (default: $SOFTPG_OUT or config 'out')")

    sub.add_parser("list-presets", help="print built-in preset names")
    return parser


def _cmd_run(args) -> int:
    cfg = _load(args.target)
    if cfg.mode == "verify":
        return _verify(cfg, args.out)
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.iters is not None:
        if args.iters < 1:
            raise ConfigError("--iters must be positive")
        overrides["T"] = args.iters
    if args.instances is not None:
        overrides["instances"] = args.instances
    if args.repeats is not None:
        overrides["repeats"] = args.repeats
    if args.workers < 1:
        raise ConfigError("--workers must be positive")
    cfg = cfg.with_(**overrides)
    out = _out_dir(cfg, args.out)
    res = run_experiment(cfg, out, workers=args.workers)
    print(f"{len(res.runs)} runs written to {out}")
    for label, _ in cfg.algorithms:
        finals = res.finals(label)
        if finals.size:
            print(f"  {label:<18} mean final suboptimality {finals.mean():.4e}  (n={finals.size})")
    if res.diverged:
        print(f"{len(res.diverged)} run(s) diverged: {', '.join(res.diverged)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _verify(cfg: ExperimentConfig, out_flag, trials=None) -> int:
    if trials is not None:
        from dataclasses import replace

        cfg = replace(cfg, verify=replace(cfg.verify, trials=trials))
    out = _out_dir(cfg, out_flag)
    reports = verify_suite(cfg, out)
    failed = [r for r in reports if not r.passed]
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<55} trials={r.trials:<6} max_violation={r.max_violation:.3e}")
    print(f"{len(reports) - len(failed)}/{len(reports)} properties passed; CSV in {out / 'properties.csv'}")
    return EXIT_FAIL if failed else EXIT_OK


def _cmd_verify(args) -> int:
    cfg = load_config(args.config) if args.config else load_preset("verify-all")
    return _verify(cfg, args.out, args.trials)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "list-presets":
            for name in list_presets():
                print(name)
            return EXIT_OK
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_verify(args)
    except (ConfigError, KeyError) as exc:
        print(f"softpg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HarnessIOError, OSError) as exc:
        print(f"softpg: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
