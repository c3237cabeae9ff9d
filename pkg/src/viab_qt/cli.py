"""Command line interface.

Subcommands mirror the experiment kinds (tangency, nagumo, approx,
viability, galerkin, linear-equiv) plus replay. Exit codes: 0 verdict
pass, 1 verdict fail, 2 configuration error, 3 numerical failure,
4 replay mismatch.
"""

import argparse
import os
import sys

from .config import EXPERIMENT_KINDS, load_config
from .errors import ConfigError, NumericalError
from .experiments import (EXIT_CONFIG, EXIT_NUMERICAL, replay,
                          run_experiment)


def _apply_threads(threads):
    env = os.environ.get("VIABQT_THREADS")
    if threads is None and env:
        try:
            threads = int(env)
        except ValueError:
            threads = None
    if threads is None:
        return
    # Thread count touches only kernel compilation workers; all reductions
    # are laid out deterministically, so results cannot depend on it.
    try:
        import numba

        numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))
    except Exception:
        pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viab-qt",
        description="Monte Carlo verification of stochastic viability via "
                    "one-step tangency residuals")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run a '{kind}' experiment")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="kernel thread count (never affects results)")
    rp = sub.add_parser("replay", help="re-run stored artifacts and compare")
    rp.add_argument("artifact_dir", help="directory with run artifacts")
    rp.add_argument("--threads", type=int, default=None,
                    help="kernel thread count (never affects results)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads(getattr(args, "threads", None))
    if args.command == "replay":
        code, message = replay(args.artifact_dir)
        print(message)
        return code
    try:
        cfg = load_config(args.config)
        if cfg.kind != args.command:
            raise ConfigError(
                f"config declares kind '{cfg.kind}' but subcommand is "
                f"'{args.command}'")
        if args.seed is not None:
            cfg.experiment["seed"] = int(args.seed)
        out_dir = args.out or cfg.output.get("directory", "out")
        code, summary = run_experiment(cfg, out_dir)
        verdict = summary.get("verdict")
        if verdict is None:
            verdict = summary.get("passed", summary.get("built"))
        print(f"{cfg.kind} seed={cfg.seed}: "
              f"{'pass' if code == 0 else 'fail'} (verdict={verdict})")
        return code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
