"""Command-line entry point ``electrodiff``.

Subcommands ``simulate``, ``limit``, ``compare``, ``sweep`` and ``mms`` all
take ``--config`` and ``--out``.  Exit status is 0 on success, 1 for I/O
errors, 2 when a solver fails and 3 for configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from electrodiff.errors import (
    ConfigError,
    InsufficientDataError,
    ModeOutOfBandError,
    NotConvergedError,
    SolverFailure,
)
from electrodiff.harness import experiments, io, mms
from electrodiff.harness.config import load_config

logger = logging.getLogger("electrodiff")

EXIT_OK = 0
EXIT_IO = 1
EXIT_SOLVER = 2
EXIT_CONFIG = 3


def _lam_tag(lam: float) -> str:
    return f"{lam:.6g}"


def _save_snapshots(out: Path, prefix: str, states):
    for j, state in enumerate(states):
        io.write_snapshot(out / f"{prefix}_{j:03d}.edsnap", io.state_arrays(state))


def _lambda(config, args):
    lam = args.lam if args.lam is not None else config.lambdas[0]
    if not lam > 0:
        raise ConfigError(f"--lambda must be positive, got {lam}")
    return lam


def cmd_simulate(config, args, out):
    lam = _lambda(config, args)
    traj = experiments.run_npns(config, lam)
    io.write_dict_csv(out / f"npns_lam{_lam_tag(lam)}_steps.csv", traj.diagnostics)
    if args.fields:
        _save_snapshots(out, f"npns_lam{_lam_tag(lam)}", traj.snapshots)
    logger.info("lam=%g: %d steps, dt=%.3g", lam, traj.steps, traj.dt)


def cmd_limit(config, args, out):
    traj = experiments.run_limit_reference(config)
    io.write_dict_csv(out / "limit_steps.csv", traj.diagnostics)
    if args.fields:
        _save_snapshots(out, "limit", [s.state for s in traj.snapshots])
    logger.info("limit: %d steps, dt=%.3g", traj.steps, traj.dt)


def cmd_compare(config, args, out):
    lam = _lambda(config, args)
    res = experiments.run_comparison(config, lam, keep_bundles=False, endpoints=not args.interior)
    io.write_rows_csv(out / f"compare_lam{_lam_tag(lam)}.csv", res.rows)
    if res.failed:
        raise SolverFailure(res.failed)


def cmd_sweep(config, args, out):
    if args.workers is not None:
        config = replace(config, workers=args.workers)
    res = experiments.run_sweep(config, keep_bundles=False)
    for c in res.comparisons:
        io.write_rows_csv(out / f"compare_lam{_lam_tag(c.lam)}.csv", c.rows)
    summary = experiments.sweep_summary(config, res)
    io.write_json(out / "summary.json", summary)
    for metric, fit in res.fits.items():
        logger.info("%s: slope %.3f (r^2 %.4f)", metric, fit.slope, fit.r_squared)
    if res.failed:
        raise SolverFailure(f"{len(res.failed)} lambda run(s) failed")


def cmd_mms(config, args, out):
    systems = ("npns", "limit") if args.system == "both" else (args.system,)
    studies = ("dt", "n") if args.study == "both" else (args.study,)
    report = {}
    for system in systems:
        for study in studies:
            rows = mms.run_mms_config(config, system, study)
            table = [asdict(r) for r in rows]
            io.write_dict_csv(out / f"mms_{system}_{study}.csv", table)
            report[f"{system}/{study}"] = table
            for r in rows:
                logger.info("mms %s %s=%g error=%.3e order=%s", system, study, r.value, r.error, r.order)
    io.write_json(out / "mms.json", report)


COMMANDS = {
    "simulate": cmd_simulate,
    "limit": cmd_limit,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "mms": cmd_mms,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="electrodiff", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path, help="experiment configuration (TOML)")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: from config)")
        return p

    p = add("simulate", "one Debye-length run from well-prepared data")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="default: first configured value")
    p.add_argument("--fields", action="store_true", help="write binary field snapshots")
    p = add("limit", "one quasineutral limit run")
    p.add_argument("--fields", action="store_true", help="write binary field snapshots")
    p = add("compare", "error functionals for one lambda")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--interior", action="store_true", help="omit rows at t=0 and t=T")
    p = add("sweep", "all configured lambdas with rate fits")
    p.add_argument("--workers", type=int, default=None)
    p = add("mms", "manufactured-solution convergence study")
    p.add_argument("--system", choices=("npns", "limit", "both"), default="both")
    p.add_argument("--study", choices=("dt", "n", "both"), default="both")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        out = args.out if args.out is not None else Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](config, args, out)
    except (ConfigError, ModeOutOfBandError) as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (SolverFailure, NotConvergedError, InsufficientDataError) as exc:
        logger.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except OSError as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
