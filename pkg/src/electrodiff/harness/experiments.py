"""Comparison runs between the two systems and lambda sweeps with rate fits."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from electrodiff import npns, quasineutral
from electrodiff.diagnostics import (
    FunctionalRow,
    functional_row,
    make_error_bundle,
    stencil_for,
)
from electrodiff.errors import InsufficientDataError, SolverFailure
from electrodiff.fields import LimitState, Params, build_profile, build_velocity, well_prepared_initial
from electrodiff.harness.config import ExperimentConfig, parse_modes
from electrodiff.spectral import Grid
from electrodiff.timestepping import StepControl

logger = logging.getLogger(__name__)

FIT_METRICS = ("theorem_sum", "gamma")


@dataclass
class Setup:
    grid: Grid
    D: object
    limit0: LimitState
    ctl: StepControl


@dataclass
class ComparisonResult:
    lam: float
    rows: list
    bundles: list = field(default_factory=list, repr=False)
    npns: object = field(default=None, repr=False)
    failed: str | None = None

    def sup(self, metric: str) -> float:
        if not self.rows:
            return float("nan")
        return max(getattr(r, metric) for r in self.rows)


@dataclass
class RateFit:
    """Least-squares line through ``(log lam, log value)``."""

    slope: float
    intercept: float
    r_squared: float
    lambdas: tuple
    values: tuple


@dataclass
class SweepResult:
    comparisons: list
    fits: dict
    limit: object = field(default=None, repr=False)

    @property
    def failed(self):
        return [c for c in self.comparisons if c.failed]


def make_setup(config: ExperimentConfig) -> Setup:
    grid = Grid(config.dim, config.n)
    D = build_profile(grid, parse_modes(config.doping_modes, config.dim), config.doping_offset)
    Z0 = build_profile(grid, parse_modes(config.Z0_modes, config.dim), config.Z0_offset)
    v0 = build_velocity(grid, [parse_modes(m, config.dim) for m in config.v0_modes])
    ctl = StepControl(
        dt=config.dt,
        cfl_advect=config.cfl_advect,
        cfl_relax=config.cfl_relax,
        fixed=config.dt_policy == "fixed",
    )
    return Setup(grid, D, LimitState(0.0, Z0, v0), ctl)


def params_for(config: ExperimentConfig, lam: float) -> Params:
    return Params(lam=lam, mu=config.mu, dim=config.dim, kappa0=config.kappa0)


def run_limit_reference(config: ExperimentConfig, setup: Setup | None = None):
    """Limit trajectory on the configured snapshot times."""
    setup = setup or make_setup(config)
    return quasineutral.run_limit(setup.limit0, setup.D, params_for(config, 0.0), config.T,
                                  config.snapshot_times, setup.ctl)


def run_npns(config: ExperimentConfig, lam: float, setup: Setup | None = None):
    """Debye-length trajectory from well-prepared data."""
    setup = setup or make_setup(config)
    params = params_for(config, lam)
    init = well_prepared_initial(setup.limit0, setup.D, params)
    return npns.run(init, setup.D, params, config.T, config.snapshot_times, setup.ctl)


def run_comparison(config: ExperimentConfig, lam: float, limit_traj=None, setup: Setup | None = None,
                   keep_bundles: bool = True, endpoints: bool = True) -> ComparisonResult:
    """Rows of the error functionals at the snapshot times for one ``lam``.

    Rows at ``t = 0`` and ``t = T`` use a one-sided stencil for the limit
    field derivative; ``endpoints=False`` keeps the interior rows only.
    A solver failure in the Debye-length run is recorded in ``failed`` and
    the rows cover the snapshots reached before it.
    """
    setup = setup or make_setup(config)
    if limit_traj is None:
        limit_traj = run_limit_reference(config, setup)
    params = params_for(config, lam)
    failed = None
    try:
        traj = run_npns(config, lam, setup)
    except SolverFailure as exc:
        logger.warning("lam=%g: %s", lam, exc)
        traj, failed = exc.trajectory, str(exc)

    limit_snaps = limit_traj.snapshots
    count = len(limit_snaps)
    rows, bundles = [], []
    for i, state in enumerate(traj.snapshots if traj is not None else []):
        if not endpoints and i in (0, count - 1):
            continue
        a, b = stencil_for(i, count)
        bundle = make_error_bundle(state, limit_snaps[i], (limit_snaps[a], limit_snaps[b]), setup.D, params)
        rows.append(functional_row(bundle))
        if keep_bundles:
            bundles.append(bundle)
    return ComparisonResult(lam, rows, bundles, traj, failed)


def fit_rate(lambdas, values) -> RateFit:
    """Fit ``log(value) = slope * log(lam) + intercept``.

    Raises
    ------
    InsufficientDataError
        With fewer than three finite positive values.
    """
    lam = np.asarray(lambdas, dtype=float)
    val = np.asarray(values, dtype=float)
    ok = np.isfinite(val) & (val > 0) & (lam > 0)
    if ok.sum() < 3:
        raise InsufficientDataError(f"need >= 3 positive values, got {int(ok.sum())}")
    x, y = np.log(lam[ok]), np.log(val[ok])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), tuple(lam), tuple(val))


def _comparison_job(args):
    config, lam, limit_traj, keep = args
    return run_comparison(config, lam, limit_traj, keep_bundles=keep)


def run_sweep(config: ExperimentConfig, keep_bundles: bool = True) -> SweepResult:
    """One comparison per configured lambda, then rate fits of the sup-in-time metrics."""
    if len(config.lambdas) < 3:
        raise InsufficientDataError("a sweep needs at least three lambda values")
    setup = make_setup(config)
    limit_traj = run_limit_reference(config, setup)
    jobs = [(config, lam, limit_traj, keep_bundles) for lam in config.lambdas]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            comparisons = list(pool.map(_comparison_job, jobs))
    else:
        comparisons = [run_comparison(config, lam, limit_traj, setup, keep_bundles) for lam in config.lambdas]
    fits = {}
    for metric in FIT_METRICS:
        sups = [c.sup(metric) for c in comparisons]
        fits[metric] = fit_rate(config.lambdas, sups)
    return SweepResult(comparisons, fits, limit_traj)


def sweep_summary(config: ExperimentConfig, result: SweepResult) -> dict:
    """JSON-ready summary: per-lambda sup metrics and the fitted slopes."""
    from electrodiff.diagnostics import METRICS

    return {
        "lambda": list(config.lambdas),
        "sup": {m: [c.sup(m) for c in result.comparisons] for m in METRICS},
        "fits": {
            m: {"slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared}
            for m, f in result.fits.items()
        },
        "failed": {str(c.lam): c.failed for c in result.comparisons if c.failed},
    }


__all__ = [
    "ComparisonResult",
    "FunctionalRow",
    "RateFit",
    "SweepResult",
    "fit_rate",
    "make_setup",
    "run_comparison",
    "run_limit_reference",
    "run_npns",
    "run_sweep",
    "sweep_summary",
]
