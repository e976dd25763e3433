"""Quasineutral (zero Debye length) limit system in the ``Z = n + p`` form.

    Z_t = div(grad Z + D E - Z v)
    0   = div(grad D + Z E - D v)          (determines E = -grad(phi))
    v_t + v.grad v + grad(pi) - mu Lap v = -D E,   div v = 0

``n = (Z + D)/2`` and ``p = (Z - D)/2`` are recovered at output times, so
``n - p - D = 0`` holds by construction.  The variable-coefficient
constraint is solved for ``phi`` by conjugate gradients preconditioned with
the constant-coefficient inverse Laplacian.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from electrodiff.errors import BlowUpError, NonPositiveZError, NotConvergedError, SolverFailure
from electrodiff.fields import LimitState, Params, recover_np
from electrodiff.spectral import ScalarField, VectorField
from electrodiff.timestepping import (
    DT_FLOOR,
    StepControl,
    Trajectory,
    blown_up,
    imex_euler,
    plan_steps,
    sbdf2,
)

logger = logging.getLogger(__name__)

ELLIPTIC_TOL = 1e-10
ELLIPTIC_MAXITER = 500


@dataclass(frozen=True)
class EllipticSolveReport:
    iterations: int
    residual: float
    converged: bool
    tol: float = ELLIPTIC_TOL


@dataclass(frozen=True)
class LimitPotential:
    phi: ScalarField
    field: VectorField
    report: EllipticSolveReport


@dataclass(frozen=True)
class LimitTendency:
    dZ_dt: ScalarField
    dv_dt: VectorField
    potential: LimitPotential


@dataclass(frozen=True)
class LimitSnapshot:
    """Limit state at an output time with its derived fields."""

    state: LimitState
    potential: LimitPotential
    n: ScalarField
    p: ScalarField

    @property
    def t(self):
        return self.state.t

    @property
    def field(self) -> VectorField:
        return self.potential.field


def _check_floor(Z_phys, kappa0):
    zmin = float(Z_phys.min())
    if not zmin >= 0.5 * kappa0:
        raise NonPositiveZError(f"min Z = {zmin:.4g} below kappa0/2 = {0.5 * kappa0:.4g}")


def _pcg(grid, Z_phys, rhs_h, guess_h=None, tol=ELLIPTIC_TOL, maxiter=ELLIPTIC_MAXITER):
    """Solve ``div(Z grad phi) = rhs`` for mean-zero ``phi`` in coefficient space.

    Both the operator and the preconditioner are negative definite on the
    mean-free, Nyquist-free subspace, so plain CG applies unchanged.
    """
    zbar = float(Z_phys.mean())

    def apply(x_h):
        flux = Z_phys * grid.to_physical(grid.grad(x_h))
        return grid.div(grid.to_spectral(flux))

    def precond(r_h):
        return grid.inv_lap(r_h) / zbar

    def dot(a, b):
        return float(np.real(np.vdot(a, b)))

    # the operator's range excludes the mean, the zeroed Nyquist modes and
    # any non-Hermitian round-off (it only sees real fields)
    rhs_h = grid.to_spectral(grid.to_physical(grid.lap(grid.inv_lap(rhs_h))))
    b_norm = np.sqrt(grid.norm_sq(rhs_h))
    if b_norm == 0.0:
        return np.zeros_like(rhs_h), EllipticSolveReport(0, 0.0, True, tol)

    x = np.zeros_like(rhs_h) if guess_h is None else grid.inv_lap(grid.lap(guess_h))
    r = rhs_h - apply(x) if guess_h is not None else rhs_h.copy()
    res = np.sqrt(grid.norm_sq(r)) / b_norm
    it = 0
    if res > tol:
        z = precond(r)
        d = z.copy()
        rz = dot(r, z)
        while it < maxiter:
            Ad = apply(d)
            dAd = dot(d, Ad)
            if dAd == 0.0:
                break
            alpha = rz / dAd
            x = x + alpha * d
            r = r - alpha * Ad
            it += 1
            res = np.sqrt(grid.norm_sq(r)) / b_norm
            if res <= tol:
                break
            z = precond(r)
            rz_new = dot(r, z)
            d = z + (rz_new / rz) * d
            rz = rz_new
        res = np.sqrt(grid.norm_sq(rhs_h - apply(x))) / b_norm
    return x, EllipticSolveReport(it, float(res), bool(res <= tol), tol)


def _limit_rhs_hat(grid, D_h, v_h, dealias=True, source_h=None):
    """Coefficients of ``Lap(D) - div(D v)`` (plus an optional manufactured source)."""
    rhs = grid.lap(D_h) - grid.div(grid.product(D_h, v_h, dealias))
    if source_h is not None:
        rhs = rhs + source_h
    return rhs


def solve_limit_potential(Z: ScalarField, D: ScalarField, v: VectorField, *, kappa0: float = 0.5,
                          tol: float = ELLIPTIC_TOL, maxiter: int = ELLIPTIC_MAXITER, guess=None,
                          source=None) -> LimitPotential:
    """Potential ``phi`` and field ``E = -grad(phi)`` with ``div(grad D + Z E - D v) = 0``.

    Equivalently ``div(Z grad phi) = Lap(D) - div(D v)``, solved for
    mean-zero ``phi``.  ``source`` (a ScalarField) is added to the
    right-hand side; it exists for manufactured-solution tests.

    Raises
    ------
    NonPositiveZError
        If ``min Z < kappa0 / 2``.
    NotConvergedError
        If the relative residual is still above ``tol`` after ``maxiter``
        iterations; the report is attached.
    """
    grid = Z.grid
    _check_floor(Z.values, kappa0)
    rhs = _limit_rhs_hat(grid, D.coeffs, v.coeffs, True, None if source is None else source.coeffs)
    phi_h, report = _pcg(grid, Z.values, rhs, None if guess is None else guess.coeffs, tol, maxiter)
    if not report.converged:
        raise NotConvergedError(f"elliptic solve stalled at residual {report.residual:.3e}", report)
    return LimitPotential(ScalarField(grid, coeffs=phi_h), VectorField(grid, coeffs=-grid.grad(phi_h)), report)


def relation_residual(Z: ScalarField, D: ScalarField, v: VectorField, field: VectorField) -> float:
    """Relative residual of ``div(grad D + Z E - D v) = 0``."""
    grid = Z.grid
    ZE = grid.to_spectral(Z.values * field.values)
    rhs = _limit_rhs_hat(grid, D.coeffs, v.coeffs)
    res = grid.lap(D.coeffs) + grid.div(ZE) - grid.div(grid.product(D.coeffs, v.coeffs))
    denom = np.sqrt(grid.norm_sq(rhs))
    return float(np.sqrt(grid.norm_sq(res)) / denom) if denom > 0 else float(np.sqrt(grid.norm_sq(res)))


class _LimitOperator:
    """Explicit and implicit parts on the stacked coefficients ``(Z, v...)``."""

    def __init__(self, grid, D: ScalarField, params: Params, dealias=True, elliptic_source=None):
        self.grid = grid
        self.D = D
        self.D_h = D.coeffs
        self.D_phys = grid.physical_dealiased(D.coeffs) if dealias else D.values
        self.kappa0 = params.kappa0
        self.dealias = dealias
        self.source = elliptic_source
        self.lin = np.empty((1 + grid.dim,) + grid.shape)
        self.lin[0] = -grid.k2
        self.lin[1:] = -params.mu * grid.k2
        self.phi_guess = None

    def pack(self, state: LimitState):
        return np.concatenate([state.Z.coeffs[None], state.v.coeffs])

    def unpack(self, U, t):
        g = self.grid
        return LimitState(t, ScalarField(g, coeffs=U[0]), VectorField(g, coeffs=U[1:]))

    def _phys(self, h):
        g = self.grid
        return g.physical_dealiased(h) if self.dealias else g.to_physical(h)

    def _fwd(self, a):
        g = self.grid
        return g.dealias(g.to_spectral(a)) if self.dealias else g.to_spectral(a)

    def potential(self, U, t):
        g = self.grid
        Z_phys = g.to_physical(U[0])
        _check_floor(Z_phys, self.kappa0)
        src = self.source(t) if self.source is not None else None
        rhs = _limit_rhs_hat(g, self.D_h, U[1:], self.dealias, src)
        phi_h, report = _pcg(g, Z_phys, rhs, self.phi_guess)
        if not report.converged:
            raise NotConvergedError(f"elliptic solve stalled at residual {report.residual:.3e}", report)
        self.phi_guess = phi_h
        return phi_h, report, Z_phys

    def explicit(self, U, t):
        g = self.grid
        phi_h, report, Z_full = self.potential(U, t)
        E_h = -g.grad(phi_h)
        Z, v, E = self._phys(U[0]), self._phys(U[1:]), self._phys(E_h)
        jac = self._phys(g.grad(U[1:]))
        out = np.empty_like(U)
        out[0] = g.div(self._fwd(self.D_phys * E - Z * v))
        advect = np.einsum("j...,ij...->i...", v, jac)
        out[1:] = g.leray(self._fwd(-advect - self.D_phys * E))
        return out, {"phi_h": phi_h, "report": report, "Z_min": float(Z_full.min())}


def _potential_from(grid, phi_h, report):
    return LimitPotential(ScalarField(grid, coeffs=phi_h), VectorField(grid, coeffs=-grid.grad(phi_h)), report)


def limit_rhs(state: LimitState, D: ScalarField, params: Params, dealias=True, elliptic_source=None) -> LimitTendency:
    """Semi-discrete tendencies ``(dZ/dt, dv/dt)`` of the limit system."""
    op = _LimitOperator(state.grid, D, params, dealias, elliptic_source)
    U = op.pack(state)
    N, aux = op.explicit(U, state.t)
    T = N + op.lin * U
    T[1:] = state.grid.leray(T[1:])
    g = state.grid
    return LimitTendency(ScalarField(g, coeffs=T[0]), VectorField(g, coeffs=T[1:]),
                         _potential_from(g, aux["phi_h"], aux["report"]))


def limit_stable_dt(state: LimitState, D: ScalarField, params: Params, ctl: StepControl = StepControl()) -> float:
    """Advective bound ``cfl_advect h / max(|v|, |E|)`` capped by ``ctl.dt``."""
    if ctl.fixed:
        return ctl.dt
    pot = solve_limit_potential(state.Z, D, state.v, kappa0=params.kappa0)
    speed = max(state.v.max_abs(), pot.field.max_abs())
    adv = ctl.cfl_advect * state.grid.h / max(speed, 1e-12)
    return max(min(adv, ctl.dt), DT_FLOOR)


def step_sbdf_limit(state_prev, state_curr: LimitState, dt: float, D: ScalarField, params: Params,
                    forcing=None, elliptic_source=None, dealias=True) -> LimitState:
    """One SBDF2 step of the limit system (IMEX Euler when ``state_prev`` is None)."""
    op = _LimitOperator(state_curr.grid, D, params, dealias, elliptic_source)
    U = op.pack(state_curr)
    N, _ = op.explicit(U, state_curr.t)
    t_new = state_curr.t + dt
    src = forcing(t_new) if forcing is not None else None
    if state_prev is None:
        U_new = imex_euler(U, N, op.lin, dt, src)
    else:
        U_prev = op.pack(state_prev)
        N_prev, _ = op.explicit(U_prev, state_prev.t)
        U_new = sbdf2(U_prev, U, N_prev, N, op.lin, dt, src)
    U_new[1:] = op.grid.leray(U_new[1:])
    if blown_up(U_new):
        raise BlowUpError(f"field norm exceeded threshold at t={t_new:.6g}")
    return op.unpack(U_new, t_new)


def _snapshot(op, U, t, phi_h, report):
    state = op.unpack(U.copy(), t)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        n, p = recover_np(state.Z, op.D)
    return LimitSnapshot(state, _potential_from(op.grid, phi_h, report), n, p)


def run_limit(initial: LimitState, D: ScalarField, params: Params, T: float, snapshot_times=None,
              ctl: StepControl = StepControl(), forcing=None, elliptic_source=None) -> Trajectory:
    """Integrate the limit system; snapshots are :class:`LimitSnapshot` objects.

    ``elliptic_source(t)`` optionally returns coefficients added to the
    right-hand side of the constraint (manufactured solutions only).
    """
    grid = initial.grid
    if snapshot_times is None:
        snapshot_times = [0.0, T]
    snapshot_times = sorted(snapshot_times)
    op = _LimitOperator(grid, D, params, ctl.dealias, elliptic_source)
    traj = Trajectory(snapshots=[])
    t0 = initial.t
    U = op.pack(initial)

    try:
        if T == 0:
            N, aux = op.explicit(U, t0)
            traj.snapshots = [_snapshot(op, U, t0, aux["phi_h"], aux["report"])]
            return traj
        dt_max = ctl.dt if ctl.fixed else limit_stable_dt(initial, D, params, ctl)
        dt, steps, snap_idx = plan_steps(T, snapshot_times, dt_max)
        traj.dt, traj.steps = dt, steps
        logger.debug("limit run: dt=%.3e steps=%d", dt, steps)
        wanted = {}
        for i, k in enumerate(snap_idx):
            wanted.setdefault(k, []).append(i)
        snaps = [None] * len(snapshot_times)
        _integrate(op, U, t0, dt, steps, wanted, snaps, traj, forcing)
    except SolverFailure as exc:
        exc.trajectory = traj
        raise
    return traj


def _integrate(op, U, t0, dt, steps, wanted, snaps, traj, forcing):
    """Time loop of :func:`run_limit`; ``traj.snapshots`` is kept current."""
    grid = op.grid
    U_prev = N_prev = None
    for k in range(steps + 1):
        t = t0 + k * dt
        N, aux = op.explicit(U, t)
        traj.diagnostics.append(_row(grid, k, t, U, aux))
        for i in wanted.get(k, ()):
            snaps[i] = _snapshot(op, U, t, aux["phi_h"], aux["report"])
            traj.snapshots = [s for s in snaps if s is not None]
        if k == steps:
            break
        src = forcing(t + dt) if forcing is not None else None
        if U_prev is None:
            U_new = imex_euler(U, N, op.lin, dt, src)
        else:
            U_new = sbdf2(U_prev, U, N_prev, N, op.lin, dt, src)
        U_new[1:] = grid.leray(U_new[1:])
        if blown_up(U_new):
            raise BlowUpError(f"field norm exceeded threshold at t={t + dt:.6g}")
        U_prev, N_prev, U = U, N, U_new


def _row(grid, step, t, U, aux):
    v_norm = np.sqrt(grid.norm_sq(U[1:]))
    div_norm = np.sqrt(grid.norm_sq(grid.div(U[1:])))
    rep = aux["report"]
    return {
        "step": step,
        "t": t,
        "norm_Z": float(np.sqrt(grid.norm_sq(U[0]))),
        "norm_v": float(v_norm),
        "mean_Z": float(grid.mean_of(U[0])),
        "min_Z": aux["Z_min"],
        "elliptic_iterations": rep.iterations,
        "elliptic_residual": rep.residual,
        "div_v": float(div_norm / v_norm) if v_norm > 0 else 0.0,
    }
