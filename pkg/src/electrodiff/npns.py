"""Nernst-Planck-Poisson-Navier-Stokes system at positive Debye length.

Unknowns are the charge densities ``n``, ``p`` and the velocity ``v``;
the potential solves ``lam^2 Lap(phi) = n - p - D`` and ``E = -grad(phi)``:

    n_t = div(grad n + n E - n v)
    p_t = div(grad p - p E - p v)
    v_t + v.grad v + grad(pi) - mu Lap v = -(n - p) E,   div v = 0

Diffusion and viscosity are implicit, drift, advection and the electric
force explicit (SBDF2).  The pressure is never formed: the explicit
velocity tendency is Leray-projected instead.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from electrodiff.errors import (
    AbortOnNegativeDensityError,
    BlowUpError,
    LambdaZeroError,
    NegativeDensityWarning,
    NonZeroMeanError,
)
from electrodiff.fields import NEGATIVE_ABORT, NpnsState, Params
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

POISSON_MEAN_TOL = 1e-10


@dataclass(frozen=True)
class PoissonSolution:
    phi: ScalarField
    field: VectorField


@dataclass(frozen=True)
class NpnsTendency:
    """Semi-discrete time derivatives (explicit + implicit parts, projected)."""

    dn_dt: ScalarField
    dp_dt: ScalarField
    dv_dt: VectorField
    poisson: PoissonSolution


def _require_lambda(lam):
    if not lam > 0:
        raise LambdaZeroError("lam must be positive; use the quasineutral solver for lam == 0")


def _poisson_hat(grid, rho_h, lam, scale=1.0):
    mean = abs(grid.mean_of(rho_h))
    if mean > POISSON_MEAN_TOL * scale:
        raise NonZeroMeanError(f"mean(n - p - D) = {mean:.3e}; Poisson problem is incompatible")
    return grid.inv_lap(rho_h) / lam**2


def solve_poisson(n: ScalarField, p: ScalarField, D: ScalarField, lam: float) -> PoissonSolution:
    """Mean-zero ``phi`` with ``lam^2 Lap(phi) = n - p - D`` and ``E = -grad(phi)``."""
    _require_lambda(lam)
    grid = n.grid
    scale = n.norm() + p.norm() + D.norm() + 1.0
    phi_h = _poisson_hat(grid, n.coeffs - p.coeffs - D.coeffs, lam, scale)
    return PoissonSolution(ScalarField(grid, coeffs=phi_h), VectorField(grid, coeffs=-grid.grad(phi_h)))


def poisson_residual(state: NpnsState, D: ScalarField, lam: float) -> float:
    """``||lam^2 Lap(phi) - (n - p - D)|| / (||n|| + ||p|| + ||D||)``.

    The charge ``n - p - D`` is itself O(lam^2) and may be pure round-off,
    so the residual is measured against the size of the data.
    """
    sol = solve_poisson(state.n, state.p, D, lam)
    grid = state.grid
    rho_h = state.n.coeffs - state.p.coeffs - D.coeffs
    res = lam**2 * grid.lap(sol.phi.coeffs) - rho_h
    return _relative(grid, res, state.n.norm() + state.p.norm() + D.norm())


def _relative(grid, res_h, scale):
    return float(np.sqrt(grid.norm_sq(res_h)) / scale) if scale > 0 else 0.0


class _NpnsOperator:
    """Explicit and implicit parts on the stacked coefficients ``(n, p, v...)``."""

    def __init__(self, grid, D: ScalarField, params: Params, dealias: bool = True):
        _require_lambda(params.lam)
        self.grid = grid
        self.D_h = D.coeffs
        self.lam = params.lam
        self.mu = params.mu
        self.dealias = dealias
        self.D_norm = D.norm()
        self.scale = self.D_norm + 1.0
        dim = grid.dim
        self.lin = np.empty((2 + dim,) + grid.shape)
        self.lin[0] = -grid.k2
        self.lin[1] = -grid.k2
        self.lin[2:] = -params.mu * grid.k2

    def pack(self, state: NpnsState):
        return np.concatenate([state.n.coeffs[None], state.p.coeffs[None], state.v.coeffs])

    def unpack(self, U, t):
        g = self.grid
        return NpnsState(t, ScalarField(g, coeffs=U[0]), ScalarField(g, coeffs=U[1]), VectorField(g, coeffs=U[2:]))

    def _phys(self, h):
        g = self.grid
        return g.physical_dealiased(h) if self.dealias else g.to_physical(h)

    def _fwd(self, a):
        g = self.grid
        return g.dealias(g.to_spectral(a)) if self.dealias else g.to_spectral(a)

    def explicit(self, U):
        """Return ``(N(U), aux)``; aux carries the potential and physical fields."""
        g = self.grid
        n_h, p_h, v_h = U[0], U[1], U[2:]
        rho_h = n_h - p_h - self.D_h
        phi_h = _poisson_hat(g, rho_h, self.lam, self.scale + np.sqrt(g.norm_sq(U[:2])))
        E_h = -g.grad(phi_h)

        n, p, E, v = self._phys(n_h), self._phys(p_h), self._phys(E_h), self._phys(v_h)
        jac = self._phys(g.grad(v_h))
        out = np.empty_like(U)
        out[0] = g.div(self._fwd(n * (E - v)))
        out[1] = g.div(self._fwd(-p * (E + v)))
        advect = np.einsum("j...,ij...->i...", v, jac)
        out[2:] = g.leray(self._fwd(-advect - (n - p) * E))
        aux = {"phi_h": phi_h, "E_h": E_h, "rho_h": rho_h, "n": n, "p": p, "D_norm": self.D_norm}
        return out, aux


def npns_rhs(state: NpnsState, D: ScalarField, params: Params, dealias: bool = True) -> NpnsTendency:
    """Exact semi-discrete right-hand sides at ``state``."""
    op = _NpnsOperator(state.grid, D, params, dealias)
    U = op.pack(state)
    N, aux = op.explicit(U)
    T = N + op.lin * U
    T[2:] = state.grid.leray(T[2:])
    g = state.grid
    pois = PoissonSolution(ScalarField(g, coeffs=aux["phi_h"]), VectorField(g, coeffs=aux["E_h"]))
    return NpnsTendency(ScalarField(g, coeffs=T[0]), ScalarField(g, coeffs=T[1]), VectorField(g, coeffs=T[2:]), pois)


def stable_dt(state: NpnsState, D: ScalarField, params: Params, ctl: StepControl = StepControl()) -> float:
    """Explicit-stability step bound.

    ``min(cfl_advect h / max(|v|, |E|), cfl_relax lam^2 / max(n + p), ctl.dt)``
    with ``h = 2 pi / N``, floored at ``1e-9``.  The second bound reflects
    the charge-relaxation rate ``(n + p) / lam^2`` of the explicit drift.
    """
    if ctl.fixed:
        return ctl.dt
    _require_lambda(params.lam)
    E = solve_poisson(state.n, state.p, D, params.lam).field
    speed = max(state.v.max_abs(), E.max_abs())
    relax = np.inf
    if ctl.enforce_relax:
        relax = ctl.cfl_relax * params.lam**2 / max((state.n.values + state.p.values).max(), 1e-300)
    adv = ctl.cfl_advect * state.grid.h / max(speed, 1e-12)
    return max(min(adv, relax, ctl.dt), DT_FLOOR)


def step_sbdf(state_prev, state_curr: NpnsState, dt: float, D: ScalarField, params: Params,
              forcing=None, dealias: bool = True) -> NpnsState:
    """One SBDF2 step from ``(state_prev, state_curr)``.

    ``state_prev=None`` takes the first-order IMEX Euler bootstrap step.
    ``forcing(t)`` optionally returns a source stack added at the new time.
    """
    op = _NpnsOperator(state_curr.grid, D, params, dealias)
    U = op.pack(state_curr)
    N, _ = op.explicit(U)
    t_new = state_curr.t + dt
    src = forcing(t_new) if forcing is not None else None
    if state_prev is None:
        U_new = imex_euler(U, N, op.lin, dt, src)
    else:
        U_prev = op.pack(state_prev)
        N_prev, _ = op.explicit(U_prev)
        U_new = sbdf2(U_prev, U, N_prev, N, op.lin, dt, src)
    U_new[2:] = op.grid.leray(U_new[2:])
    if blown_up(U_new):
        raise BlowUpError(f"field norm exceeded threshold at t={t_new:.6g}")
    return op.unpack(U_new, t_new)


def run(initial: NpnsState, D: ScalarField, params: Params, T: float, snapshot_times=None,
        ctl: StepControl = StepControl(), forcing=None) -> Trajectory:
    """Integrate to ``T`` with a constant step that lands on every snapshot time.

    Raises
    ------
    BlowUpError, AbortOnNegativeDensityError
        With the partial trajectory attached as ``exc.trajectory``.
    """
    grid = initial.grid
    if snapshot_times is None:
        snapshot_times = [0.0, T]
    snapshot_times = sorted(snapshot_times)
    t0 = initial.t
    op = _NpnsOperator(grid, D, params, ctl.dealias)
    traj = Trajectory(snapshots=[])
    if T == 0:
        traj.snapshots = [initial for _ in snapshot_times] or [initial]
        return traj

    dt, steps, snap_idx = plan_steps(T, snapshot_times, stable_dt(initial, D, params, ctl))
    traj.dt, traj.steps = dt, steps
    logger.debug("npns run: lam=%g dt=%.3e steps=%d", params.lam, dt, steps)
    wanted = {}
    for i, k in enumerate(snap_idx):
        wanted.setdefault(k, []).append(i)
    snaps = [None] * len(snapshot_times)

    U = op.pack(initial)
    U_prev = N_prev = None
    warned = False
    for k in range(steps + 1):
        t = t0 + k * dt
        N, aux = op.explicit(U)
        row = _row(grid, k, t, U, aux, params.lam)
        traj.diagnostics.append(row)
        for i in wanted.get(k, ()):
            snaps[i] = op.unpack(U.copy(), t)
        lo = min(row["min_n"], row["min_p"])
        if lo < NEGATIVE_ABORT:
            traj.snapshots = [s for s in snaps if s is not None]
            raise AbortOnNegativeDensityError(f"density minimum {lo:.3e} at t={t:.6g}", traj)
        if lo <= 0 and not warned:
            warnings.warn(f"density minimum {lo:.3e} at t={t:.6g}", NegativeDensityWarning, stacklevel=2)
            warned = True
        if k == steps:
            break
        src = forcing(t + dt) if forcing is not None else None
        if U_prev is None:
            U_new = imex_euler(U, N, op.lin, dt, src)
        else:
            U_new = sbdf2(U_prev, U, N_prev, N, op.lin, dt, src)
        U_new[2:] = grid.leray(U_new[2:])
        if blown_up(U_new):
            traj.snapshots = [s for s in snaps if s is not None]
            raise BlowUpError(f"field norm exceeded threshold at t={t + dt:.6g}", traj)
        U_prev, N_prev, U = U, N, U_new
    traj.snapshots = snaps
    return traj


def _row(grid, step, t, U, aux, lam):
    res = lam**2 * grid.lap(aux["phi_h"]) - aux["rho_h"]
    scale = np.sqrt(grid.norm_sq(U[0])) + np.sqrt(grid.norm_sq(U[1])) + aux["D_norm"]
    v_norm = np.sqrt(grid.norm_sq(U[2:]))
    div_norm = np.sqrt(grid.norm_sq(grid.div(U[2:])))
    return {
        "step": step,
        "t": t,
        "norm_n": float(np.sqrt(grid.norm_sq(U[0]))),
        "norm_p": float(np.sqrt(grid.norm_sq(U[1]))),
        "norm_v": float(v_norm),
        "mean_n": float(grid.mean_of(U[0])),
        "mean_p": float(grid.mean_of(U[1])),
        "min_n": float(aux["n"].min()),
        "min_p": float(aux["p"].min()),
        "poisson_residual": _relative(grid, res, scale),
        "div_v": float(div_norm / v_norm) if v_norm > 0 else 0.0,
    }
