"""Manufactured-solution verification of both time integrators (2D).

Forcing terms are derived symbolically with sympy from chosen exact
fields, so the check is independent of the spectral operators it tests.
Velocities come from a stream function and are divergence free; for the
Debye-length system ``p`` is defined through the potential so the Poisson
equation holds exactly, and for the limit system a source is added to the
elliptic constraint so the chosen potential is its solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from electrodiff import npns, quasineutral
from electrodiff.fields import LimitState, NpnsState, Params
from electrodiff.spectral import Grid, ScalarField, VectorField
from electrodiff.timestepping import StepControl

x, y, t = sp.symbols("x y t", real=True)


def _grad(f):
    return sp.Matrix([sp.diff(f, x), sp.diff(f, y)])


def _div(F):
    return sp.diff(F[0], x) + sp.diff(F[1], y)


def _lap(f):
    return sp.diff(f, x, 2) + sp.diff(f, y, 2)


def _advect(v):
    return sp.Matrix([v[0] * sp.diff(v[i], x) + v[1] * sp.diff(v[i], y) for i in range(2)])


def _velocity(psi):
    return sp.Matrix([sp.diff(psi, y), -sp.diff(psi, x)])


class _Evaluator:
    """Numeric evaluation of sympy expressions on a grid."""

    def __init__(self, exprs: dict):
        self._fns = {k: sp.lambdify((x, y, t), e, "numpy") for k, e in exprs.items()}

    def __call__(self, name, grid: Grid, time: float) -> np.ndarray:
        val = self._fns[name](grid.x[0], grid.x[1], time)
        return np.broadcast_to(np.asarray(val, dtype=float), grid.shape).copy()


@dataclass
class ManufacturedNpns:
    """Exact ``n, p, v`` with forcing for the Debye-length system."""

    n: sp.Expr
    phi: sp.Expr
    psi: sp.Expr
    D: sp.Expr
    lam: float
    mu: float
    _ev: _Evaluator = field(init=False, repr=False)

    def __post_init__(self):
        lam2 = sp.Float(self.lam) ** 2
        n, phi, D = self.n, self.phi, self.D
        p = n - D - lam2 * _lap(phi)
        E = -_grad(phi)
        v = _velocity(self.psi)
        f_n = sp.diff(n, t) - _div(_grad(n) + n * E - n * v)
        f_p = sp.diff(p, t) - _div(_grad(p) - p * E - p * v)
        f_v = sp.diff(v, t) + _advect(v) - self.mu * sp.Matrix([_lap(v[0]), _lap(v[1])]) + (n - p) * E
        self._ev = _Evaluator({
            "n": n, "p": p, "v0": v[0], "v1": v[1], "D": D,
            "n_t": sp.diff(n, t), "p_t": sp.diff(p, t), "v0_t": sp.diff(v[0], t), "v1_t": sp.diff(v[1], t),
            "f_n": f_n, "f_p": f_p, "f_v0": f_v[0], "f_v1": f_v[1],
        })

    @property
    def params(self):
        return Params(lam=self.lam, mu=self.mu, dim=2)

    def doping(self, grid):
        return ScalarField(grid, values=self._ev("D", grid, 0.0))

    def exact(self, grid, time) -> NpnsState:
        ev = self._ev
        v = np.stack([ev("v0", grid, time), ev("v1", grid, time)])
        n, D = ev("n", grid, time), ev("D", grid, time)
        p = ev("p", grid, time)
        # sampled Lap(phi) has zero mean only up to aliasing; restore discrete compatibility
        p += (n - p - D).mean()
        return NpnsState(time, ScalarField(grid, values=n), ScalarField(grid, values=p),
                         VectorField(grid, values=v))

    def exact_rates(self, grid, time) -> np.ndarray:
        """Exact time derivatives stacked as ``(n_t, p_t, v_t...)`` in physical space."""
        return np.stack([self._ev(k, grid, time) for k in ("n_t", "p_t", "v0_t", "v1_t")])

    def forcing(self, grid):
        ev = self._ev

        def f(time):
            stack = grid.to_spectral(np.stack([ev(k, grid, time) for k in ("f_n", "f_p", "f_v0", "f_v1")]))
            stack[(slice(0, 2),) + (0,) * grid.dim] = 0.0  # divergence form: no mass source
            return stack

        return f

    def run(self, grid, T, dt):
        ctl = StepControl(dt=dt, fixed=True)
        traj = npns.run(self.exact(grid, 0.0), self.doping(grid), self.params, T, [0.0, T], ctl,
                        forcing=self.forcing(grid))
        return traj.final

    def error(self, state: NpnsState) -> float:
        ex = self.exact(state.grid, state.t)
        return float(max(np.abs(state.n.values - ex.n.values).max(),
                         np.abs(state.p.values - ex.p.values).max(),
                         np.abs(state.v.values - ex.v.values).max()))


@dataclass
class ManufacturedLimit:
    """Exact ``Z, v`` and potential with forcing for the limit system."""

    Z: sp.Expr
    phi: sp.Expr
    psi: sp.Expr
    D: sp.Expr
    mu: float
    _ev: _Evaluator = field(init=False, repr=False)

    def __post_init__(self):
        Z, phi, D = self.Z, self.phi, self.D
        E = -_grad(phi)
        v = _velocity(self.psi)
        f_Z = sp.diff(Z, t) - _div(_grad(Z) + D * E - Z * v)
        # the solver solves div(Z grad phi) = Lap D - div(D v) + source
        source = _div(Z * _grad(phi)) - _lap(D) + _div(D * v)
        f_v = sp.diff(v, t) + _advect(v) - self.mu * sp.Matrix([_lap(v[0]), _lap(v[1])]) + D * E
        self._ev = _Evaluator({
            "Z": Z, "v0": v[0], "v1": v[1], "D": D, "phi": phi,
            "Z_t": sp.diff(Z, t), "v0_t": sp.diff(v[0], t), "v1_t": sp.diff(v[1], t),
            "f_Z": f_Z, "f_v0": f_v[0], "f_v1": f_v[1], "source": source,
        })

    @property
    def params(self):
        return Params(lam=0.0, mu=self.mu, dim=2)

    def doping(self, grid):
        return ScalarField(grid, values=self._ev("D", grid, 0.0))

    def exact(self, grid, time) -> LimitState:
        ev = self._ev
        v = np.stack([ev("v0", grid, time), ev("v1", grid, time)])
        return LimitState(time, ScalarField(grid, values=ev("Z", grid, time)), VectorField(grid, values=v))

    def exact_potential(self, grid, time) -> ScalarField:
        phi = self._ev("phi", grid, time)
        return ScalarField(grid, values=phi - phi.mean())

    def exact_rates(self, grid, time) -> np.ndarray:
        """Exact time derivatives stacked as ``(Z_t, v_t...)`` in physical space."""
        return np.stack([self._ev(k, grid, time) for k in ("Z_t", "v0_t", "v1_t")])

    def forcing(self, grid):
        ev = self._ev

        def f(time):
            stack = grid.to_spectral(np.stack([ev(k, grid, time) for k in ("f_Z", "f_v0", "f_v1")]))
            stack[(0,) * (grid.dim + 1)] = 0.0
            return stack

        return f

    def elliptic_source(self, grid):
        def s(time):
            out = grid.to_spectral(self._ev("source", grid, time))
            out[(0,) * grid.dim] = 0.0
            return out

        return s

    def run(self, grid, T, dt):
        ctl = StepControl(dt=dt, fixed=True)
        traj = quasineutral.run_limit(self.exact(grid, 0.0), self.doping(grid), self.params, T, [0.0, T], ctl,
                                      forcing=self.forcing(grid), elliptic_source=self.elliptic_source(grid))
        return traj.final.state

    def error(self, state: LimitState) -> float:
        ex = self.exact(state.grid, state.t)
        return float(max(np.abs(state.Z.values - ex.Z.values).max(),
                         np.abs(state.v.values - ex.v.values).max()))


def default_npns(lam=0.5, mu=1.0, steady=False, amplitude=1.0) -> ManufacturedNpns:
    """Band-limited time-dependent fields, or smooth non-band-limited steady ones."""
    a = sp.Float(amplitude)
    D = sp.Rational(1, 10) * sp.cos(x)
    if steady:
        n = 1 + a * sp.Rational(1, 10) * sp.exp(sp.sin(x)) * sp.cos(y)
        phi = a * sp.Rational(1, 10) * sp.exp(sp.cos(x + y)) * sp.sin(y)
        psi = a * sp.Rational(1, 10) * sp.exp(sp.sin(x) * sp.cos(y))
        return ManufacturedNpns(n, phi, psi, D, lam, mu)
    n = 1 + a * sp.Rational(1, 5) * sp.cos(t) * sp.sin(x) * sp.cos(y)
    phi = a * sp.Rational(1, 10) * (1 + sp.sin(2 * t)) * sp.cos(x) * sp.sin(y)
    psi = a * sp.Rational(1, 10) * sp.exp(-t) * sp.sin(x) * sp.sin(2 * y)
    return ManufacturedNpns(n, phi, psi, D, lam, mu)


def default_limit(mu=1.0, steady=False, amplitude=1.0) -> ManufacturedLimit:
    a = sp.Float(amplitude)
    D = sp.Rational(1, 10) * sp.cos(x) + sp.Rational(1, 20) * sp.sin(y)
    if steady:
        Z = 2 + a * sp.Rational(1, 5) * sp.exp(sp.sin(x) * sp.cos(y))
        phi = a * sp.Rational(1, 10) * sp.exp(sp.cos(x + y))
        psi = a * sp.Rational(1, 10) * sp.exp(sp.sin(x + 2 * y))
        return ManufacturedLimit(Z, phi, psi, D, mu)
    Z = 2 + a * sp.Rational(1, 5) * sp.cos(t) * sp.cos(x) * sp.cos(y)
    phi = a * sp.Rational(1, 10) * (1 + sp.sin(2 * t)) * sp.sin(x + y)
    psi = a * sp.Rational(1, 10) * sp.exp(-t) * sp.cos(2 * x) * sp.sin(y)
    return ManufacturedLimit(Z, phi, psi, D, mu)


@dataclass
class MmsRow:
    value: float
    error: float
    order: float | None


def observed_orders(values, errors, halving=True):
    """Pairwise orders ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``."""
    out = [None]
    for (h0, e0), (h1, e1) in zip(zip(values, errors), zip(values[1:], errors[1:])):
        if e0 > 0 and e1 > 0:
            out.append(float(np.log(e0 / e1) / np.log(h0 / h1)))
        else:
            out.append(None)
    return out


def run_mms(system: str, study: str, values, *, lam=0.5, mu=1.0, T=0.2, n=32, dt=1e-3, amplitude=1.0):
    """Errors against a manufactured solution for a list of ``dt`` or ``N``.

    ``study='dt'`` uses band-limited time-dependent fields on an ``n``-point
    grid; ``study='n'`` uses steady non-band-limited fields at step ``dt``.
    Returns a list of :class:`MmsRow`; the order column is the observed
    order for ``dt`` and ``log10`` of the error drop for ``n``.
    """
    if system not in ("npns", "limit"):
        raise ValueError(f"system must be 'npns' or 'limit', got {system!r}")
    if study not in ("dt", "n"):
        raise ValueError(f"study must be 'dt' or 'n', got {study!r}")
    steady = study == "n"
    ms = default_npns(lam, mu, steady, amplitude) if system == "npns" else default_limit(mu, steady, amplitude)
    errors = []
    for val in values:
        grid = Grid(2, n if study == "dt" else int(val))
        step = float(val) if study == "dt" else dt
        errors.append(ms.error(ms.run(grid, T, step)))
    if study == "dt":
        orders = observed_orders(values, errors)
    else:
        orders = [None] + [float(np.log10(e0 / e1)) if e1 > 0 else None for e0, e1 in zip(errors, errors[1:])]
    return [MmsRow(float(v), e, o) for v, e, o in zip(values, errors, orders)]


def run_mms_config(config, system: str, study: str):
    """:func:`run_mms` with the study parameters of an experiment config."""
    if study == "dt":
        return run_mms(system, "dt", config.mms_dts, lam=config.mms_lambda, mu=config.mu, T=config.mms_T, n=32)
    return run_mms(system, "n", config.mms_ns, lam=config.mms_lambda, mu=config.mu, T=config.mms_n_T,
                   dt=config.mms_n_dt)
