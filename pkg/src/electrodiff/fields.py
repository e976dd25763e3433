"""Model parameters, state containers and construction of initial data."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from electrodiff.errors import ModeOutOfBandError, NegativeDensityWarning
from electrodiff.spectral import Grid, ScalarField, VectorField, divergence

COMPAT_TOL = 1e-10
NEGATIVE_ABORT = -1e-3


@dataclass(frozen=True)
class Params:
    """Scaled Debye length ``lam``, viscosity ``mu`` and spatial dimension.

    ``lam == 0`` denotes the quasineutral system.  ``kappa0`` is the lower
    bound on ``Z = n + p``; the limit solver aborts once ``min Z`` drops
    below ``kappa0 / 2``.
    """

    lam: float
    mu: float = 1.0
    dim: int = 2
    kappa0: float = 0.5

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if not self.kappa0 > 0:
            raise ValueError("kappa0 must be positive")


@dataclass(frozen=True)
class NpnsState:
    """Charge densities and velocity of the Debye-length system at time ``t``."""

    t: float
    n: ScalarField
    p: ScalarField
    v: VectorField

    @property
    def grid(self) -> Grid:
        return self.n.grid


@dataclass(frozen=True)
class LimitState:
    """Total density ``Z = n + p`` and velocity of the quasineutral system."""

    t: float
    Z: ScalarField
    v: VectorField

    @property
    def grid(self) -> Grid:
        return self.Z.grid


def build_profile(grid: Grid, modes=(), offset: float = 0.0) -> ScalarField:
    """Band-limited profile ``offset + sum amp * cos|sin(k . x)``.

    Parameters
    ----------
    modes : iterable of (k, amp, kind)
        ``k`` an integer vector of length ``grid.dim``, ``kind`` one of
        ``"cos"`` or ``"sin"``.

    Raises
    ------
    ModeOutOfBandError
        If any component of ``k`` exceeds the dealiased band ``n/3``.
    """
    values = np.full(grid.shape, float(offset))
    for k, amp, kind in modes:
        k = np.asarray(k, dtype=float)
        if k.shape != (grid.dim,):
            raise ValueError(f"mode {tuple(k)} does not match dim={grid.dim}")
        if np.any(np.abs(k) > grid.n / 3.0):
            raise ModeOutOfBandError(f"mode {tuple(k)} outside |k_j| <= {grid.n / 3:.2f}")
        phase = np.tensordot(k, grid.x, axes=1)
        if kind == "cos":
            values += amp * np.cos(phase)
        elif kind == "sin":
            values += amp * np.sin(phase)
        else:
            raise ValueError(f"unknown mode kind {kind!r}")
    return ScalarField(grid, values=values)


def build_velocity(grid: Grid, component_modes) -> VectorField:
    """Velocity from per-component mode lists, Leray-projected and mean-free."""
    if len(component_modes) != grid.dim:
        raise ValueError(f"need {grid.dim} component mode lists, got {len(component_modes)}")
    comps = [build_profile(grid, m) for m in component_modes]
    coeffs = grid.leray(VectorField.from_components(comps).coeffs)
    coeffs[(..., *([0] * grid.dim))] = 0.0
    return VectorField(grid, coeffs=coeffs)


@dataclass
class ConstraintCheck:
    name: str
    residual: float
    passed: bool


@dataclass
class CompatibilityReport:
    checks: list = field(default_factory=list)
    tol: float = COMPAT_TOL

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> ConstraintCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_compatibility(state: NpnsState, D: ScalarField, tol: float = COMPAT_TOL) -> CompatibilityReport:
    """Check the solvability integrals: mean(n - p - D) = 0 and mean(v) = 0.

    Never raises; failures are reported per constraint.
    """
    report = CompatibilityReport(tol=tol)
    charge = float(state.n.mean() - state.p.mean() - D.mean())
    report.checks.append(ConstraintCheck("charge", charge, abs(charge) <= tol))
    for i, m in enumerate(np.atleast_1d(state.v.mean())):
        report.checks.append(ConstraintCheck(f"velocity[{i}]", float(m), abs(m) <= tol))
    return report


def recover_np(Z: ScalarField, D: ScalarField):
    """Split ``Z`` into ``n = (Z + D)/2`` and ``p = (Z - D)/2``.

    Warns with :class:`NegativeDensityWarning` when either density is not
    strictly positive.
    """
    n = 0.5 * (Z + D)
    p = 0.5 * (Z - D)
    lo = min(n.min(), p.min())
    if lo <= 0:
        warnings.warn(f"recovered density has minimum {lo:.3e}", NegativeDensityWarning, stacklevel=2)
    return n, p


def well_prepared_initial(limit0: LimitState, D: ScalarField, params: Params) -> NpnsState:
    """Debye-length initial data matched to the limit data.

    ``n = n0``, ``p = p0 + lam**2 div(E0)``, ``v = v0`` where ``E0`` is the
    limit electric field at the initial time.  With this choice the initial
    field of the Debye-length system equals ``E0``.
    """
    from electrodiff.quasineutral import solve_limit_potential

    if not params.lam > 0:
        raise ValueError("well-prepared data needs lam > 0")
    pot = solve_limit_potential(limit0.Z, D, limit0.v, kappa0=params.kappa0)
    n0, p0 = recover_np(limit0.Z, D)
    p = p0 + params.lam**2 * divergence(pot.field)
    return NpnsState(t=limit0.t, n=n0, p=p, v=limit0.v)
