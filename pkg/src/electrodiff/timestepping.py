"""Shared pieces of the IMEX time integrators.

Both solvers advance a stack of spectral coefficient arrays ``U`` under

    dU/dt = L U + N(U, t) + f(t)

with ``L`` diagonal in Fourier space (diffusion and viscosity) and ``N``
the explicit transport/coupling terms.  SBDF2 reads

    (3 U^{n+1} - 4 U^n + U^{n-1}) / (2 dt) = L U^{n+1} + 2 N^n - N^{n-1} + f^{n+1}

and is started with one IMEX Euler step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BLOWUP_THRESHOLD = 1e6
DT_FLOOR = 1e-9


@dataclass(frozen=True)
class StepControl:
    """Step-size policy.

    ``dt`` caps the step (``fixed=True`` uses it verbatim, bypassing the
    stability bounds).  ``enforce_relax=False`` drops the ``lam**2``
    charge-relaxation bound.
    """

    dt: float = 1e-3
    cfl_advect: float = 0.4
    cfl_relax: float = 0.5
    dealias: bool = True
    fixed: bool = False
    enforce_relax: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass
class Trajectory:
    """States at the requested snapshot times plus one diagnostics row per step."""

    snapshots: list
    diagnostics: list = field(default_factory=list)
    dt: float = 0.0
    steps: int = 0

    @property
    def times(self):
        return [s.t for s in self.snapshots]

    @property
    def final(self):
        return self.snapshots[-1]


def imex_euler(U, N, lin, dt, src=None):
    rhs = U + dt * N
    if src is not None:
        rhs = rhs + dt * src
    return rhs / (1.0 - dt * lin)


def sbdf2(U_prev, U, N_prev, N, lin, dt, src=None):
    rhs = 4.0 * U - U_prev + 2.0 * dt * (2.0 * N - N_prev)
    if src is not None:
        rhs = rhs + 2.0 * dt * src
    return rhs / (3.0 - 2.0 * dt * lin)


def plan_steps(T: float, snapshot_times, dt_max: float):
    """Constant step ``dt <= dt_max`` landing on every snapshot time.

    Returns ``(dt, total_steps, snapshot_step_indices)``.
    """
    times = np.asarray(sorted(snapshot_times), dtype=float)
    if times.size and (times[0] < -1e-12 or times[-1] > T * (1 + 1e-12) + 1e-14):
        raise ValueError("snapshot times must lie in [0, T]")
    if T == 0:
        return 0.0, 0, [0] * len(times)
    start = max(1, math.ceil(T / dt_max - 1e-9))
    frac = times / T
    for steps in range(start, start + 100_000):
        idx = frac * steps
        if np.all(np.abs(idx - np.round(idx)) < 1e-8 * max(1, steps)):
            return T / steps, steps, [int(round(i)) for i in idx]
    raise ValueError("snapshot times are not commensurate with T")


def coeff_norm(U) -> float:
    return float(np.sqrt(np.sum(np.abs(U) ** 2)))


def blown_up(U) -> bool:
    norms = np.sqrt(np.sum(np.abs(U.reshape(U.shape[0], -1)) ** 2, axis=1))
    return bool(not np.all(np.isfinite(norms)) or np.any(norms > BLOWUP_THRESHOLD))
