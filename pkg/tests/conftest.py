import numpy as np
import pytest

from electrodiff.spectral import Grid, ScalarField, VectorField

ACCEPTANCE_RESULTS = []


def record_acceptance(name: str, passed: bool, detail: str = ""):
    """Store one criterion outcome for the terminal summary."""
    ACCEPTANCE_RESULTS.append((name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def random_band_limited(grid: Grid, rng, kmax=None, mean=0.0, rank=0):
    """Random real field with modes |k_j| <= kmax (default: the dealiased band)."""
    kmax = grid.n // 3 if kmax is None else kmax
    shape = ((grid.dim,) if rank else ()) + grid.shape
    raw = rng.standard_normal(shape)
    coeffs = grid.to_spectral(raw)
    coeffs *= np.all(np.abs(grid.k) <= kmax, axis=0)
    coeffs[(..., *([0] * grid.dim))] = mean
    cls = VectorField if rank else ScalarField
    return cls(grid, values=grid.to_physical(coeffs))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid16():
    return Grid(2, 16)


def random_bundle(grid: Grid, rng, lam: float):
    """Random error bundle with curl-free field errors and solenoidal velocity errors.

    Each field gets its own band limit and amplitude so that the ratio of
    the quadratic forms explores different spectral mixes.
    """
    from electrodiff.diagnostics import ErrorBundle
    from electrodiff.spectral import gradient

    def scalar():
        amp = 10 ** rng.uniform(-2, 1)
        return amp * random_band_limited(grid, rng, kmax=int(rng.integers(1, grid.n // 3 + 1)))

    def solenoidal():
        amp = 10 ** rng.uniform(-2, 1)
        F = random_band_limited(grid, rng, kmax=int(rng.integers(1, grid.n // 3 + 1)), rank=1)
        return VectorField(grid, coeffs=amp * grid.leray(F.coeffs))

    n, p, n_t, p_t = scalar(), scalar(), scalar(), scalar()
    E0 = gradient(scalar())
    return ErrorBundle(
        t=0.0, lam=lam, z=n + p, n=n, p=p, v=solenoidal(), E=gradient(scalar()),
        z_t=n_t + p_t, n_t=n_t, p_t=p_t, v_t=solenoidal(), E_t=gradient(scalar()), limit_field=E0,
    )
