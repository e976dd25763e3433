"""Fourier pseudospectral toolbox on the periodic box [0, 2*pi)^d.

Coefficients use the forward-normalised convention

    u_hat[k] = N**-d * sum_j u(x_j) exp(-i k.x_j),

so the mean of a field is its zero mode and Parseval reads
``mean(|u|**2) == sum(|u_hat|**2)``.  All norms below follow this
mean-square convention and are therefore resolution independent.

Derivatives use per-axis wavenumbers with the Nyquist component set to
zero, which keeps derivatives of real fields real and makes the discrete
Laplacian equal ``div(grad(.))`` exactly.

Array-level kernels live on :class:`Grid` (the solvers call these directly
on stacked coefficient arrays); :class:`ScalarField` and :class:`VectorField`
wrap them for the public API.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from electrodiff.errors import NonZeroMeanError

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "transform_forward",
    "transform_inverse",
    "gradient",
    "divergence",
    "laplacian",
    "inverse_laplacian",
    "dealias",
    "leray_project",
    "sobolev_norm",
    "product",
]


class Grid:
    """Uniform periodic grid with ``n`` points per axis in ``dim`` dimensions.

    Attributes
    ----------
    k : ndarray, shape (dim, n, ..., n)
        Integer wavenumbers in FFT ordering, components in [-n/2, n/2 - 1].
    kd : ndarray
        Differentiation wavenumbers: ``k`` with the Nyquist component zeroed.
    k2 : ndarray
        ``|kd|**2``; the Laplacian symbol is ``-k2``.
    dealias_mask : ndarray of bool
        True for modes kept by the 2/3 rule (every ``|k_j| <= n/3``).
    """

    def __init__(self, dim: int, n: int):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        if n < 8 or n & (n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {n}")
        self.dim = dim
        self.n = n
        self.shape = (n,) * dim
        self.axes = tuple(range(-dim, 0))

        k1 = np.fft.fftfreq(n, d=1.0 / n)
        self.k = np.array(np.meshgrid(*([k1] * dim), indexing="ij"))
        self.nyquist = self.k == -(n // 2)
        self.kd = np.where(self.nyquist, 0.0, self.k)
        self.k2 = np.sum(self.kd**2, axis=0)
        self.dealias_mask = np.all(np.abs(self.k) <= n / 3.0, axis=0)

        nz = self.k2 > 0
        self._inv_k2 = np.zeros_like(self.k2)
        self._inv_k2[nz] = 1.0 / self.k2[nz]

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n})"

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.dim, self.n) == (other.dim, other.n)

    def __hash__(self):
        return hash((self.dim, self.n))

    @property
    def h(self) -> float:
        return 2.0 * np.pi / self.n

    @cached_property
    def x(self) -> np.ndarray:
        """Grid coordinates, shape (dim, n, ..., n)."""
        x1 = np.arange(self.n) * self.h
        return np.array(np.meshgrid(*([x1] * self.dim), indexing="ij"))

    # -- transforms ---------------------------------------------------------

    def to_spectral(self, u: np.ndarray) -> np.ndarray:
        return np.fft.fftn(u, axes=self.axes, norm="forward")

    def to_physical(self, uh: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(uh, axes=self.axes, norm="forward").real

    # -- spectral kernels on coefficient arrays -----------------------------

    def grad(self, fh: np.ndarray) -> np.ndarray:
        """Gradient of a scalar, shape grid -> (dim, grid).

        A vector input (dim, grid) gives the Jacobian (dim, dim, grid) with
        ``out[i, j] = d_j F_i``.
        """
        if fh.ndim == self.dim:
            return 1j * self.kd * fh
        return 1j * self.kd[None, ...] * fh[:, None, ...]

    def div(self, Fh: np.ndarray) -> np.ndarray:
        return np.sum(1j * self.kd * Fh, axis=-self.dim - 1)

    def lap(self, fh: np.ndarray) -> np.ndarray:
        return -self.k2 * fh

    def inv_lap(self, fh: np.ndarray) -> np.ndarray:
        return -self._inv_k2 * fh

    def dealias(self, fh: np.ndarray) -> np.ndarray:
        return fh * self.dealias_mask

    def leray(self, Fh: np.ndarray) -> np.ndarray:
        kdotF = np.sum(self.kd * Fh, axis=0)
        return Fh - self.kd * (kdotF * self._inv_k2)

    def norm_sq(self, fh: np.ndarray, s: int = 0) -> float:
        w = np.abs(fh) ** 2
        if s:
            w = w * (1.0 + self.k2) ** s
        return float(np.sum(w))

    def physical_dealiased(self, fh: np.ndarray) -> np.ndarray:
        return self.to_physical(fh * self.dealias_mask)

    def product(self, ah: np.ndarray, bh: np.ndarray, dealias: bool = True) -> np.ndarray:
        """Pseudospectral product of two coefficient arrays (2/3 rule by default)."""
        if not dealias:
            return self.to_spectral(self.to_physical(ah) * self.to_physical(bh))
        return self.dealias(self.to_spectral(self.physical_dealiased(ah) * self.physical_dealiased(bh)))

    def mean_of(self, fh: np.ndarray):
        return fh[(..., *([0] * self.dim))].real


class _Field:
    """Field holding physical values and/or spectral coefficients.

    Whichever representation is missing is computed on first access and
    cached; fields are treated as immutable values.
    """

    __slots__ = ("grid", "_values", "_coeffs")
    _rank = 0

    def __init__(self, grid: Grid, values=None, coeffs=None):
        if values is None and coeffs is None:
            raise ValueError("need values or coeffs")
        expected = self._expected_shape(grid)
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.shape != expected:
                raise ValueError(f"values shape {values.shape} != {expected}")
        if coeffs is not None:
            coeffs = np.asarray(coeffs, dtype=complex)
            if coeffs.shape != expected:
                raise ValueError(f"coeffs shape {coeffs.shape} != {expected}")
        self.grid = grid
        self._values = values
        self._coeffs = coeffs

    @classmethod
    def _expected_shape(cls, grid):
        return ((grid.dim,) if cls._rank else ()) + grid.shape

    @classmethod
    def from_values(cls, grid, values):
        return cls(grid, values=values)

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        return cls(grid, coeffs=coeffs)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, coeffs=np.zeros(cls._expected_shape(grid), dtype=complex))

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = self.grid.to_physical(self._coeffs)
        return self._values

    @property
    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            self._coeffs = self.grid.to_spectral(self._values)
        return self._coeffs

    @property
    def has_values(self) -> bool:
        return self._values is not None

    @property
    def has_coeffs(self) -> bool:
        return self._coeffs is not None

    def mean(self):
        return self.grid.mean_of(self.coeffs)

    def norm(self, s: int = 0) -> float:
        return float(np.sqrt(self.grid.norm_sq(self.coeffs, s)))

    def _check(self, other):
        if type(other) is not type(self) or other.grid != self.grid:
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")

    def __add__(self, other):
        if np.isscalar(other):
            c = self.coeffs.copy()
            c[(..., *([0] * self.grid.dim))] += other
            return type(self)(self.grid, coeffs=c)
        self._check(other)
        return type(self)(self.grid, coeffs=self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return type(self)(self.grid, coeffs=-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        return type(self)(self.grid, coeffs=c * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)


class ScalarField(_Field):
    """Real scalar field on a :class:`Grid`."""

    __slots__ = ()
    _rank = 0

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(*x)`` at the grid points."""
        return cls(grid, values=np.broadcast_to(func(*grid.x), grid.shape).astype(float))

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, values=np.full(grid.shape, float(value)))

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def __repr__(self):
        return f"ScalarField({self.grid!r}, mean={self.mean():.6g})"


class VectorField(_Field):
    """Real vector field with ``grid.dim`` components stacked on axis 0."""

    __slots__ = ()
    _rank = 1

    @classmethod
    def from_components(cls, components):
        components = list(components)
        grid = components[0].grid
        if len(components) != grid.dim or any(c.grid != grid for c in components):
            raise ValueError("vector components must share one grid and match its dimension")
        if all(c.has_coeffs for c in components):
            return cls(grid, coeffs=np.stack([c.coeffs for c in components]))
        return cls(grid, values=np.stack([c.values for c in components]))

    @classmethod
    def from_function(cls, grid, func):
        vals = func(*grid.x)
        return cls(grid, values=np.stack([np.broadcast_to(v, grid.shape) for v in vals]).astype(float))

    def __getitem__(self, i) -> ScalarField:
        return ScalarField(self.grid, coeffs=self.coeffs[i])

    @property
    def components(self):
        return tuple(self[i] for i in range(self.grid.dim))

    def max_abs(self) -> float:
        """Largest pointwise Euclidean magnitude."""
        return float(np.sqrt(np.max(np.sum(self.values**2, axis=0))))

    def __repr__(self):
        return f"VectorField({self.grid!r})"


def _wrap(grid, coeffs):
    cls = ScalarField if coeffs.ndim == grid.dim else VectorField
    return cls(grid, coeffs=coeffs)


def transform_forward(f):
    """Return ``f`` with its spectral coefficients materialised."""
    f.coeffs
    return f


def transform_inverse(f):
    """Return ``f`` with its physical values materialised."""
    f.values
    return f


def gradient(f: ScalarField) -> VectorField:
    return VectorField(f.grid, coeffs=f.grid.grad(f.coeffs))


def divergence(F: VectorField) -> ScalarField:
    return ScalarField(F.grid, coeffs=F.grid.div(F.coeffs))


def laplacian(f):
    return _wrap(f.grid, f.grid.lap(f.coeffs))


def inverse_laplacian(f: ScalarField, tol: float = 1e-10) -> ScalarField:
    """Mean-zero solution ``u`` of ``laplacian(u) = f``.

    Raises
    ------
    NonZeroMeanError
        If ``|mean(f)| > tol * ||f||``; such a right-hand side has no
        periodic solution.
    """
    m = abs(f.mean())
    if m > tol * max(f.norm(), np.finfo(float).tiny):
        raise NonZeroMeanError(f"right-hand side has mean {m:.3e}; no periodic solution")
    return ScalarField(f.grid, coeffs=f.grid.inv_lap(f.coeffs))


def dealias(f):
    return _wrap(f.grid, f.grid.dealias(f.coeffs))


def leray_project(F: VectorField) -> VectorField:
    return VectorField(F.grid, coeffs=F.grid.leray(F.coeffs))


def sobolev_norm(f, s: int = 0) -> float:
    """``sqrt(sum_k (1 + |k|^2)^s |f_hat_k|^2)`` summed over components."""
    if s < 0:
        raise ValueError("s must be >= 0")
    return f.norm(s)


def product(a, b):
    """Dealiased pointwise product.

    Scalar*scalar gives a scalar, scalar*vector (either order) a vector.
    """
    if isinstance(a, VectorField) and isinstance(b, VectorField):
        raise TypeError("use explicit components for vector-vector products")
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return _wrap(a.grid, a.grid.product(a.coeffs, b.coeffs))
