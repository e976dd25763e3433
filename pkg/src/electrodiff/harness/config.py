"""Experiment configuration: flat TOML key/value files with array literals.

Example::

    dim = 2
    n = 64
    mu = 1.0
    lambdas = [0.2, 0.1, 0.05, 0.025]
    T = 0.5
    snapshots = 20
    doping_modes = [[1, 0, 0.1, "cos"], [0, 1, 0.1, "cos"]]
    Z0_offset = 2.0
    v0_modes = [[[0, 1, 0.05, "sin"]], [[1, 0, 0.05, "sin"]]]

Mode entries are ``[k_1, ..., k_dim, amplitude, "cos" | "sin"]``;
``v0_modes`` holds one such list per velocity component.  The output
directory may be overridden by ``ELECTRODIFF_OUT``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from electrodiff.errors import ConfigError

OUT_ENV = "ELECTRODIFF_OUT"
MAX_LAMBDA0 = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int = 2
    n: int = 64
    mu: float = 1.0
    lambdas: tuple = (0.2, 0.1, 0.05, 0.025)
    kappa0: float = 0.5
    T: float = 0.5
    snapshots: int = 20
    dt_policy: str = "auto"
    dt: float = 1e-3
    cfl_advect: float = 0.4
    cfl_relax: float = 0.5
    doping_offset: float = 0.0
    doping_modes: tuple = ()
    Z0_offset: float = 2.0
    Z0_modes: tuple = ()
    v0_modes: tuple = ((), ())
    output_dir: str = "out"
    seed: int = 0
    workers: int = 1
    mms_lambda: float = 0.5
    mms_T: float = 0.2
    mms_dts: tuple = (2e-3, 1e-3, 5e-4)
    mms_ns: tuple = (8, 16, 32, 64)
    mms_n_dt: float = 1e-3
    mms_n_T: float = 0.05

    @property
    def snapshot_times(self):
        return [self.T * j / self.snapshots for j in range(self.snapshots + 1)]

    def validate(self) -> "ExperimentConfig":
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ConfigError(f"n must be a power of two >= 8, got {self.n}")
        if not self.mu > 0:
            raise ConfigError("mu must be positive")
        lams = list(self.lambdas)
        if not lams:
            raise ConfigError("lambdas is empty")
        if any(not (0 < x <= MAX_LAMBDA0) for x in lams):
            raise ConfigError(f"every lambda must lie in (0, {MAX_LAMBDA0}]")
        if any(a <= b for a, b in zip(lams, lams[1:])):
            raise ConfigError("lambdas must be strictly decreasing")
        if self.snapshots < 5:
            raise ConfigError("snapshots must be >= 5")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if self.dt_policy not in ("auto", "fixed"):
            raise ConfigError(f"dt_policy must be 'auto' or 'fixed', got {self.dt_policy!r}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if len(self.v0_modes) != self.dim:
            raise ConfigError(f"v0_modes needs {self.dim} component lists")
        for name in ("doping_modes", "Z0_modes"):
            _check_modes(name, getattr(self, name), self.dim)
        for comp in self.v0_modes:
            _check_modes("v0_modes", comp, self.dim)
        return self


def _check_modes(name, modes, dim):
    for m in modes:
        if len(m) != dim + 2 or m[-1] not in ("cos", "sin"):
            raise ConfigError(f"{name}: bad mode entry {m!r}")


def parse_modes(modes, dim):
    """``[k..., amp, kind]`` entries -> ``(k, amp, kind)`` tuples."""
    return [(tuple(int(x) for x in m[:dim]), float(m[dim]), m[dim + 1]) for m in modes]


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    return v


def load_config(path) -> ExperimentConfig:
    """Read and validate a configuration file.

    Raises
    ------
    ConfigError
        On unreadable files, syntax errors, unknown keys or invalid values.
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, source=str(path))


def config_from_dict(raw: dict, source: str = "<dict>") -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")
    kw = {k: _freeze(v) for k, v in raw.items()}
    try:
        cfg = ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if OUT_ENV in os.environ:
        cfg = replace(cfg, output_dir=os.environ[OUT_ENV])
    return cfg.validate()
