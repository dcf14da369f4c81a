"""Experiment configuration: defaults, a flat key = value file, then command-line overrides."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import logging
import types
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

from zkcollide import BIG_M, ETA, R_MAX, RESIDUAL_TOL, RHO, Z_STAR, Experiment, ZKLabError, __version__
from zkcollide.evolution import Scheme
from zkcollide.parallel import WorkerKind
from zkcollide.spectral import Grid2D

if TYPE_CHECKING:
    from collections.abc import Mapping

logger = logging.getLogger(__name__)

MU0_RANGE = (0.08, 0.25)


class ConfigError(ZKLabError):
    """Unknown key, unparsable value or parameter out of range."""

    def __init__(self, message: str = "Invalid experiment configuration") -> None:
        """Init."""
        super().__init__(message)


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of one experiment; the resolved values are written into each output."""

    experiment: Experiment = Experiment.VERIFY_ALL
    mu0: float = 0.15
    z0: float | None = None
    w0: float = 0.0
    rho: float = RHO
    eta: float = ETA
    big_m: float = BIG_M
    z_star: float = Z_STAR
    Lx: float = 256.0  # noqa: N815
    Ly: float = 64.0  # noqa: N815
    Nx: int = 2048  # noqa: N815
    Ny: int = 512  # noqa: N815
    dt: float = 0.01
    snapshot_every: int = 100
    scheme: Scheme = Scheme.IFRK4
    dealias: bool = True
    cfl_guard: float = 10.0
    window: float | None = None
    residual_tol: float = RESIDUAL_TOL
    r_max: float = R_MAX
    eigen_tol: float = 1e-8
    fit_tol: float = 1e-11
    seed: int = 0
    n_seeds: int = 3
    perturb_time: float | None = None
    perturb_scale: float = 1.0
    output_dir: Path = Path("out")
    cache_dir: Path = Path(".zkcache")
    input: Path | None = None
    workers: WorkerKind = WorkerKind.INLINE
    max_workers: int = 4
    full_suite: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0 / 32.0:
            msg = f"rho must lie in (0, 1/32), got {self.rho}"
            raise ConfigError(msg)
        if self.mu0 <= 0.0:
            msg = f"mu0 must be positive, got {self.mu0}"
            raise ConfigError(msg)
        if self.z0 is not None and self.z0 <= 0.0:
            msg = f"z0 must be positive, got {self.z0}"
            raise ConfigError(msg)
        if self.big_m <= 10.0:  # noqa: PLR2004
            msg = f"big_m must exceed 10, got {self.big_m}"
            raise ConfigError(msg)
        if self.n_seeds < 1 or self.max_workers < 1 or self.snapshot_every < 1:
            msg = "n_seeds, max_workers and snapshot_every must be at least 1"
            raise ConfigError(msg)
        if self.dt <= 0.0:
            msg = f"dt must be positive, got {self.dt}"
            raise ConfigError(msg)
        try:
            self.grid  # noqa: B018
        except ValueError as e:
            raise ConfigError(str(e)) from e

    @property
    def grid(self) -> Grid2D:
        return Grid2D(Lx=self.Lx, Ly=self.Ly, Nx=self.Nx, Ny=self.Ny)

    def to_text(self) -> str:
        """Sorted key = value lines, the canonical form that is hashed."""
        lines = [f"{f.name} = {_format(getattr(self, f.name))}" for f in dataclasses.fields(self)]
        return "\n".join(sorted(lines)) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def provenance(self) -> list[str]:
        """Header lines carried by every emitted data file."""
        return [f"zkcollide {__version__}", f"config sha256 {self.config_hash}", *self.to_text().splitlines()]


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return str(value.value)
    return str(value)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    msg = f"not a boolean: {text!r}"
    raise ValueError(msg)


def _coerce(name: str, text: str, hint: Any) -> Any:
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if text.strip().lower() in {"none", ""}:
            return None
        return _coerce(name, text, args[0])
    if hint is bool:
        return _parse_bool(text)
    if isinstance(hint, type) and issubclass(hint, enum.Enum):
        return hint(text.strip())
    if hint in (int, float, str, Path):
        return hint(text.strip())
    msg = f"no parser for {name}: {hint}"
    raise TypeError(msg)


def read_config_file(path: Path | str) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped.

    Raises:
        ConfigError: a line is not of the form key = value.
    """
    entries: dict[str, str] = {}
    for number, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            msg = f"{path}:{number}: expected key = value, got {raw!r}"
            raise ConfigError(msg)
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def resolve_config(
    file_entries: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> ExperimentConfig:
    """Defaults, then the file, then overrides; overrides may already be typed.

    Raises:
        ConfigError: unknown key or a value that does not parse or validate.
    """
    hints = typing.get_type_hints(ExperimentConfig)
    values: dict[str, Any] = {}
    for source in (file_entries or {}, overrides or {}):
        for key, value in source.items():
            if key not in hints:
                msg = f"unknown configuration key {key!r}"
                raise ConfigError(msg)
            if isinstance(value, str):
                try:
                    value = _coerce(key, value, hints[key])  # noqa: PLW2901
                except (TypeError, ValueError) as e:
                    msg = f"bad value for {key}: {e}"
                    raise ConfigError(msg) from e
            values[key] = value
    cfg = ExperimentConfig(**values)
    logger.debug(f"resolved configuration {cfg.config_hash[:12]}")
    return cfg


def load_config(path: Path | str | None, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
    entries = read_config_file(path) if path is not None else {}
    return resolve_config(entries, overrides)


def check_collision_range(mu0: float) -> None:
    """mu0 inside the desk-scale range of the collision experiment."""
    lo, hi = MU0_RANGE
    if not lo <= mu0 <= hi:
        msg = f"mu0 = {mu0} outside the desk-scale range [{lo}, {hi}]"
        raise ConfigError(msg)
