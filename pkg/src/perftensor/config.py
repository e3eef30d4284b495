"""Fit configuration, config-file loading and environment defaults."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace
from dataclasses import fields as dataclass_fields
from pathlib import Path
from typing import Any

from .constants import (
    BARRIER_ETA_FACTOR,
    BARRIER_ETA_INIT,
    BARRIER_ETA_MIN,
    BARRIER_NEWTON_ITERS,
    DEFAULT_MAX_SWEEPS,
    DEFAULT_REGULARIZATION,
    DEFAULT_TOLERANCE,
)


logger = logging.getLogger(__name__)

__all__ = [
    "BarrierSchedule",
    "ConfigError",
    "FitConfig",
    "get_default_workers",
    "get_log_level",
    "load_fit_config",
]

WORKERS_ENV = "PERFTENSOR_WORKERS"
LOG_LEVEL_ENV = "PERFTENSOR_LOG_LEVEL"

_LOG_LEVELS = frozenset({"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"})


class ConfigError(ValueError):
    """Raised when a fit configuration or environment setting is invalid."""


@dataclass(frozen=True)
class BarrierSchedule:
    """Interior-point schedule for the log-ratio regime.

    The barrier weight starts at ``eta_init`` and is divided by
    ``eta_factor`` after every stage; the first weight at or below
    ``eta_min`` is the last stage.
    """

    eta_init: float = BARRIER_ETA_INIT
    eta_factor: float = BARRIER_ETA_FACTOR
    eta_min: float = BARRIER_ETA_MIN
    newton_iters: int = BARRIER_NEWTON_ITERS

    def __post_init__(self) -> None:
        """Validate the schedule."""
        if not self.eta_min > 0:
            raise ConfigError(f"eta_min must be positive, got {self.eta_min}")
        if not self.eta_init > self.eta_min:
            raise ConfigError(
                f"eta_init ({self.eta_init}) must be greater than eta_min ({self.eta_min})"
            )
        if not self.eta_factor > 1:
            raise ConfigError(f"eta_factor must be greater than 1, got {self.eta_factor}")
        if self.newton_iters < 1:
            raise ConfigError(f"newton_iters must be at least 1, got {self.newton_iters}")

    def etas(self) -> list[float]:
        """Return the barrier weights of every stage, largest first."""
        stages = [self.eta_init]
        while stages[-1] > self.eta_min:
            stages.append(stages[-1] / self.eta_factor)
        return stages


@dataclass(frozen=True)
class FitConfig:
    """Hyper-parameters of a tensor-completion fit."""

    rank: int
    reg: float = DEFAULT_REGULARIZATION
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    tol: float = DEFAULT_TOLERANCE
    seed: int = 0
    barrier: BarrierSchedule = field(default_factory=BarrierSchedule)
    workers: int = 1  # 1 = deterministic sequential sweeps
    progress: bool = False

    def __post_init__(self) -> None:
        """Validate the configuration."""
        if self.rank < 1:
            raise ConfigError(f"rank must be at least 1, got {self.rank}")
        if not self.reg >= 0:
            raise ConfigError(f"reg must be non-negative, got {self.reg}")
        if self.max_sweeps < 1:
            raise ConfigError(f"max_sweeps must be at least 1, got {self.max_sweeps}")
        if not self.tol >= 0:
            raise ConfigError(f"tol must be non-negative, got {self.tol}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")


def load_fit_config(path: str | Path, base: FitConfig | None = None) -> FitConfig:
    """Load fit hyper-parameters from a JSON object.

    Keys are ``FitConfig`` field names; ``barrier`` is a nested object of
    ``BarrierSchedule`` fields. Values missing from the file come from
    ``base``.

    Args:
        path: JSON file path.
        base: Configuration supplying values absent from the file. When
            ``None`` the file must name ``rank``.

    Returns:
        The merged configuration.

    Raises:
        ConfigError: If the file is not a JSON object, names unknown keys or
            holds invalid values.
    """
    with Path(path).expanduser().open(encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Fit config '{path}' is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Fit config '{path}' must be a JSON object.")

    allowed_keys = {f.name for f in dataclass_fields(FitConfig)}
    unknown_keys = set(data) - allowed_keys
    if unknown_keys:
        raise ConfigError(f"Unknown fit config keys: {sorted(unknown_keys)}")

    values: dict[str, Any] = dict(data)
    if "barrier" in values:
        barrier = values["barrier"]
        if not isinstance(barrier, dict):
            raise ConfigError("Fit config 'barrier' must be a JSON object.")
        barrier_keys = {f.name for f in dataclass_fields(BarrierSchedule)}
        unknown_barrier = set(barrier) - barrier_keys
        if unknown_barrier:
            raise ConfigError(f"Unknown barrier keys: {sorted(unknown_barrier)}")
        start = base.barrier if base is not None else BarrierSchedule()
        values["barrier"] = replace(start, **barrier)

    try:
        config = replace(base, **values) if base is not None else FitConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"Invalid fit config '{path}': {exc}") from exc
    logger.info("Loaded fit config from %s", path)
    return config


def get_default_workers() -> int:
    """Return the worker count named by ``PERFTENSOR_WORKERS`` (default 1)."""
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got '{raw}'") from None
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be at least 1, got {workers}")
    return workers


def get_log_level(verbose: bool = False) -> int:
    """Return the CLI log level: DEBUG when verbose, else ``PERFTENSOR_LOG_LEVEL`` or INFO."""
    if verbose:
        return logging.DEBUG
    name = os.environ.get(LOG_LEVEL_ENV, "").strip().upper()
    if not name:
        return logging.INFO
    if name not in _LOG_LEVELS:
        raise ConfigError(f"{LOG_LEVEL_ENV} must be one of {sorted(_LOG_LEVELS)}, got '{name}'")
    return int(logging.getLevelName(name))
