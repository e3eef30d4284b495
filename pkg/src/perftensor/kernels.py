"""Closed-form synthetic kernels and observation generators."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from .space import ParameterKind, ParameterSpec
from .tensor import ObservationSet


if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from .space import Grid


__all__ = [
    "KernelError",
    "KernelKind",
    "SyntheticKernelSpec",
    "evaluate_kernel",
    "get_available_kernels",
    "get_kernel_description",
    "get_kernel_preset",
    "midpoint_observations",
    "sample_configurations",
    "synthesize_observations",
]

logger = logging.getLogger(__name__)


class KernelError(ValueError):
    """Raised when a synthetic kernel is misconfigured."""


class KernelKind(str, Enum):
    """Closed-form execution-time models."""

    GEMM_ANALYTIC = "gemm-analytic"
    SEPARABLE_POWER = "separable-power"
    PIECEWISE_BILINEAR = "piecewise-bilinear"


@dataclass(frozen=True)
class SyntheticKernelSpec:
    """Parameters of a synthetic kernel.

    ``gemm-analytic`` times an (m, n, k) matrix multiply as
    ``delta*m*n*k + beta*(m*n + n*k + m*k + m*n*k/sqrt(cache_size))``.
    ``separable-power`` is ``coefficient * prod x_j**a_j``.
    ``piecewise-bilinear`` is ``coefficient * prod x_j`` where
    ``sum x_j <= split`` and ``coefficient * ratio * prod (x_j + offset)``
    elsewhere.

    Kernels read the numerical coordinates in mode order and ignore
    categorical ones. Noise multiplies each time by ``1 + N(0, noise_sigma)``,
    redrawn while the factor is not positive.
    """

    kernel: KernelKind
    delta: float = 1e-9
    beta: float = 1e-8
    cache_size: float = 4096.0
    exponents: tuple[float, ...] = ()
    coefficient: float = 1.0
    split: float = 100.0
    ratio: float = 0.5
    offset: float = 10.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate kernel parameters."""
        object.__setattr__(self, "kernel", KernelKind(self.kernel))
        object.__setattr__(self, "exponents", tuple(float(a) for a in self.exponents))
        positive = {
            "delta": self.delta,
            "beta": self.beta,
            "cache_size": self.cache_size,
            "coefficient": self.coefficient,
            "ratio": self.ratio,
        }
        for name, value in positive.items():
            if not (value > 0 and math.isfinite(value)):
                raise KernelError(f"kernel parameter {name} must be positive, got {value}")
        if not (self.noise_sigma >= 0 and math.isfinite(self.noise_sigma)):
            raise KernelError(f"noise sigma must be non-negative, got {self.noise_sigma}")
        if self.offset < 0:
            raise KernelError(f"kernel offset must be non-negative, got {self.offset}")


PRESET_KERNELS: dict[str, tuple[SyntheticKernelSpec, str]] = {
    "gemm": (
        SyntheticKernelSpec(KernelKind.GEMM_ANALYTIC),
        "Analytic GEMM cost over (m, n, k): flop term plus cache-aware bandwidth term",
    ),
    "gemm-noisy": (
        SyntheticKernelSpec(KernelKind.GEMM_ANALYTIC, noise_sigma=0.01),
        "Analytic GEMM cost with 1% multiplicative noise",
    ),
    "power": (
        SyntheticKernelSpec(
            KernelKind.SEPARABLE_POWER, exponents=(1.5, 1.0), coefficient=1e-9
        ),
        "Separable power law 1e-9 * m^1.5 * n, exactly rank 1",
    ),
    "bilinear-split": (
        SyntheticKernelSpec(
            KernelKind.PIECEWISE_BILINEAR,
            coefficient=1e-3,
            split=170.0,
            ratio=1e6,
            offset=0.0,
            noise_sigma=0.01,
        ),
        "Two bilinear regimes 1e-3*x*y and 1e3*x*y split along x + y = 170, with 1% noise",
    ),
}


def get_available_kernels() -> list[str]:
    """Return available kernel preset names."""
    return sorted(PRESET_KERNELS.keys())


def get_kernel_description(name: str) -> str:
    """Return the description of a kernel preset."""
    if name not in PRESET_KERNELS:
        raise KeyError(f"Unknown kernel preset '{name}'.")
    return PRESET_KERNELS[name][1]


def get_kernel_preset(name: str) -> SyntheticKernelSpec:
    """Return the kernel specification of a preset."""
    if name not in PRESET_KERNELS:
        raise KeyError(f"Unknown kernel preset '{name}'.")
    return PRESET_KERNELS[name][0]


def evaluate_kernel(spec: SyntheticKernelSpec, coords: NDArray[np.float64]) -> NDArray[np.float64]:
    """Noise-free kernel times for an (n x p) array of numerical coordinates.

    Raises:
        KernelError: If the coordinate count does not suit the kernel or a
            time is not positive.
    """
    x = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    p = x.shape[1]
    if spec.kernel is KernelKind.GEMM_ANALYTIC:
        if p != 3:
            raise KernelError(f"gemm-analytic needs 3 numerical parameters (m, n, k), got {p}")
        m, n, k = x[:, 0], x[:, 1], x[:, 2]
        mnk = m * n * k
        times = spec.delta * mnk + spec.beta * (
            m * n + n * k + m * k + mnk / math.sqrt(spec.cache_size)
        )
    elif spec.kernel is KernelKind.SEPARABLE_POWER:
        exponents = np.asarray(spec.exponents or (1.0,) * p)
        if len(exponents) != p:
            raise KernelError(f"separable-power needs {p} exponents, got {len(exponents)}")
        times = spec.coefficient * np.prod(x**exponents, axis=1)
    else:
        low = np.sum(x, axis=1) <= spec.split
        times = np.where(
            low,
            spec.coefficient * np.prod(x, axis=1),
            spec.coefficient * spec.ratio * np.prod(x + spec.offset, axis=1),
        )
    if np.any(~(times > 0)):
        raise KernelError("kernel produced non-positive times; check parameter ranges")
    return np.asarray(times, dtype=np.float64)


def _apply_noise(
    times: NDArray[np.float64], sigma: float, rng: np.random.Generator
) -> NDArray[np.float64]:
    if sigma == 0:
        return times
    factors = 1.0 + rng.normal(0.0, sigma, size=times.shape)
    bad = factors <= 0
    while np.any(bad):
        factors[bad] = 1.0 + rng.normal(0.0, sigma, size=int(bad.sum()))
        bad = factors <= 0
    return times * factors


def _numeric_block(frame: pd.DataFrame, specs: Sequence[ParameterSpec]) -> NDArray[np.float64]:
    cols = [spec.name for spec in specs if spec.is_numerical]
    return frame[cols].to_numpy(dtype=np.float64)


def sample_configurations(
    specs: Sequence[ParameterSpec], samples: int, rng: np.random.Generator
) -> pd.DataFrame:
    """Draw configurations: log-uniform on log ranges, uniform otherwise."""
    columns: dict[str, NDArray[np.float64] | NDArray[np.str_]] = {}
    for spec in specs:
        if spec.kind is ParameterKind.CATEGORICAL:
            columns[spec.name] = np.asarray(spec.categories)[
                rng.integers(0, len(spec.categories), size=samples)
            ]
            continue
        assert spec.lower is not None
        assert spec.upper is not None
        if spec.kind is ParameterKind.LOG:
            columns[spec.name] = np.exp(
                rng.uniform(math.log(spec.lower), math.log(spec.upper), size=samples)
            )
        else:
            columns[spec.name] = rng.uniform(spec.lower, spec.upper, size=samples)
    return pd.DataFrame(columns, columns=[spec.name for spec in specs])


def synthesize_observations(
    specs: Sequence[ParameterSpec], kernel: SyntheticKernelSpec, samples: int
) -> ObservationSet:
    """Sample configurations and time them with ``kernel``.

    Configurations and noise come from independent streams of
    ``kernel.seed``, so the sampled configurations do not depend on the
    noise level.
    """
    if samples < 0:
        raise KernelError(f"sample count must be non-negative, got {samples}")
    config_seq, noise_seq = np.random.SeedSequence(kernel.seed).spawn(2)
    frame = sample_configurations(specs, samples, np.random.default_rng(config_seq))
    times = (
        evaluate_kernel(kernel, _numeric_block(frame, specs))
        if samples
        else np.empty(0, dtype=np.float64)
    )
    times = _apply_noise(times, kernel.noise_sigma, np.random.default_rng(noise_seq))
    logger.info("Synthesized %d %s observations", samples, kernel.kernel.value)
    return ObservationSet(frame, times)


def midpoint_observations(grid: Grid, kernel: SyntheticKernelSpec) -> ObservationSet:
    """Time ``kernel`` once at every cell midpoint of ``grid`` (C order)."""
    axes: list[list[float | str]] = []
    for spec, mids in zip(grid.specs, grid.midpoints, strict=True):
        axes.append(list(spec.categories) if not spec.is_numerical else [float(m) for m in mids])
    rows = list(itertools.product(*axes))
    frame = pd.DataFrame(rows, columns=list(grid.names))
    for spec in grid.specs:
        if spec.is_numerical:
            frame[spec.name] = frame[spec.name].astype(np.float64)
    times = evaluate_kernel(kernel, _numeric_block(frame, grid.specs))
    noise_seq = np.random.SeedSequence(kernel.seed).spawn(2)[1]
    times = _apply_noise(times, kernel.noise_sigma, np.random.default_rng(noise_seq))
    return ObservationSet(frame, times)
