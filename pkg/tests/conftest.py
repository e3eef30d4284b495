"""Shared fixtures for the perftensor tests."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from perftensor.complete import CPModel, LossRegime
from perftensor.space import Grid, ParameterSpec, build_grid
from perftensor.tensor import SparseTensor


if TYPE_CHECKING:
    from collections.abc import Callable, Sequence


@pytest.fixture
def log_grid_1d() -> Grid:
    """One log mode over [1, 100] with midpoints 4 and 32."""
    return build_grid([ParameterSpec.log("m", 1, 100, 2)])


@pytest.fixture
def mixed_grid() -> Grid:
    """A log mode, a linear mode and a categorical mode."""
    return build_grid(
        [
            ParameterSpec.log("m", 10, 10000, 3),
            ParameterSpec.linear("p", 0, 10, 5),
            ParameterSpec.categorical("algo", ["a", "b"]),
        ]
    )


@pytest.fixture
def space_file(tmp_path):
    """Write a parameter-space file and return its path."""

    def write(lines: Sequence[str], name: str = "app.space"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return write


@pytest.fixture
def random_tensor() -> Callable[..., SparseTensor]:
    """Random positive partially observed tensor of a given density."""

    def make(dims: Sequence[int], density: float, seed: int) -> SparseTensor:
        rng = np.random.default_rng(seed)
        values = np.exp(rng.uniform(-1.0, 1.0, size=tuple(dims)))
        mask = rng.random(tuple(dims)) < density
        mask.flat[0] = True
        return SparseTensor.from_dense(values, mask)

    return make


@pytest.fixture
def random_cp() -> Callable[..., CPModel]:
    """Random CP model; positive factors for the log-ratio regime."""

    def make(dims: Sequence[int], rank: int, regime: LossRegime, seed: int) -> CPModel:
        rng = np.random.default_rng(seed)
        if regime is LossRegime.LOG_RATIO:
            factors = tuple(rng.uniform(0.5, 1.5, size=(n, rank)) for n in dims)
        else:
            factors = tuple(rng.uniform(-0.5, 0.5, size=(n, rank)) for n in dims)
        return CPModel(tuple(dims), rank, factors, regime)

    return make
