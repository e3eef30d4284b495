"""Prediction of execution times from a completed CP model.

In-domain configurations are predicted by multilinear interpolation of
reconstructed tensor elements between neighbouring cell midpoints, with
weights computed in the transformed coordinate of each mode (log for
log-spaced modes). Log least-squares models interpolate exponentiated
elements; log-ratio models interpolate elements directly.

Configurations outside the modeling domain along a numerical mode are
handled by replacing that mode's factor row with a continuation of the
dominant rank-1 structure of its (strictly positive) factor matrix: the
left singular vector is modeled as a hinge spline of the transformed
midpoints and evaluated at the query coordinate.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .complete import CPModel, LossRegime
from .constants import (
    POWER_ITERATION_MAX,
    POWER_ITERATION_TOL,
    PREDICTION_FLOOR,
    SPLINE_MAX_TERMS,
)
from .space import (
    Grid,
    OutOfDomainError,
    ParameterKind,
    SpaceError,
    coordinate_value,
    interpolation_anchor,
    mode_anchor,
)
from .spline import HingeSpline, SplineError, fit_hinge_spline


if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping, Sequence

    from numpy.typing import NDArray

    from .space import Coordinate


__all__ = [
    "ExtrapolationError",
    "ExtrapolationModel",
    "PerformanceModel",
    "Prediction",
    "build_extrapolation",
    "dominant_singular_triplet",
    "infer",
    "predict",
    "predict_batch",
    "predict_detail",
    "predict_extrapolated",
    "reconstruct_element",
    "with_extrapolation",
]

logger = logging.getLogger(__name__)


class ExtrapolationError(ValueError):
    """Raised when extrapolation is impossible or not prepared."""


@dataclass(frozen=True, eq=False)
class ExtrapolationModel:
    """Rank-1 summary ``U ~ sigma_hat * u_hat v_hat^T`` of one factor matrix.

    ``spline`` maps the transformed midpoint coordinate of a cell to
    ``log u_hat`` of that cell.
    """

    mode: int
    u_hat: NDArray[np.float64]
    sigma_hat: float
    v_hat: NDArray[np.float64]
    spline: HingeSpline

    def __post_init__(self) -> None:
        """Check positivity of the triplet."""
        if not (np.all(self.u_hat > 0) and np.all(self.v_hat > 0) and self.sigma_hat > 0):
            raise ExtrapolationError(f"rank-1 triplet of mode {self.mode} must be positive")
        self.u_hat.setflags(write=False)
        self.v_hat.setflags(write=False)

    def row(self, h_x: float) -> NDArray[np.float64]:
        """Continued factor row ``exp(spline(h_x)) * sigma_hat * v_hat``."""
        return np.asarray(math.exp(self.spline(h_x)) * self.sigma_hat * self.v_hat)

    @property
    def size(self) -> int:
        """Number of stored reals."""
        return len(self.u_hat) + 1 + len(self.v_hat) + 1 + 2 * len(self.spline.terms)


@dataclass(frozen=True, eq=False)
class PerformanceModel:
    """A grid, the CP model over its cells and optional extrapolation models."""

    grid: Grid
    cp: CPModel
    extrapolation: Mapping[int, ExtrapolationModel] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Check that the pieces fit together."""
        if self.cp.dims != self.grid.dims:
            raise ValueError(f"model dims {self.cp.dims} do not match grid {self.grid.dims}")
        if self.extrapolation and self.cp.regime is not LossRegime.LOG_RATIO:
            raise ExtrapolationError("extrapolation requires logq2")
        for mode, extrap in self.extrapolation.items():
            if mode != extrap.mode or not self.grid.specs[mode].is_numerical:
                raise ExtrapolationError(f"invalid extrapolation model for mode {mode}")
        object.__setattr__(self, "extrapolation", dict(sorted(self.extrapolation.items())))

    @property
    def size(self) -> int:
        """Number of stored model reals (factor entries plus extrapolation parameters)."""
        return self.cp.size + sum(e.size for e in self.extrapolation.values())


@dataclass(frozen=True)
class Prediction:
    """A prediction with diagnostics."""

    value: float
    clamped: bool = False
    extrapolated_modes: tuple[int, ...] = ()


def reconstruct_element(model: PerformanceModel | CPModel, index: Sequence[int]) -> float:
    """Return the CP element ``sum_r prod_j U_j[i_j, r]`` at ``index``."""
    cp = model.cp if isinstance(model, PerformanceModel) else model
    if len(index) != cp.ndim or any(not 0 <= i < n for i, n in zip(index, cp.dims, strict=True)):
        raise IndexError(f"index {tuple(index)} outside dims {cp.dims}")
    return cp.element(index)


def dominant_singular_triplet(
    u: NDArray[np.float64],
    tol: float = POWER_ITERATION_TOL,
    max_iter: int = POWER_ITERATION_MAX,
) -> tuple[NDArray[np.float64], float, NDArray[np.float64]]:
    """Dominant singular triplet of a strictly positive matrix by power iteration.

    Iterates on the Gram matrix ``U^T U`` from the all-ones vector, which
    keeps every iterate positive.

    Returns:
        ``(u_hat, sigma_hat, v_hat)`` with unit-norm positive vectors.

    Raises:
        ExtrapolationError: If ``u`` has a non-positive entry or the iteration
            does not converge within ``max_iter`` steps.
    """
    mat = np.asarray(u, dtype=np.float64)
    if mat.ndim != 2 or mat.size == 0:
        raise ExtrapolationError(f"expected a non-empty matrix, got shape {mat.shape}")
    if np.any(~(mat > 0)):
        raise ExtrapolationError("rank-1 extrapolation needs a strictly positive factor matrix")

    gram = mat.T @ mat
    v = np.ones(mat.shape[1]) / math.sqrt(mat.shape[1])
    for iteration in range(1, max_iter + 1):
        w = gram @ v
        w /= np.linalg.norm(w)
        delta = float(np.linalg.norm(w - v))
        v = w
        if delta <= tol:
            logger.debug("Power iteration converged after %d iterations", iteration)
            break
    else:
        raise ExtrapolationError(f"power iteration did not converge in {max_iter} iterations")

    left = mat @ v
    sigma = float(np.linalg.norm(left))
    return left / sigma, sigma, v


def build_extrapolation(
    model: PerformanceModel, mode: int, max_terms: int = SPLINE_MAX_TERMS
) -> ExtrapolationModel:
    """Build the rank-1 plus hinge-spline extrapolation model of one mode.

    Raises:
        ExtrapolationError: If the model is not a log-ratio model, the mode is
            categorical, or the rank-1 summary or spline cannot be computed.
    """
    if model.cp.regime is not LossRegime.LOG_RATIO:
        raise ExtrapolationError("extrapolation requires logq2")
    if not 0 <= mode < model.grid.ndim:
        raise ExtrapolationError(f"mode {mode} does not exist")
    spec = model.grid.specs[mode]
    if not spec.is_numerical:
        raise ExtrapolationError(f"cannot extrapolate categorical parameter '{spec.name}'")

    u_hat, sigma_hat, v_hat = dominant_singular_triplet(model.cp.factors[mode])
    if np.any(u_hat <= 0) or np.any(v_hat <= 0):
        raise ExtrapolationError(f"rank-1 vectors of '{spec.name}' are not strictly positive")
    try:
        spline = fit_hinge_spline(
            model.grid.transformed_midpoints(mode), np.log(u_hat), max_terms=max_terms
        )
    except SplineError as exc:
        raise ExtrapolationError(f"cannot fit spline for '{spec.name}': {exc}") from exc
    logger.info(
        "Built extrapolation model for '%s' (sigma %.6g, %d knots)",
        spec.name,
        sigma_hat,
        len(spline.knots),
    )
    return ExtrapolationModel(mode, u_hat, sigma_hat, v_hat, spline)


def with_extrapolation(
    model: PerformanceModel, modes: Iterable[int], max_terms: int = SPLINE_MAX_TERMS
) -> PerformanceModel:
    """Return ``model`` with extrapolation models built for ``modes``."""
    extrap = dict(model.extrapolation)
    for mode in modes:
        extrap[mode] = build_extrapolation(model, mode, max_terms)
    return replace(model, extrapolation=extrap)


def _outside(grid: Grid, mode: int, value: Coordinate) -> bool:
    edges = grid.edges[mode]
    if edges is None:
        return False
    coord = coordinate_value(value, grid.specs[mode])
    return not edges[0] <= coord <= edges[-1]


def _combine(
    model: PerformanceModel,
    options: Sequence[Sequence[tuple[NDArray[np.float64], float]]],
) -> float:
    """Weighted sum of elements over every combination of per-mode row options."""
    total = 0.0
    exponentiate = model.cp.regime is LossRegime.LOG_LS
    for combo in itertools.product(*options):
        weight = 1.0
        prod = np.ones(model.cp.rank, dtype=np.float64)
        for row, w in combo:
            weight *= w
            prod = prod * row
        element = float(prod.sum())
        total += weight * (math.exp(element) if exponentiate else element)
    return total


def predict_detail(
    model: PerformanceModel, x: Sequence[Coordinate], extrapolate: bool = True
) -> Prediction:
    """Predict the execution time of ``x`` with diagnostics.

    Args:
        model: Fitted performance model.
        x: One coordinate per mode.
        extrapolate: Whether out-of-domain numerical coordinates may use
            extrapolation models; when ``False`` they raise.

    Returns:
        The prediction, floored at 1e-16 seconds (``clamped`` is set when the
        floor applied), and the modes that were extrapolated.

    Raises:
        OutOfDomainError: If a coordinate is out of domain and ``extrapolate``
            is ``False``.
        ExtrapolationError: If an out-of-domain mode has no extrapolation model.
        UnknownCategoryError: If a categorical label is unknown.
        SpaceError: If a numerical coordinate is not a finite number.
    """
    grid = model.grid
    if len(x) != grid.ndim:
        raise SpaceError(f"Configuration has {len(x)} coordinates, grid has {grid.ndim} modes.")
    outside = tuple(j for j, value in enumerate(x) if _outside(grid, j, value))
    if outside and not extrapolate:
        interpolation_anchor(grid, x)

    options: list[list[tuple[NDArray[np.float64], float]]] = []
    for mode, value in enumerate(x):
        factor = model.cp.factors[mode]
        if mode in outside:
            extrap = model.extrapolation.get(mode)
            if extrap is None:
                name = grid.specs[mode].name
                raise ExtrapolationError(
                    f"'{name}' = {value!r} is outside the modeling domain and no extrapolation "
                    f"model exists; build one for '{name}' (train with --extrapolate {name})"
                )
            coord = float(value)
            if grid.specs[mode].kind is ParameterKind.LOG and coord <= 0:
                raise SpaceError(f"Parameter '{grid.specs[mode].name}' needs a positive value")
            options.append([(extrap.row(float(grid.transform(mode, coord))), 1.0)])
        else:
            anchor = mode_anchor(grid, mode, value)
            options.append([(factor[i], w) for i, w in anchor.corners()])

    value = _combine(model, options)
    clamped = not value >= PREDICTION_FLOOR
    if clamped:
        logger.debug("Prediction %r for %s clamped to %g", value, tuple(x), PREDICTION_FLOOR)
        value = PREDICTION_FLOOR
    return Prediction(value, clamped, outside)


def predict(model: PerformanceModel, x: Sequence[Coordinate]) -> float:
    """Predict an in-domain configuration by interpolation.

    Raises:
        OutOfDomainError: If a numerical coordinate is outside the domain.
    """
    interpolation_anchor(model.grid, x)
    return predict_detail(model, x).value


def predict_extrapolated(model: PerformanceModel, x: Sequence[Coordinate]) -> float:
    """Predict a configuration, extrapolating along out-of-domain modes.

    Out-of-domain modes use their continued factor rows and contribute no
    interpolation weight; in-domain modes interpolate as in :func:`predict`.
    Fully in-domain configurations give exactly :func:`predict`'s result.

    Raises:
        ExtrapolationError: If an out-of-domain mode has no extrapolation model.
    """
    return predict_detail(model, x).value


def infer(model: PerformanceModel, x: Sequence[Coordinate]) -> float:
    """Predict ``x``, interpolating in-domain and extrapolating otherwise."""
    grid = model.grid
    if any(_outside(grid, j, value) for j, value in enumerate(x)):
        return predict_extrapolated(model, x)
    return predict(model, x)


def predict_batch(
    model: PerformanceModel, configurations: Iterable[Sequence[Coordinate]]
) -> tuple[NDArray[np.float64], int]:
    """Predict many configurations; unpredictable ones become NaN.

    Returns:
        Tuple of (predictions, number of unpredictable configurations).
    """
    values: list[float] = []
    failed = 0
    clamped = 0
    for x in configurations:
        try:
            pred = predict_detail(model, x)
        except (OutOfDomainError, ExtrapolationError) as exc:
            logger.debug("Cannot predict %s: %s", tuple(x), exc)
            values.append(math.nan)
            failed += 1
            continue
        clamped += pred.clamped
        values.append(pred.value)
    if clamped:
        logger.warning("%d predictions were clamped to %g seconds", clamped, PREDICTION_FLOOR)
    if failed:
        logger.warning("%d configurations are outside the domain without extrapolation", failed)
    return np.asarray(values, dtype=np.float64), failed
