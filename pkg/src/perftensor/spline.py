"""Univariate forward-stepwise hinge regression."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, overload

import numpy as np

from .constants import SPLINE_MAX_TERMS, SPLINE_MIN_IMPROVEMENT


if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import ArrayLike, NDArray


__all__ = ["HingeSpline", "HingeTerm", "SplineError", "fit_hinge_spline"]

logger = logging.getLogger(__name__)


class SplineError(ValueError):
    """Raised when a hinge spline cannot be fitted."""


@dataclass(frozen=True)
class HingeTerm:
    """``coefficient * max(0, direction * (x - knot))`` with direction +1 or -1."""

    knot: float
    direction: int
    coefficient: float

    def __post_init__(self) -> None:
        """Validate the direction."""
        if self.direction not in (1, -1):
            raise SplineError(f"hinge direction must be +1 or -1, got {self.direction}")

    def basis(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate the unscaled hinge at ``x``."""
        return np.maximum(0.0, self.direction * (x - self.knot))


@dataclass(frozen=True)
class HingeSpline:
    """Intercept plus a sum of hinge terms."""

    intercept: float
    terms: tuple[HingeTerm, ...] = ()

    @overload
    def __call__(self, x: float) -> float: ...

    @overload
    def __call__(self, x: NDArray[np.float64]) -> NDArray[np.float64]: ...

    def __call__(self, x: float | NDArray[np.float64]) -> float | NDArray[np.float64]:
        """Evaluate the spline."""
        arr = np.asarray(x, dtype=np.float64)
        out = np.full(arr.shape, self.intercept, dtype=np.float64)
        for term in self.terms:
            out = out + term.coefficient * term.basis(arr)
        if np.ndim(x) == 0:
            return float(out)
        return out

    @property
    def knots(self) -> tuple[float, ...]:
        """Distinct knots in order of selection."""
        return tuple(dict.fromkeys(term.knot for term in self.terms))


def _hinge_pair(xs: NDArray[np.float64], knot: float) -> NDArray[np.float64]:
    return np.column_stack((np.maximum(0.0, xs - knot), np.maximum(0.0, knot - xs)))


def _refit(
    basis: NDArray[np.float64], ys: NDArray[np.float64]
) -> tuple[NDArray[np.float64], float]:
    coef, *_ = np.linalg.lstsq(basis, ys, rcond=None)
    resid = ys - basis @ coef
    return coef, float(resid @ resid)


def fit_hinge_spline(
    xs: Sequence[float] | ArrayLike,
    ys: Sequence[float] | ArrayLike,
    max_terms: int = SPLINE_MAX_TERMS,
) -> HingeSpline:
    """Fit ``ys`` as a function of ``xs`` by forward stepwise hinge selection.

    Starting from the mean, each step adds the mirrored hinge pair
    ``max(0, x - c), max(0, c - x)`` whose knot ``c`` (an interior training
    abscissa) most reduces the residual sum of squares after an exact least
    squares refit of all coefficients. Ties go to the smallest knot.
    Selection stops when the improvement drops below 1e-12 or another pair
    would push the basis (intercept included) past ``max_terms``.

    Args:
        xs: Strictly increasing abscissae.
        ys: Ordinates, same length as ``xs``.
        max_terms: Maximum number of basis functions including the intercept.

    Returns:
        The fitted spline.

    Raises:
        SplineError: If fewer than two points are given, lengths differ or
            ``xs`` is not strictly increasing.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise SplineError(f"xs and ys must be 1-D of equal length, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise SplineError(f"need at least 2 points to fit a spline, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise SplineError("spline data must be finite")
    if np.any(np.diff(x) <= 0):
        raise SplineError("xs must be strictly increasing")
    if max_terms < 1:
        raise SplineError(f"max_terms must be at least 1, got {max_terms}")

    candidates = list(x[1:-1]) if len(x) >= 3 else [float(x[0])]
    basis = np.ones((len(x), 1), dtype=np.float64)
    coef, rss = _refit(basis, y)
    chosen: list[float] = []

    while basis.shape[1] + 2 <= max_terms:
        best: tuple[float, float, NDArray[np.float64], NDArray[np.float64]] | None = None
        tie = 1e-12 * max(1.0, rss)
        for knot in candidates:
            if knot in chosen:
                continue
            trial = np.hstack((basis, _hinge_pair(x, knot)))
            trial_coef, trial_rss = _refit(trial, y)
            if best is None or trial_rss < best[1] - tie:
                best = (float(knot), trial_rss, trial, trial_coef)
        if best is None or rss - best[1] < SPLINE_MIN_IMPROVEMENT:
            break
        knot, rss, basis, coef = best
        chosen.append(knot)

    terms: list[HingeTerm] = []
    for pos, knot in enumerate(chosen):
        up, down = coef[1 + 2 * pos], coef[2 + 2 * pos]
        terms.append(HingeTerm(knot, 1, float(up)))
        terms.append(HingeTerm(knot, -1, float(down)))
    spline = HingeSpline(float(coef[0]), tuple(terms))
    logger.debug("Fitted hinge spline with %d knots (rss %.3e)", len(chosen), rss)
    return spline
