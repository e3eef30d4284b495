"""Aggregate prediction-error metrics.

MLogQ (mean absolute log-ratio) is the headline metric: it penalizes
over- and under-prediction by the same factor equally. MAPE, MAE and MSE
are kept for comparison reporting. All logarithms are natural.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .constants import PREDICTION_FLOOR


if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from numpy.typing import ArrayLike, NDArray


__all__ = [
    "DEFAULT_METRICS",
    "METRIC_NAMES",
    "MetricError",
    "MetricReport",
    "evaluate_metrics",
    "log_ratios",
    "low_rank_mlogq",
    "merge_reports",
    "mlogq",
    "parse_metric_list",
]

logger = logging.getLogger(__name__)

METRIC_NAMES = ("mape", "mae", "mse", "smape", "lgmape", "mlogq", "mlogq2")
DEFAULT_METRICS = ("mlogq", "mlogq2", "mape", "smape")

LGMAPE_EXACT_MATCH = "lgmape-exact-match"


class MetricError(ValueError):
    """Raised on invalid metric inputs or names."""


@dataclass(frozen=True)
class MetricReport:
    """Metric values over ``count`` prediction/truth pairs."""

    values: dict[str, float]
    count: int
    flags: frozenset[str] = field(default_factory=frozenset)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def __contains__(self, name: object) -> bool:
        return name in self.values

    def lines(self) -> list[str]:
        """One ``name value`` line per metric, in report order."""
        return [f"{name} {value:.10g}" for name, value in self.values.items()]


def parse_metric_list(text: str) -> tuple[str, ...]:
    """Parse a comma-separated list of metric tokens."""
    names = tuple(token.strip().lower() for token in text.split(",") if token.strip())
    if not names:
        raise MetricError("no metrics requested")
    unknown = [name for name in names if name not in METRIC_NAMES]
    if unknown:
        raise MetricError(
            f"unknown metrics: {', '.join(unknown)} (expected some of {', '.join(METRIC_NAMES)})"
        )
    return names


def _validate(preds: ArrayLike, truths: ArrayLike) -> tuple[NDArray[np.float64], ...]:
    m = np.asarray(preds, dtype=np.float64).ravel()
    y = np.asarray(truths, dtype=np.float64).ravel()
    if m.shape != y.shape:
        raise MetricError(f"{len(m)} predictions but {len(y)} truths")
    if len(m) == 0:
        raise MetricError("metrics need at least one prediction")
    for label, arr in (("prediction", m), ("truth", y)):
        bad = np.flatnonzero(~(arr > 0) | ~np.isfinite(arr))
        if bad.size:
            raise MetricError(
                f"{label} {bad[0]} is {arr[bad[0]]!r}; metrics need finite positive values"
            )
    return m, y


def log_ratios(preds: ArrayLike, truths: ArrayLike) -> NDArray[np.float64]:
    """Per-point ``log(m_k / y_k)``."""
    m, y = _validate(preds, truths)
    return np.log(m / y)


def mlogq(preds: ArrayLike, truths: ArrayLike) -> float:
    """Mean absolute log-ratio."""
    return float(np.mean(np.abs(log_ratios(preds, truths))))


def evaluate_metrics(
    preds: ArrayLike,
    truths: ArrayLike,
    metrics: Sequence[str] | None = None,
) -> MetricReport:
    """Compute error metrics of predictions against measured times.

    Args:
        preds: Positive predicted times m_k.
        truths: Positive measured times y_k.
        metrics: Metric tokens to compute, in output order; all by default.

    Returns:
        The report. LGMAPE is ``-inf`` and flagged when any prediction
        matches its truth exactly.

    Raises:
        MetricError: On length mismatch, empty input, a non-positive value or
            an unknown metric name.
    """
    names = tuple(metrics) if metrics is not None else METRIC_NAMES
    unknown = [name for name in names if name not in METRIC_NAMES]
    if unknown:
        raise MetricError(f"unknown metrics: {', '.join(unknown)}")
    m, y = _validate(preds, truths)
    diff = np.abs(m - y)
    count = len(m)
    flags: set[str] = set()

    values: dict[str, float] = {}
    for name in names:
        if name == "mape":
            values[name] = float(np.mean(diff / y))
        elif name == "mae":
            values[name] = float(np.mean(diff))
        elif name == "mse":
            values[name] = float(np.mean(diff * diff))
        elif name == "smape":
            values[name] = float(2.0 * np.sum(diff / (m + y)) / count)
        elif name == "lgmape":
            if np.any(diff == 0):
                flags.add(LGMAPE_EXACT_MATCH)
                logger.warning(
                    "LGMAPE is -inf: %d predictions match their truth exactly",
                    int(np.count_nonzero(diff == 0)),
                )
                values[name] = -math.inf
            else:
                values[name] = float(np.mean(np.log(diff / y)))
        elif name == "mlogq":
            values[name] = float(np.mean(np.abs(np.log(m / y))))
        else:
            q = np.log(m / y)
            values[name] = float(np.mean(q * q))
    return MetricReport(values, count, frozenset(flags))


def merge_reports(reports: Iterable[MetricReport]) -> MetricReport:
    """Combine per-batch reports into the report of their concatenation.

    Every metric is a mean over points, so the merged value is the
    count-weighted mean of the batch values.
    """
    batch = list(reports)
    if not batch:
        raise MetricError("no reports to merge")
    names = list(batch[0].values)
    if any(list(r.values) != names for r in batch):
        raise MetricError("reports cover different metrics")
    total = sum(r.count for r in batch)
    values = {
        name: float(sum(r.count * r.values[name] for r in batch) / total) for name in names
    }
    flags = frozenset().union(*(r.flags for r in batch))
    return MetricReport(values, total, flags)


def low_rank_mlogq(
    matrix: ArrayLike, ranks: Iterable[int], log_transform: bool
) -> dict[int, float]:
    """MLogQ of truncated-SVD reconstructions of a positive matrix.

    With ``log_transform`` the SVD is taken of ``log(matrix)`` and the
    reconstruction exponentiated; otherwise the raw matrix is truncated and
    non-positive reconstructed entries are clamped to 1e-16.

    Returns:
        Mapping from rank to MLogQ over all matrix entries.
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or np.any(~(a > 0)):
        raise MetricError("low-rank profile needs a 2-D strictly positive matrix")
    target = np.log(a) if log_transform else a
    u, s, vt = np.linalg.svd(target, full_matrices=False)
    profile: dict[int, float] = {}
    for rank in ranks:
        if not 1 <= rank <= len(s):
            raise MetricError(f"rank {rank} outside 1..{len(s)}")
        approx = (u[:, :rank] * s[:rank]) @ vt[:rank]
        recon = np.exp(approx) if log_transform else np.maximum(approx, PREDICTION_FLOOR)
        profile[rank] = float(np.mean(np.abs(np.log(recon / a))))
    return profile
