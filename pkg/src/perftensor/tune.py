"""Hold-out selection of CP rank and regularization."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .complete import LossRegime, complete_tensor
from .infer import PerformanceModel, predict_batch
from .metrics import mlogq
from .tensor import ObservationSet, bin_observations


if TYPE_CHECKING:
    from collections.abc import Sequence

    from .config import FitConfig
    from .space import Grid


__all__ = ["DEFAULT_REGS", "TuneEntry", "TuneResult", "select_model", "split_observations"]

logger = logging.getLogger(__name__)

DEFAULT_REGS = (1e-6, 1e-5, 1e-4, 1e-3)


@dataclass(frozen=True)
class TuneEntry:
    """Validation score of one (rank, reg) pair."""

    rank: int
    reg: float
    mlogq: float
    objective: float
    sweeps: int


@dataclass(frozen=True)
class TuneResult:
    """All scored pairs and the best one (lowest validation MLogQ)."""

    entries: tuple[TuneEntry, ...]
    best: TuneEntry
    train_size: int
    validation_size: int


def split_observations(
    obs: ObservationSet, holdout: float, seed: int
) -> tuple[ObservationSet, ObservationSet]:
    """Randomly split observations into (train, validation)."""
    if not 0 < holdout < 1:
        raise ValueError(f"holdout fraction must lie in (0, 1), got {holdout}")
    n = len(obs)
    n_val = int(round(n * holdout))
    if n_val < 1 or n_val >= n:
        raise ValueError(f"cannot hold out {holdout:.0%} of {n} observations")
    perm = np.random.default_rng(seed).permutation(n)
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])

    def subset(idx: np.ndarray) -> ObservationSet:
        return ObservationSet(obs.frame.iloc[idx].reset_index(drop=True), obs.times[idx])

    return subset(train_idx), subset(val_idx)


def select_model(
    obs: ObservationSet,
    grid: Grid,
    regime: LossRegime,
    base: FitConfig,
    ranks: Sequence[int],
    regs: Sequence[float] = DEFAULT_REGS,
    holdout: float = 0.2,
) -> TuneResult:
    """Fit every (rank, reg) pair on a training split and score it on the rest.

    Validation configurations outside the domain are skipped. Ties keep the
    earlier pair, so smaller ranks and regularization win.

    Args:
        obs: All observations.
        grid: Grid to bin on.
        regime: Loss regime of every fit.
        base: Fit configuration supplying every other hyper-parameter and the
            split seed.
        ranks: Candidate CP ranks.
        regs: Candidate regularization values.
        holdout: Fraction of observations used for validation.

    Returns:
        The scored grid of candidates and the best entry.
    """
    if not ranks or not regs:
        raise ValueError("need at least one rank and one regularization value")
    train, validation = split_observations(obs, holdout, base.seed)
    tensor = bin_observations(train, grid, workers=base.workers)

    entries: list[TuneEntry] = []
    for rank, reg in itertools.product(ranks, regs):
        result = complete_tensor(tensor, replace(base, rank=rank, reg=reg), regime)
        preds, _ = predict_batch(
            PerformanceModel(grid, result.model), validation.configurations()
        )
        ok = np.isfinite(preds)
        if not np.any(ok):
            raise ValueError("no validation configuration lies inside the domain")
        score = mlogq(preds[ok], validation.times[ok])
        logger.info("rank %d reg %.0e: validation mlogq %.6f", rank, reg, score)
        entries.append(TuneEntry(rank, reg, score, result.objective, result.sweeps))

    best = min(entries, key=lambda e: e.mlogq)
    return TuneResult(tuple(entries), best, len(train), len(validation))
