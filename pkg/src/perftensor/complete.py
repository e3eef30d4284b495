"""CP tensor completion under the log least-squares and log-ratio regimes."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg
from tqdm import tqdm

from .constants import (
    ALS_INIT_RANGE,
    AMN_INIT_RANGE,
    LINE_SEARCH_MAX_HALVINGS,
    LINE_SEARCH_SHRINK,
)
from .losses import (
    DomainViolationError,
    objective_phi1,
    objective_phi2,
    reconstruct,
    row_gradient_phi2,
    row_hessian_phi2,
    row_objective_phi2,
    solve_row_ls,
)


if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    from .config import FitConfig
    from .tensor import SparseTensor


__all__ = [
    "CPModel",
    "FitError",
    "FitResult",
    "LossRegime",
    "complete_tensor",
    "fit_als",
    "fit_amn",
    "init_factors",
]

logger = logging.getLogger(__name__)


class FitError(RuntimeError):
    """Raised when a fit produces a non-finite objective."""

    def __init__(self, message: str, sweep: int) -> None:
        super().__init__(f"sweep {sweep}: {message}")
        self.sweep = sweep


class LossRegime(str, Enum):
    """Completion loss regime; values are the CLI ``--loss`` tokens."""

    LOG_LS = "ls-log"  # least squares on log t; elements estimate log-time
    LOG_RATIO = "logq2"  # squared log-ratio, positive factors; elements estimate time


@dataclass(frozen=True, eq=False)
class CPModel:
    """Rank-R CP decomposition with one I_j x R factor matrix per mode."""

    dims: tuple[int, ...]
    rank: int
    factors: tuple[NDArray[np.float64], ...]
    regime: LossRegime

    def __post_init__(self) -> None:
        """Validate shapes and regime constraints, then freeze the factors."""
        if len(self.factors) != len(self.dims):
            raise ValueError(f"expected {len(self.dims)} factor matrices, got {len(self.factors)}")
        for mode, (n, factor) in enumerate(zip(self.dims, self.factors, strict=True)):
            if factor.shape != (n, self.rank):
                raise ValueError(
                    f"factor {mode} has shape {factor.shape}, expected {(n, self.rank)}"
                )
            if not np.all(np.isfinite(factor)):
                raise ValueError(f"factor {mode} has non-finite entries")
            if self.regime is LossRegime.LOG_RATIO and np.any(factor <= 0):
                raise DomainViolationError(f"factor {mode} has non-positive entries")
            factor.setflags(write=False)

    @property
    def ndim(self) -> int:
        """Number of modes d."""
        return len(self.dims)

    @property
    def size(self) -> int:
        """Number of stored factor entries."""
        return self.rank * sum(self.dims)

    def element(self, index: Sequence[int]) -> float:
        """Return ``sum_r prod_j U_j[i_j, r]``."""
        prod = np.ones(self.rank, dtype=np.float64)
        for factor, i in zip(self.factors, index, strict=True):
            prod *= factor[i]
        return float(prod.sum())

    def elements(self, indices: NDArray[np.int64]) -> NDArray[np.float64]:
        """Vectorized :meth:`element` over an (n x d) index array."""
        return reconstruct(self.factors, np.asarray(indices, dtype=np.int64))

    def full(self) -> NDArray[np.float64]:
        """Return the dense reconstruction of shape ``dims``."""
        dense = self.factors[0]
        for factor in self.factors[1:]:
            dense = dense[..., None, :] * factor
        return np.asarray(dense.sum(axis=-1))

    def with_factors(self, factors: Sequence[NDArray[np.float64]]) -> CPModel:
        """Return a copy of this model with new factor matrices."""
        return CPModel(self.dims, self.rank, tuple(np.array(f) for f in factors), self.regime)


@dataclass
class FitResult:
    """Outcome of a completion fit.

    ``history`` holds the objective before the first sweep followed by the
    objective after every sweep. For the log-ratio regime each value is
    measured at the barrier weight of its own stage.
    """

    model: CPModel
    objective: float
    initial_objective: float
    sweeps: int
    converged: bool
    history: list[float] = field(default_factory=list)


def init_factors(
    dims: Sequence[int], rank: int, seed: int, regime: LossRegime
) -> list[NDArray[np.float64]]:
    """Draw i.i.d. uniform starting factors; positive for the log-ratio regime."""
    if rank < 1:
        raise ValueError(f"rank must be at least 1, got {rank}")
    low, high = AMN_INIT_RANGE if regime is LossRegime.LOG_RATIO else ALS_INIT_RANGE
    rng = np.random.default_rng(seed)
    return [rng.uniform(low, high, size=(n, rank)) for n in dims]


def _design(
    factors: Sequence[NDArray[np.float64]], indices: NDArray[np.int64], mode: int
) -> NDArray[np.float64]:
    """Row-wise product of every factor except ``mode`` at the observed indices."""
    z = np.ones((len(indices), factors[0].shape[1]), dtype=np.float64)
    for k, factor in enumerate(factors):
        if k != mode:
            z *= factor[indices[:, k]]
    return z


def _row_groups(t: SparseTensor) -> list[dict[int, NDArray[np.int64]]]:
    """Per mode, the positions in Ω belonging to each observed row."""
    groups: list[dict[int, NDArray[np.int64]]] = []
    for mode in range(t.ndim):
        rows = t.indices[:, mode]
        order = np.argsort(rows, kind="stable")
        keys, starts = np.unique(rows[order], return_index=True)
        chunks = np.split(order, starts[1:])
        groups.append({int(k): c for k, c in zip(keys, chunks, strict=True)})
    return groups


def _map_rows(
    fn: Callable[[int], NDArray[np.float64]], rows: list[int], workers: int
) -> list[NDArray[np.float64]]:
    if workers > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(fn, rows))
    return [fn(row) for row in rows]


def _als_sweep(
    t: SparseTensor,
    y: NDArray[np.float64],
    factors: list[NDArray[np.float64]],
    groups: list[dict[int, NDArray[np.int64]]],
    cfg: FitConfig,
) -> None:
    for mode in range(t.ndim):
        z = _design(factors, t.indices, mode)

        def solve(row: int, z: NDArray[np.float64] = z, mode: int = mode) -> NDArray[np.float64]:
            pos = groups[mode][row]
            zr = z[pos]
            return solve_row_ls(zr.T @ zr, zr.T @ y[pos], cfg.reg)

        rows = sorted(groups[mode])
        for row, u in zip(rows, _map_rows(solve, rows, cfg.workers), strict=True):
            factors[mode][row] = u


def _newton_row(
    z: NDArray[np.float64],
    y: NDArray[np.float64],
    u: NDArray[np.float64],
    reg: float,
    eta: float,
    iters: int,
) -> NDArray[np.float64]:
    """Damped Newton minimization of one phi2 row objective, staying positive."""
    f = row_objective_phi2(z, y, u, reg, eta)
    for _ in range(iters):
        g = row_gradient_phi2(z, y, u, reg, eta)
        try:
            factor = linalg.cho_factor(
                row_hessian_phi2(z, y, u, reg, eta), lower=True, check_finite=False
            )
            step = -linalg.cho_solve(factor, g, check_finite=False)
            if not g @ step < 0:
                step = -g
        except (linalg.LinAlgError, ValueError):
            step = -g

        alpha = 1.0
        accepted = False
        for _ in range(LINE_SEARCH_MAX_HALVINGS + 1):
            candidate = u + alpha * step
            if np.all(candidate > 0):
                f_new = row_objective_phi2(z, y, candidate, reg, eta)
                if f_new <= f:
                    accepted = True
                    break
            alpha *= LINE_SEARCH_SHRINK
        if not accepted:
            break

        decrease = f - f_new
        u, f = candidate, f_new
        if decrease <= 1e-15 * max(1.0, abs(f)):
            break
    return u


def _amn_sweep(
    t: SparseTensor,
    y: NDArray[np.float64],
    factors: list[NDArray[np.float64]],
    groups: list[dict[int, NDArray[np.int64]]],
    cfg: FitConfig,
    eta: float,
) -> None:
    for mode in range(t.ndim):
        z = _design(factors, t.indices, mode)

        def update(
            row: int, z: NDArray[np.float64] = z, mode: int = mode
        ) -> NDArray[np.float64]:
            pos = groups[mode][row]
            return _newton_row(
                z[pos], y[pos], factors[mode][row], cfg.reg, eta, cfg.barrier.newton_iters
            )

        rows = sorted(groups[mode])
        for row, u in zip(rows, _map_rows(update, rows, cfg.workers), strict=True):
            factors[mode][row] = u


def _converged(prev: float, cur: float, tol: float) -> bool:
    return abs(prev - cur) <= tol * max(abs(prev), np.finfo(np.float64).tiny)


def _fit_als(
    t: SparseTensor, cfg: FitConfig, callback: Callable[[int, CPModel], None] | None
) -> FitResult:
    regime = LossRegime.LOG_LS
    y = np.log(t.values)
    factors = init_factors(t.dims, cfg.rank, cfg.seed, regime)
    groups = _row_groups(t)

    def model() -> CPModel:
        return CPModel(t.dims, cfg.rank, tuple(f.copy() for f in factors), regime)

    objective = objective_phi1(t, model(), cfg.reg)
    history = [objective]
    converged = False
    sweep = 0
    with tqdm(
        total=cfg.max_sweeps, desc="ALS sweeps", unit="sweep", disable=not cfg.progress
    ) as pbar:
        for sweep in range(1, cfg.max_sweeps + 1):
            _als_sweep(t, y, factors, groups, cfg)
            if not all(np.all(np.isfinite(f)) for f in factors):
                raise FitError("non-finite factor entries", sweep)
            current = model()
            new_objective = objective_phi1(t, current, cfg.reg)
            if not math.isfinite(new_objective):
                raise FitError(f"objective is {new_objective}", sweep)
            history.append(new_objective)
            logger.debug(
                "ALS sweep %d objective %.10e",
                sweep,
                new_objective,
                extra={"sweep": sweep, "objective": new_objective},
            )
            if callback is not None:
                callback(sweep, current)
            pbar.update(1)
            done = _converged(objective, new_objective, cfg.tol)
            objective = new_objective
            if done:
                converged = True
                break

    return FitResult(model(), objective, history[0], sweep, converged, history)


def _fit_amn(
    t: SparseTensor, cfg: FitConfig, callback: Callable[[int, CPModel], None] | None
) -> FitResult:
    regime = LossRegime.LOG_RATIO
    y = np.log(t.values)
    factors = init_factors(t.dims, cfg.rank, cfg.seed, regime)
    groups = _row_groups(t)
    etas = cfg.barrier.etas()

    def model() -> CPModel:
        return CPModel(t.dims, cfg.rank, tuple(f.copy() for f in factors), regime)

    initial = model()
    initial_objective = objective_phi2(t, initial, cfg.reg, etas[-1])
    history = [objective_phi2(t, initial, cfg.reg, etas[0])]
    sweep = 0
    converged = False
    with tqdm(
        total=len(etas), desc="Barrier stages", unit="stage", disable=not cfg.progress
    ) as pbar:
        for eta in etas:
            objective = objective_phi2(t, model(), cfg.reg, eta)
            converged = False
            for _ in range(cfg.max_sweeps):
                sweep += 1
                _amn_sweep(t, y, factors, groups, cfg, eta)
                try:
                    current = model()
                    new_objective = objective_phi2(t, current, cfg.reg, eta)
                except (ValueError, DomainViolationError) as exc:
                    raise FitError(str(exc), sweep) from exc
                if not math.isfinite(new_objective):
                    raise FitError(f"objective is {new_objective} at eta={eta:g}", sweep)
                history.append(new_objective)
                logger.debug(
                    "AMN sweep %d eta %.3e objective %.10e",
                    sweep,
                    eta,
                    new_objective,
                    extra={"sweep": sweep, "eta": eta, "objective": new_objective},
                )
                if callback is not None:
                    callback(sweep, current)
                done = _converged(objective, new_objective, cfg.tol)
                objective = new_objective
                if done:
                    converged = True
                    break
            pbar.update(1)

    return FitResult(model(), objective, initial_objective, sweep, converged, history)


def complete_tensor(
    t: SparseTensor,
    cfg: FitConfig,
    regime: LossRegime,
    callback: Callable[[int, CPModel], None] | None = None,
) -> FitResult:
    """Fit a CP model to the observed entries of ``t``.

    Args:
        t: Partially observed tensor of positive mean times.
        cfg: Fit hyper-parameters.
        regime: ``LOG_LS`` runs alternating least squares on log-times;
            ``LOG_RATIO`` runs barrier Newton alternating minimization.
        callback: Called as ``callback(sweep, model)`` after every sweep.

    Returns:
        The fitted model with objective history and sweep count.

    Raises:
        FitError: If an objective or factor becomes non-finite.
    """
    if t.nnz < 1:
        raise ValueError("cannot complete a tensor with no observed entries")
    logger.info(
        "Fitting rank-%d %s model to %d entries of a %s tensor",
        cfg.rank,
        regime.value,
        t.nnz,
        "x".join(map(str, t.dims)),
    )
    if regime is LossRegime.LOG_LS:
        result = _fit_als(t, cfg, callback)
    else:
        result = _fit_amn(t, cfg, callback)
    logger.info(
        "Fit finished after %d sweeps (objective %.6e, %s)",
        result.sweeps,
        result.objective,
        "converged" if result.converged else "sweep limit reached",
    )
    return result


def fit_als(t: SparseTensor, cfg: FitConfig) -> CPModel:
    """Fit a log least-squares CP model by alternating least squares.

    Each sweep solves, for every mode in turn and every factor row with
    observed entries, the ridge-regularized normal equations of that row.
    Rows without observations keep their values.
    """
    return complete_tensor(t, cfg, LossRegime.LOG_LS).model


def fit_amn(t: SparseTensor, cfg: FitConfig) -> CPModel:
    """Fit a positive log-ratio CP model by barrier Newton alternating minimization."""
    return complete_tensor(t, cfg, LossRegime.LOG_RATIO).model
