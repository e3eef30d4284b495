"""Completion objectives and their row-wise derivatives.

Two loss regimes are supported:

* ``phi1``: least squares on log-transformed entries,
  ``sum (log t_i - m_i)^2 + reg * sum ||U_j||_F^2``.
* ``phi2``: squared log-ratio with a log barrier keeping factors positive,
  ``sum (log t_i - log m_i)^2 + reg * sum ||U_j||_F^2 - eta * sum log U_j``.

Here ``m_i`` is the CP reconstruction ``sum_r prod_j U_j[i_j, r]``. Fixing
every factor but one row ``u`` of mode ``j`` turns each objective into a
function of ``u`` alone with design matrix ``Z`` (one row per observed entry
of the slice, the elementwise product of the other modes' factor rows).
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg

from .constants import FINITE_DIFFERENCE_STEP


if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    from .complete import CPModel
    from .tensor import SparseTensor

    Factors = Sequence[NDArray[np.float64]]


__all__ = [
    "DomainViolationError",
    "data_loss_phi2",
    "grad_check_phi1",
    "grad_check_phi2",
    "objective_phi1",
    "objective_phi2",
    "reconstruct",
    "row_gradient_phi1",
    "row_gradient_phi2",
    "row_hessian_phi1",
    "row_hessian_phi2",
    "row_objective_phi1",
    "row_objective_phi2",
    "row_problem",
    "solve_row_ls",
]

logger = logging.getLogger(__name__)


class DomainViolationError(ValueError):
    """Raised when a log-ratio objective meets a non-positive factor entry."""


def reconstruct(factors: Factors, indices: NDArray[np.int64]) -> NDArray[np.float64]:
    """Return ``sum_r prod_j U_j[i_j, r]`` for every row of ``indices``."""
    prod = np.ones((len(indices), factors[0].shape[1]), dtype=np.float64)
    for mode, factor in enumerate(factors):
        prod *= factor[indices[:, mode]]
    return prod.sum(axis=1)


def _ridge(factors: Factors) -> float:
    return float(sum(np.sum(u * u) for u in factors))


def _check_positive(factors: Factors) -> None:
    for mode, factor in enumerate(factors):
        if np.any(~(factor > 0)):
            raise DomainViolationError(f"factor matrix of mode {mode} has non-positive entries")


def objective_phi1(t: SparseTensor, model: CPModel, reg: float) -> float:
    """Log-transformed least-squares objective of ``model`` on ``t``."""
    residual = np.log(t.values) - reconstruct(model.factors, t.indices)
    return float(np.sum(residual * residual)) + reg * _ridge(model.factors)


def data_loss_phi2(t: SparseTensor, model: CPModel) -> float:
    """Sum of squared log-ratios, without the barrier and ridge terms.

    Raises:
        DomainViolationError: If any factor entry is non-positive.
    """
    _check_positive(model.factors)
    residual = np.log(t.values) - np.log(reconstruct(model.factors, t.indices))
    return float(np.sum(residual * residual))


def objective_phi2(t: SparseTensor, model: CPModel, reg: float, eta: float) -> float:
    """Barrier-augmented log-ratio objective of ``model`` on ``t``.

    Raises:
        DomainViolationError: If any factor entry is non-positive.
    """
    loss = data_loss_phi2(t, model)
    barrier = float(sum(np.sum(np.log(u)) for u in model.factors))
    return loss + reg * _ridge(model.factors) - eta * barrier


def row_problem(
    t: SparseTensor, factors: Factors, mode: int, row: int
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return ``(Z, log t)`` restricted to the entries of one factor row."""
    sel = t.indices[:, mode] == row
    idx = t.indices[sel]
    z = np.ones((len(idx), factors[0].shape[1]), dtype=np.float64)
    for k, factor in enumerate(factors):
        if k != mode:
            z *= factor[idx[:, k]]
    return z, np.log(t.values[sel])


# phi1 row functions


def row_objective_phi1(
    z: NDArray[np.float64], y: NDArray[np.float64], u: NDArray[np.float64], reg: float
) -> float:
    """Row objective ``||y - Z u||^2 + reg ||u||^2``."""
    r = y - z @ u
    return float(r @ r + reg * (u @ u))


def row_gradient_phi1(
    z: NDArray[np.float64], y: NDArray[np.float64], u: NDArray[np.float64], reg: float
) -> NDArray[np.float64]:
    """Gradient ``-2 Z^T (y - Z u) + 2 reg u``."""
    return -2.0 * (z.T @ (y - z @ u)) + 2.0 * reg * u


def row_hessian_phi1(z: NDArray[np.float64], reg: float) -> NDArray[np.float64]:
    """Hessian ``2 Z^T Z + 2 reg I``."""
    return 2.0 * (z.T @ z) + 2.0 * reg * np.eye(z.shape[1])


def solve_row_ls(
    gram: NDArray[np.float64], rhs: NDArray[np.float64], reg: float
) -> NDArray[np.float64]:
    """Solve the regularized normal equations ``(G + reg I) u = b``.

    Uses a Cholesky factorization, falling back to a minimum-norm least
    squares solve when the system is not numerically positive definite.
    """
    system = gram + reg * np.eye(gram.shape[0])
    try:
        factor = linalg.cho_factor(system, lower=True, check_finite=False)
        return np.asarray(linalg.cho_solve(factor, rhs, check_finite=False), dtype=np.float64)
    except linalg.LinAlgError:
        logger.debug("Cholesky failed on a row system; using least squares")
        solution, *_ = linalg.lstsq(system, rhs)
        return np.asarray(solution, dtype=np.float64)


# phi2 row functions


def row_objective_phi2(
    z: NDArray[np.float64],
    y: NDArray[np.float64],
    u: NDArray[np.float64],
    reg: float,
    eta: float,
) -> float:
    """Row objective ``sum (y - log Z u)^2 + reg ||u||^2 - eta sum log u``.

    Returns ``inf`` outside the positive orthant.
    """
    if np.any(u <= 0):
        return float("inf")
    m = z @ u
    if np.any(m <= 0):
        return float("inf")
    r = y - np.log(m)
    return float(r @ r + reg * (u @ u) - eta * np.sum(np.log(u)))


def row_gradient_phi2(
    z: NDArray[np.float64],
    y: NDArray[np.float64],
    u: NDArray[np.float64],
    reg: float,
    eta: float,
) -> NDArray[np.float64]:
    """Gradient ``sum -2 r_k z_k / m_k + 2 reg u - eta / u``."""
    m = z @ u
    r = y - np.log(m)
    return -2.0 * (z.T @ (r / m)) + 2.0 * reg * u - eta / u


def row_hessian_phi2(
    z: NDArray[np.float64],
    y: NDArray[np.float64],
    u: NDArray[np.float64],
    reg: float,
    eta: float,
) -> NDArray[np.float64]:
    """Hessian ``sum 2 (1 + r_k) z_k z_k^T / m_k^2 + 2 reg I + eta diag(1 / u^2)``."""
    m = z @ u
    r = y - np.log(m)
    weights = 2.0 * (1.0 + r) / (m * m)
    return (z.T * weights) @ z + np.diag(2.0 * reg + eta / (u * u))


# Finite-difference checks


def _with_row(model: CPModel, mode: int, row: int, u: NDArray[np.float64]) -> CPModel:
    factors = [f.copy() for f in model.factors]
    factors[mode][row] = u
    return model.with_factors(factors)


def _rel_error(numeric: NDArray[np.float64], analytic: NDArray[np.float64]) -> float:
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-8)
    return float(np.max(np.abs(numeric - analytic))) / scale


def _central_gradient(
    f: Callable[[NDArray[np.float64]], float], u: NDArray[np.float64], step: float
) -> NDArray[np.float64]:
    grad = np.empty_like(u)
    for r in range(len(u)):
        e = np.zeros_like(u)
        e[r] = step
        grad[r] = (f(u + e) - f(u - e)) / (2.0 * step)
    return grad


def grad_check_phi1(
    t: SparseTensor,
    model: CPModel,
    mode: int,
    row: int,
    reg: float,
    step: float = FINITE_DIFFERENCE_STEP,
) -> float:
    """Compare the analytic phi1 row gradient with central differences.

    Differences are taken on the full objective, so every term that does not
    involve the row cancels.

    Returns:
        Max-norm relative error between the two gradients.
    """
    u0 = model.factors[mode][row].copy()
    z, y = row_problem(t, model.factors, mode, row)
    analytic = row_gradient_phi1(z, y, u0, reg)
    numeric = _central_gradient(
        lambda u: objective_phi1(t, _with_row(model, mode, row, u), reg), u0, step
    )
    return _rel_error(numeric, analytic)


def grad_check_phi2(
    t: SparseTensor,
    model: CPModel,
    mode: int,
    row: int,
    reg: float,
    eta: float,
    step: float = FINITE_DIFFERENCE_STEP,
    seed: int = 0,
) -> float:
    """Compare the analytic phi2 row gradient and Hessian with central differences.

    The Hessian is checked through its product with a random direction
    against the central difference of the analytic gradient.

    Returns:
        The larger of the gradient and Hessian-vector relative errors.
    """
    u0 = model.factors[mode][row].copy()
    z, y = row_problem(t, model.factors, mode, row)
    analytic = row_gradient_phi2(z, y, u0, reg, eta)
    numeric = _central_gradient(
        lambda u: objective_phi2(t, _with_row(model, mode, row, u), reg, eta), u0, step
    )
    grad_error = _rel_error(numeric, analytic)

    v = np.random.default_rng(seed).standard_normal(len(u0))
    v /= np.linalg.norm(v)
    hv = row_hessian_phi2(z, y, u0, reg, eta) @ v
    hv_numeric = (
        row_gradient_phi2(z, y, u0 + step * v, reg, eta)
        - row_gradient_phi2(z, y, u0 - step * v, reg, eta)
    ) / (2.0 * step)
    return max(grad_error, _rel_error(hv_numeric, hv))
