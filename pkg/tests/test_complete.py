"""Tests for the complete module."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from perftensor.complete import (
    CPModel,
    FitResult,
    LossRegime,
    complete_tensor,
    fit_als,
    fit_amn,
    init_factors,
)
from perftensor.config import BarrierSchedule, FitConfig
from perftensor.losses import DomainViolationError
from perftensor.metrics import mlogq
from perftensor.tensor import SparseTensor


def cp_tensor(factors: list[np.ndarray]) -> np.ndarray:
    dense = factors[0]
    for factor in factors[1:]:
        dense = dense[..., None, :] * factor
    return dense.sum(axis=-1)


def factor_norm(model: CPModel) -> float:
    return math.sqrt(sum(float(np.sum(u**2)) for u in model.factors))


class TestCPModel:
    """Tests for the CP model container."""

    def test_element_matches_full(self, random_cp) -> None:
        """Test single elements agree with the dense reconstruction."""
        model = random_cp((3, 2, 4), 2, LossRegime.LOG_LS, seed=0)
        dense = model.full()
        assert model.element((2, 1, 3)) == pytest.approx(dense[2, 1, 3], rel=1e-14)
        indices = np.array([[0, 0, 0], [2, 1, 3]])
        np.testing.assert_allclose(model.elements(indices), dense[[0, 2], [0, 1], [0, 3]])

    def test_size(self, random_cp) -> None:
        """Test the stored-entry count."""
        assert random_cp((3, 2, 4), 2, LossRegime.LOG_LS, seed=0).size == 18

    def test_rejects_wrong_shape(self) -> None:
        """Test factor shapes must match dims and rank."""
        with pytest.raises(ValueError, match="expected"):
            CPModel((2, 2), 1, (np.ones((2, 1)), np.ones((3, 1))), LossRegime.LOG_LS)

    def test_rejects_non_finite(self) -> None:
        """Test factors must be finite."""
        with pytest.raises(ValueError, match="non-finite"):
            CPModel((1,), 1, (np.array([[math.nan]]),), LossRegime.LOG_LS)

    def test_log_ratio_needs_positive_factors(self) -> None:
        """Test the log-ratio regime rejects non-positive factors."""
        with pytest.raises(DomainViolationError):
            CPModel((2,), 1, (np.array([[1.0], [0.0]]),), LossRegime.LOG_RATIO)

    def test_factors_are_read_only(self, random_cp) -> None:
        """Test the model is immutable."""
        model = random_cp((2, 2), 1, LossRegime.LOG_LS, seed=0)
        with pytest.raises(ValueError, match="read-only"):
            model.factors[0][0, 0] = 1.0


class TestInitFactors:
    """Tests for starting factors."""

    def test_log_ratio_start_is_positive(self) -> None:
        """Test positive starting factors for the barrier method."""
        factors = init_factors((5, 4), 3, seed=1, regime=LossRegime.LOG_RATIO)
        assert all(np.all(f > 0) for f in factors)
        assert [f.shape for f in factors] == [(5, 3), (4, 3)]

    def test_seeded(self) -> None:
        """Test the same seed gives the same start."""
        a = init_factors((3,), 2, seed=4, regime=LossRegime.LOG_LS)
        b = init_factors((3,), 2, seed=4, regime=LossRegime.LOG_LS)
        np.testing.assert_array_equal(a[0], b[0])

    def test_rejects_zero_rank(self) -> None:
        """Test rank must be positive."""
        with pytest.raises(ValueError, match="rank"):
            init_factors((3,), 0, seed=0, regime=LossRegime.LOG_LS)


class TestALS:
    """Tests for alternating least squares."""

    @pytest.mark.parametrize("seed", range(50))
    def test_objective_non_increasing(self, seed: int, random_tensor) -> None:
        """Test every sweep does not increase the objective."""
        rng = np.random.default_rng(seed)
        dims = (int(rng.integers(2, 7)), int(rng.integers(2, 6)), int(rng.integers(2, 5)))
        t = random_tensor(dims, 0.5, seed=seed)
        cfg = FitConfig(rank=int(rng.integers(1, 4)), max_sweeps=15, tol=0.0, seed=seed)
        history = complete_tensor(t, cfg, LossRegime.LOG_LS).history
        assert all(b <= a + 1e-10 for a, b in itertools.pairwise(history))

    @pytest.mark.parametrize("seed", range(10))
    def test_exact_recovery(self, seed: int) -> None:
        """Test a fully observed rank-2 log-space tensor is recovered."""
        rng = np.random.default_rng(100 + seed)
        truth = cp_tensor([rng.standard_normal((n, 2)) for n in (6, 5, 4)])
        t = SparseTensor.from_dense(np.exp(truth))
        model = fit_als(t, FitConfig(rank=2, reg=1e-6, max_sweeps=100, tol=0.0, seed=seed))
        assert model.regime is LossRegime.LOG_LS
        assert float(np.mean(np.abs(model.full() - truth))) < 1e-3

    def test_heavy_ridge_shrinks_factors(self, random_tensor) -> None:
        """Test a dominant ridge term drives the factors towards zero."""
        t = random_tensor((6, 5, 4), 1.0, seed=4)
        loose = fit_als(t, FitConfig(rank=2, reg=1e-6, max_sweeps=10, seed=1))
        heavy = fit_als(t, FitConfig(rank=2, reg=1e6, max_sweeps=10, seed=1))
        assert factor_norm(heavy) < 1e-2 * factor_norm(loose)

    def test_unobserved_rows_unchanged(self) -> None:
        """Test factor rows without observations keep their start values."""
        values = np.exp(np.random.default_rng(0).normal(size=(3, 3)))
        mask = np.ones((3, 3), dtype=bool)
        mask[2, :] = False
        t = SparseTensor.from_dense(values, mask)
        cfg = FitConfig(rank=2, max_sweeps=5, seed=3)
        start = init_factors(t.dims, 2, seed=3, regime=LossRegime.LOG_LS)
        model = fit_als(t, cfg)
        np.testing.assert_array_equal(model.factors[0][2], start[0][2])

    def test_history_and_callback(self, random_tensor) -> None:
        """Test history starts with the initial objective and callbacks fire per sweep."""
        t = random_tensor((4, 3), 0.7, seed=5)
        seen: list[int] = []
        result = complete_tensor(
            t,
            FitConfig(rank=2, max_sweeps=7, tol=0.0),
            LossRegime.LOG_LS,
            callback=lambda sweep, model: seen.append(sweep),
        )
        assert isinstance(result, FitResult)
        assert result.sweeps == 7
        assert seen == list(range(1, 8))
        assert len(result.history) == 8
        assert result.history[0] == result.initial_objective
        assert result.history[-1] == result.objective

    def test_converges_on_tolerance(self, random_tensor) -> None:
        """Test a loose tolerance stops before the sweep limit."""
        t = random_tensor((4, 3), 1.0, seed=5)
        result = complete_tensor(t, FitConfig(rank=1, tol=1e-2), LossRegime.LOG_LS)
        assert result.converged
        assert result.sweeps < 100

    def test_workers_are_deterministic(self, random_tensor) -> None:
        """Test threaded row solves give the sequential result."""
        t = random_tensor((6, 5, 4), 0.5, seed=9)
        sequential = fit_als(t, FitConfig(rank=3, max_sweeps=10, seed=2))
        threaded = fit_als(t, FitConfig(rank=3, max_sweeps=10, seed=2, workers=3))
        for a, b in zip(sequential.factors, threaded.factors, strict=True):
            np.testing.assert_array_equal(a, b)

    def test_empty_tensor_rejected(self) -> None:
        """Test completion needs observations."""
        with pytest.raises(ValueError, match="no observed entries"):
            fit_als(SparseTensor.from_entries((2, 2), {}), FitConfig(rank=1))


class TestAMN:
    """Tests for barrier Newton alternating minimization."""

    @pytest.mark.parametrize("seed", range(10))
    def test_rank_one_recovery_stays_positive(self, seed: int) -> None:
        """Test positivity at every iterate and recovery of a positive rank-1 tensor."""
        rng = np.random.default_rng(200 + seed)
        truth = cp_tensor([rng.uniform(0.5, 2.0, size=(n, 1)) for n in (5, 4, 3)])
        t = SparseTensor.from_dense(truth)

        def check(sweep: int, model: CPModel) -> None:
            assert all(np.all(f > 0) for f in model.factors)

        result = complete_tensor(
            t, FitConfig(rank=1, max_sweeps=50, seed=seed), LossRegime.LOG_RATIO, callback=check
        )
        assert result.model.regime is LossRegime.LOG_RATIO
        assert mlogq(result.model.full().ravel(), truth.ravel()) < 1e-2

    def test_all_ones_without_regularization(self) -> None:
        """Test a 2x2 all-ones tensor is fitted with no ridge term."""
        t = SparseTensor.from_dense(np.ones((2, 2)))
        model = fit_amn(t, FitConfig(rank=1, reg=0.0))
        np.testing.assert_allclose(model.full(), 1.0, rtol=1e-4)

    def test_stage_count(self, random_tensor) -> None:
        """Test one sweep per stage when the sweep limit is one."""
        t = random_tensor((3, 3), 1.0, seed=1)
        schedule = BarrierSchedule(eta_init=1.0, eta_factor=10.0, eta_min=2e-3)
        result = complete_tensor(
            t, FitConfig(rank=1, max_sweeps=1, barrier=schedule), LossRegime.LOG_RATIO
        )
        assert result.sweeps == len(schedule.etas()) == 4
        assert len(result.history) == 5

    def test_workers_are_deterministic(self, random_tensor) -> None:
        """Test threaded Newton rows give the sequential result."""
        t = random_tensor((4, 3, 3), 0.6, seed=4)
        schedule = BarrierSchedule(eta_init=1.0, eta_factor=10.0, eta_min=1e-2)
        cfg = FitConfig(rank=2, max_sweeps=5, barrier=schedule, seed=6)
        sequential = fit_amn(t, cfg)
        threaded = fit_amn(t, FitConfig(rank=2, max_sweeps=5, barrier=schedule, seed=6, workers=2))
        for a, b in zip(sequential.factors, threaded.factors, strict=True):
            np.testing.assert_array_equal(a, b)
