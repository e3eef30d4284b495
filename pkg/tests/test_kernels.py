"""Tests for the kernels module."""

from __future__ import annotations

import numpy as np
import pytest

from perftensor.kernels import (
    KernelError,
    KernelKind,
    SyntheticKernelSpec,
    evaluate_kernel,
    get_available_kernels,
    get_kernel_description,
    get_kernel_preset,
    midpoint_observations,
    synthesize_observations,
)
from perftensor.space import ParameterSpec, build_grid


GEMM_SPECS = [
    ParameterSpec.log("m", 32, 4096, 4),
    ParameterSpec.log("n", 32, 4096, 4),
    ParameterSpec.log("k", 32, 4096, 4),
]


class TestPresets:
    """Tests for kernel presets."""

    def test_available(self) -> None:
        """Test preset names are sorted and described."""
        names = get_available_kernels()
        assert names == sorted(names)
        assert {"gemm", "gemm-noisy", "power", "bilinear-split"} <= set(names)
        for name in names:
            assert get_kernel_description(name)
            assert isinstance(get_kernel_preset(name), SyntheticKernelSpec)

    def test_unknown_preset(self) -> None:
        """Test unknown presets raise KeyError."""
        with pytest.raises(KeyError, match="nope"):
            get_kernel_preset("nope")
        with pytest.raises(KeyError, match="nope"):
            get_kernel_description("nope")


class TestSyntheticKernelSpec:
    """Tests for kernel parameter validation."""

    def test_kind_coerced(self) -> None:
        """Test kernel kinds may be given by value."""
        spec = SyntheticKernelSpec("separable-power", exponents=[2, 1])
        assert spec.kernel is KernelKind.SEPARABLE_POWER
        assert spec.exponents == (2.0, 1.0)

    @pytest.mark.parametrize(
        "kwargs",
        [{"delta": 0.0}, {"cache_size": -1.0}, {"noise_sigma": -0.1}, {"offset": -1.0}],
    )
    def test_rejects_invalid(self, kwargs: dict[str, float]) -> None:
        """Test non-positive parameters are rejected."""
        with pytest.raises(KernelError):
            SyntheticKernelSpec(KernelKind.GEMM_ANALYTIC, **kwargs)


class TestEvaluateKernel:
    """Tests for noise-free kernel times."""

    def test_gemm_reference_value(self) -> None:
        """Test the analytic GEMM time of a 64 cube."""
        times = evaluate_kernel(get_kernel_preset("gemm"), np.array([[64.0, 64.0, 64.0]]))
        assert times[0] == pytest.approx(4.25984e-4, rel=1e-12)

    def test_gemm_needs_three_parameters(self) -> None:
        """Test GEMM rejects other coordinate counts."""
        with pytest.raises(KernelError, match="3 numerical"):
            evaluate_kernel(get_kernel_preset("gemm"), np.ones((1, 2)))

    def test_separable_power(self) -> None:
        """Test the power preset is a product of powers."""
        times = evaluate_kernel(get_kernel_preset("power"), np.array([[4.0, 3.0]]))
        assert times[0] == pytest.approx(1e-9 * 8.0 * 3.0)

    def test_power_exponent_count(self) -> None:
        """Test exponent count must match the coordinates."""
        with pytest.raises(KernelError, match="exponents"):
            evaluate_kernel(get_kernel_preset("power"), np.ones((1, 3)))

    def test_bilinear_regimes(self) -> None:
        """Test the two bilinear regimes on either side of the split."""
        spec = SyntheticKernelSpec(KernelKind.PIECEWISE_BILINEAR)
        times = evaluate_kernel(spec, np.array([[10.0, 20.0], [60.0, 50.0]]))
        assert times[0] == pytest.approx(200.0)
        assert times[1] == pytest.approx(0.5 * 70.0 * 60.0)

    def test_bilinear_split_preset_jump(self) -> None:
        """Test the preset jumps by six orders of magnitude across x + y = 170."""
        spec = get_kernel_preset("bilinear-split")
        clean = SyntheticKernelSpec(
            spec.kernel,
            coefficient=spec.coefficient,
            split=spec.split,
            ratio=spec.ratio,
            offset=spec.offset,
        )
        times = evaluate_kernel(clean, np.array([[85.0, 85.0], [86.0, 85.0]]))
        assert times[0] == pytest.approx(1e-3 * 85.0 * 85.0)
        assert times[1] == pytest.approx(1e3 * 86.0 * 85.0)


class TestSynthesis:
    """Tests for observation generators."""

    def test_sampled_inside_ranges(self) -> None:
        """Test sampled configurations respect parameter ranges."""
        obs = synthesize_observations(GEMM_SPECS, get_kernel_preset("gemm"), 200)
        assert len(obs) == 200
        frame = obs.to_frame()
        for name in ("m", "n", "k"):
            assert frame[name].between(32, 4096).all()
        assert np.all(obs.times > 0)

    def test_seeded(self) -> None:
        """Test the same seed reproduces the same observations."""
        kernel = get_kernel_preset("gemm-noisy")
        a = synthesize_observations(GEMM_SPECS, kernel, 50)
        b = synthesize_observations(GEMM_SPECS, kernel, 50)
        np.testing.assert_array_equal(a.times, b.times)

    def test_noise_does_not_move_configurations(self) -> None:
        """Test configurations are independent of the noise level."""
        clean = synthesize_observations(GEMM_SPECS, get_kernel_preset("gemm"), 50)
        noisy = synthesize_observations(GEMM_SPECS, get_kernel_preset("gemm-noisy"), 50)
        np.testing.assert_array_equal(
            clean.to_frame()[["m", "n", "k"]].to_numpy(),
            noisy.to_frame()[["m", "n", "k"]].to_numpy(),
        )
        ratio = noisy.times / clean.times
        assert np.all(ratio > 0)
        assert not np.allclose(ratio, 1.0)
        assert abs(float(np.mean(ratio)) - 1.0) < 0.01

    def test_categorical_columns(self) -> None:
        """Test categorical parameters are sampled from their labels."""
        kernel = SyntheticKernelSpec(KernelKind.SEPARABLE_POWER, exponents=(1.0, 1.0))
        specs = [
            ParameterSpec.log("m", 10, 10000, 3),
            ParameterSpec.linear("p", 1, 10, 5),
            ParameterSpec.categorical("algo", ["a", "b"]),
        ]
        obs = synthesize_observations(specs, kernel, 30)
        assert set(obs.to_frame()["algo"]) <= {"a", "b"}

    def test_rejects_negative_count(self) -> None:
        """Test the sample count must be non-negative."""
        with pytest.raises(KernelError, match="non-negative"):
            synthesize_observations(GEMM_SPECS, get_kernel_preset("gemm"), -1)

    def test_midpoint_observations(self) -> None:
        """Test one observation per midpoint in C order."""
        grid = build_grid(
            [ParameterSpec.linear("x", 0.5, 3.5, 3), ParameterSpec.linear("y", 0.5, 2.5, 2)]
        )
        obs = midpoint_observations(grid, SyntheticKernelSpec(KernelKind.SEPARABLE_POWER))
        assert len(obs) == 6
        assert obs.configuration(0) == (1.0, 1.0)
        assert obs.configuration(1) == (1.0, 2.0)
        np.testing.assert_allclose(obs.times, [1.0, 2.0, 2.0, 4.0, 3.0, 6.0])
