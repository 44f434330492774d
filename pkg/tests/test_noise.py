import numpy as np
import pytest
from scipy import stats

from grou import (
    CompoundPoisson,
    GaussianJumps,
    GhypMotion,
    GhypParams,
    LevySpec,
    NotPSD,
    generate_increments,
    sample_brownian,
    sample_ghyp,
    sample_ig,
)


class TestSampleBrownian:
    def test_zero_covariance(self):
        rng = np.random.default_rng(0)
        assert np.array_equal(sample_brownian(np.zeros((3, 3)), 1.0, rng), np.zeros(3))

    def test_identity_sample_covariance(self):
        rng = np.random.default_rng(1)
        draws = sample_brownian(np.eye(2), 1.0, rng, size=100_000)
        cov = np.cov(draws)
        mc_err = 3.0 / np.sqrt(100_000)
        assert np.all(np.abs(cov - np.eye(2)) < 3 * mc_err + 0.01)

    def test_correlated_draws(self):
        rng = np.random.default_rng(2)
        sigma = np.array([[1.0, 0.9], [0.9, 1.0]])
        draws = sample_brownian(sigma, 0.25, rng, size=100_000)
        corr = np.corrcoef(draws)[0, 1]
        assert corr == pytest.approx(0.9, abs=0.01)
        assert np.var(draws[0]) == pytest.approx(0.25, rel=0.05)

    def test_not_psd(self):
        with pytest.raises(NotPSD):
            sample_brownian(np.array([[1.0, 2.0], [2.0, 1.0]]), 1.0, np.random.default_rng(0))


class TestSampleIG:
    def test_degenerate_limit(self):
        rng = np.random.default_rng(3)
        draws = sample_ig(1.0, 1e9, rng, size=10_000)
        # variance formula mean^3/shape
        assert np.var(draws) < 3e-9
        assert np.mean(draws) == pytest.approx(1.0, abs=1e-3)

    def test_mean_and_variance(self):
        rng = np.random.default_rng(4)
        draws = sample_ig(1.0, 1.0, rng, size=100_000)
        assert np.mean(draws) == pytest.approx(1.0, abs=0.02)
        assert np.var(draws) == pytest.approx(1.0, rel=0.1)

    def test_strictly_positive(self):
        rng = np.random.default_rng(5)
        draws = sample_ig(2.0, 0.5, rng, size=10_000)
        assert np.all(draws > 0)

    def test_scalar_form(self):
        value = sample_ig(1.0, 2.0, np.random.default_rng(6))
        assert isinstance(value, float) and value > 0


class TestSampleGhyp:
    def test_degenerate_mixing_is_gaussian(self):
        params = GhypParams(gamma=np.zeros(2), scatter=np.eye(2), ig_shape=1e9)
        draws = sample_ghyp(params, 0.5, np.random.default_rng(7), size=50_000)
        assert np.allclose(np.cov(draws), 0.5 * np.eye(2), atol=0.02)
        # with near-constant mixing the excess kurtosis vanishes
        assert abs(stats.kurtosis(draws[0])) < 0.1

    def test_symmetric_marginals(self):
        params = GhypParams(gamma=np.zeros(2), scatter=np.eye(2), ig_shape=0.5)
        draws = sample_ghyp(params, 1.0, np.random.default_rng(8), size=100_000)
        for row in draws:
            assert abs(stats.skew(row)) < 0.05

    def test_skewed_mean(self):
        gamma = np.array([0.7, -0.3])
        params = GhypParams(gamma=gamma, scatter=np.eye(2), ig_shape=2.0)
        dt = 0.5
        draws = sample_ghyp(params, dt, np.random.default_rng(9), size=200_000)
        assert np.allclose(draws.mean(axis=1), dt * gamma, atol=0.01)


class TestGenerateIncrements:
    def test_pure_brownian_unit_grid(self):
        spec = LevySpec(sigma=np.eye(2))
        times = np.arange(5001.0)
        inc = generate_increments(spec, times, np.random.default_rng(10))
        assert np.allclose(np.cov(inc.values), np.eye(2), atol=0.1)
        assert np.array_equal(inc.values, inc.continuous)

    def test_poisson_jump_count(self):
        spec = LevySpec(
            sigma=np.zeros((2, 2)),
            jump=CompoundPoisson(intensity=2.0, heights=GaussianJumps(np.eye(2))),
        )
        times = np.linspace(0.0, 100.0, 10_001)
        inc = generate_increments(spec, times, np.random.default_rng(11))
        n_jump_intervals = int(np.sum(np.any(inc.jumps != 0.0, axis=0)))
        assert abs(n_jump_intervals - 200) < 3 * np.sqrt(200) + 2

    def test_zero_multiplier(self):
        spec = LevySpec(sigma=np.eye(2), multiplier=0.0)
        inc = generate_increments(spec, np.arange(11.0), np.random.default_rng(12))
        assert np.array_equal(inc.values, np.zeros((2, 10)))

    def test_determinism(self):
        spec = LevySpec(
            sigma=np.eye(3),
            jump=CompoundPoisson(intensity=1.0, heights=GaussianJumps(4.0 * np.eye(3))),
        )
        times = np.linspace(0.0, 10.0, 301)
        a = generate_increments(spec, times, np.random.default_rng(13))
        b = generate_increments(spec, times, np.random.default_rng(13))
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.continuous, b.continuous)

    def test_split_sums_exactly(self):
        spec = LevySpec(
            sigma=0.3 * np.eye(2),
            jump=CompoundPoisson(intensity=5.0, heights=GaussianJumps(np.eye(2))),
            multiplier=1.7,
        )
        inc = generate_increments(spec, np.linspace(0.0, 20.0, 501), np.random.default_rng(14))
        assert np.array_equal(inc.values, inc.continuous + inc.jumps)

    def test_zero_drift_long_horizon(self):
        spec = LevySpec(sigma=np.eye(1))
        times = np.linspace(0.0, 10_000.0, 100_001)
        inc = generate_increments(spec, times, np.random.default_rng(15))
        total = inc.values.sum(axis=1)
        assert abs(total[0]) < 4 * np.sqrt(10_000.0)

    def test_vanishing_intensity_matches_brownian(self):
        # two-sample KS between pure Brownian increments and compound Poisson
        # increments with nearly zero intensity, d=1
        times = np.linspace(0.0, 50.0, 5001)
        pure = generate_increments(LevySpec(sigma=np.eye(1)), times, np.random.default_rng(16))
        tiny = LevySpec(
            sigma=np.eye(1),
            jump=CompoundPoisson(intensity=1e-9, heights=GaussianJumps(np.eye(1))),
        )
        with_jumps = generate_increments(tiny, times, np.random.default_rng(17))
        _, pvalue = stats.ks_2samp(pure.values[0], with_jumps.values[0])
        assert pvalue > 0.01

    def test_ghyp_motion_increments(self):
        params = GhypParams(gamma=np.zeros(2), scatter=np.eye(2), ig_shape=1.0)
        spec = LevySpec(sigma=np.zeros((2, 2)), jump=GhypMotion(params))
        times = np.linspace(0.0, 100.0, 10_001)
        inc = generate_increments(spec, times, np.random.default_rng(18))
        # increment variance per unit time equals the scatter diagonal for gamma=0
        assert np.allclose(inc.values.var(axis=1) / np.diff(times).mean(), 1.0, rtol=0.1)
        assert np.array_equal(inc.continuous, np.zeros_like(inc.values))

    def test_jump_count_modes(self):
        heights = GaussianJumps(np.eye(3))
        times = np.linspace(0.0, 50.0, 2001)
        for mode in ("poisson", "per_component", "median_count"):
            spec = LevySpec(
                sigma=np.zeros((3, 3)),
                jump=CompoundPoisson(intensity=1.0, heights=heights, jump_count_mode=mode),
            )
            inc = generate_increments(spec, times, np.random.default_rng(19))
            assert inc.jumps.any()
        # common arrival times: a jump hits every component at once
        spec = LevySpec(
            sigma=np.zeros((3, 3)),
            jump=CompoundPoisson(intensity=1.0, heights=heights, jump_count_mode="poisson"),
        )
        inc = generate_increments(spec, times, np.random.default_rng(20))
        jump_cols = np.any(inc.jumps != 0.0, axis=0)
        assert np.all(np.all(inc.jumps[:, jump_cols] != 0.0, axis=0))
