import math

import numpy as np
import pytest

from dpaimd.model import ConfigurationError, NumericError
from dpaimd.privacy import (
    NoiseKind,
    NoiseSpec,
    ScaleMode,
    SensitivityTracker,
    empirical_dp_ratio,
    empirical_dp_violation_fraction,
    gaussian_sigma,
    laplace_scale,
    sample_noise,
    update_sensitivity,
)


class TestCalibration:
    def test_gaussian_sigma_reference_values(self):
        assert gaussian_sigma(1.32, 0.2, 0.01) == pytest.approx(20.50, abs=0.01)
        assert gaussian_sigma(2.53, 0.2, 0.01) == pytest.approx(39.31, abs=0.01)

    def test_gaussian_sigma_unit_case(self):
        # dq = epsilon and delta = 1.25 / e^0.5 make both factors exactly 1
        assert gaussian_sigma(0.7, 0.7, 1.25 / math.exp(0.5)) == pytest.approx(1.0)

    def test_gaussian_sigma_invalid(self):
        with pytest.raises(ConfigurationError):
            gaussian_sigma(0.0, 0.2, 0.01)
        with pytest.raises(ConfigurationError):
            gaussian_sigma(1.0, 0.2, 1.3)

    def test_laplace_scale(self):
        assert laplace_scale(5.9, 0.1) == pytest.approx(59.0)
        assert laplace_scale(6.34, 0.1) == pytest.approx(63.4)
        assert laplace_scale(1.0, 1.0) == 1.0

    def test_laplace_scale_invalid(self):
        with pytest.raises(ConfigurationError):
            laplace_scale(0.0, 0.1)
        with pytest.raises(ConfigurationError):
            laplace_scale(1.0, -1.0)


class TestSampling:
    def test_none_kind_is_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            draw = sample_noise(NoiseSpec(kind=NoiseKind.NONE), 0.0, rng)
            assert draw.value == 0.0 and draw.scale == 0.0

    def test_laplace_variance(self):
        spec = NoiseSpec(kind=NoiseKind.LAPLACE, scale_mode=ScaleMode.FIXED, scale=59.0)
        rng = np.random.default_rng(123)
        draws = np.array([sample_noise(spec, 59.0, rng).value for _ in range(200_000)])
        # thin the Monte Carlo a bit vs. the full check in acceptance; 2 b^2 variance
        assert draws.var() == pytest.approx(2 * 59.0 ** 2, rel=0.03)
        assert abs(draws.mean()) < 3 * math.sqrt(2) * 59.0 / math.sqrt(200_000)

    def test_gaussian_moments(self):
        spec = NoiseSpec(kind=NoiseKind.GAUSSIAN, epsilon=0.2, delta=0.01,
                         scale_mode=ScaleMode.FIXED, scale=20.5)
        rng = np.random.default_rng(321)
        draws = np.array([sample_noise(spec, 20.5, rng).value for _ in range(200_000)])
        assert abs(draws.mean()) <= 3 * 20.5 / math.sqrt(200_000)
        assert draws.std() == pytest.approx(20.5, rel=0.02)

    def test_reproducible_given_stream(self):
        spec = NoiseSpec(kind=NoiseKind.LAPLACE, scale_mode=ScaleMode.FIXED, scale=2.0)
        a = [sample_noise(spec, 2.0, np.random.default_rng(5)).value for _ in range(1)]
        b = [sample_noise(spec, 2.0, np.random.default_rng(5)).value for _ in range(1)]
        assert a == b


class TestNoiseSpecValidation:
    def test_gaussian_calibrated_requires_delta(self):
        with pytest.raises(ConfigurationError):
            NoiseSpec(kind=NoiseKind.GAUSSIAN, epsilon=0.2, scale_mode=ScaleMode.CALIBRATED)

    def test_fixed_scale_positive(self):
        with pytest.raises(ConfigurationError):
            NoiseSpec(kind=NoiseKind.LAPLACE, scale_mode=ScaleMode.FIXED, scale=0.0)

    def test_laplace_ignores_delta(self):
        spec = NoiseSpec(kind=NoiseKind.LAPLACE, epsilon=0.1, delta=0.5,
                         scale_mode=ScaleMode.CALIBRATED)
        assert spec.norm_order == 1

    def test_gaussian_norm_order(self):
        spec = NoiseSpec(kind=NoiseKind.GAUSSIAN, epsilon=0.2, delta=0.01,
                         scale_mode=ScaleMode.CALIBRATED)
        assert spec.norm_order == 2


class TestSensitivityTracker:
    def make(self, burn_in=0, **kw):
        return SensitivityTracker(n_agents=2, n_resources=2, burn_in_events=burn_in, **kw)

    def test_consecutive_difference(self):
        t = self.make()
        t.note_event(0)
        update_sensitivity(t, 0, 0, 10.00)
        t.note_event(0)
        assert update_sensitivity(t, 0, 0, 8.68) == pytest.approx(1.32)

    def test_first_observation_no_change(self):
        t = self.make()
        t.note_event(1)
        assert update_sensitivity(t, 0, 1, 42.0) == 0.0

    def test_identical_values_no_change(self):
        t = self.make()
        t.note_event(0)
        update_sensitivity(t, 1, 0, 5.0)
        t.note_event(0)
        assert update_sensitivity(t, 1, 0, 5.0) == 0.0

    def test_burn_in_excludes_early_events(self):
        t = self.make(burn_in=3)
        for event, deriv in enumerate([10.0, 2.0, 9.0], start=1):
            t.note_event(0)
            update_sensitivity(t, 0, 0, deriv)
        assert t.current(0) == pytest.approx(7.0)  # only the event-3 diff counted

    def test_monotone_non_decreasing(self):
        t = self.make()
        rng = np.random.default_rng(2)
        prev = 0.0
        for deriv in rng.uniform(0, 50, size=100):
            t.note_event(0)
            cur = update_sensitivity(t, 0, 0, float(deriv))
            assert cur >= prev
            prev = cur

    def test_shared_max_across_agents(self):
        t = self.make()
        t.note_event(0)
        update_sensitivity(t, 0, 0, 10.0)
        update_sensitivity(t, 1, 0, 3.0)
        t.note_event(0)
        update_sensitivity(t, 0, 0, 9.5)
        assert update_sensitivity(t, 1, 0, 8.0) == pytest.approx(5.0)

    def test_per_agent_mode(self):
        t = self.make(per_agent=True)
        t.note_event(0)
        update_sensitivity(t, 0, 0, 10.0)
        update_sensitivity(t, 1, 0, 3.0)
        t.note_event(0)
        update_sensitivity(t, 0, 0, 9.0)
        update_sensitivity(t, 1, 0, 8.0)
        assert t.running_max[0, 0] == pytest.approx(1.0)
        assert t.running_max[1, 0] == pytest.approx(5.0)

    def test_vectorized_matches_scalar(self):
        a, b = self.make(), self.make()
        rng = np.random.default_rng(9)
        for _ in range(20):
            derivs = rng.uniform(0, 30, size=2)
            a.note_event(0)
            b.note_event(0)
            for i in range(2):
                update_sensitivity(a, i, 0, float(derivs[i]))
            b.update_all(0, derivs)
            assert a.current(0) == b.current(0)

    def test_non_finite_rejected(self):
        t = self.make()
        t.note_event(0)
        with pytest.raises(NumericError):
            update_sensitivity(t, 0, 0, float("nan"))
        with pytest.raises(NumericError):
            t.update_all(0, np.array([1.0, float("inf")]))


class TestEmpiricalPrivacy:
    def test_laplace_ratio_bounded(self):
        r = empirical_dp_ratio(NoiseKind.LAPLACE, 2.0, 1.0, bins=8,
                               samples=10 ** 6, rng=np.random.default_rng(2))
        assert r <= 0.5 * 1.10

    def test_deterministic_mechanism_unbounded(self):
        assert empirical_dp_ratio(NoiseKind.NONE, 0.0, 1.0, bins=8, samples=10 ** 5) == math.inf

    def test_identical_inputs_near_zero(self):
        assert empirical_dp_ratio(NoiseKind.LAPLACE, 0.5, 0.0, bins=8, samples=10 ** 5) == 0.0

    def test_requires_enough_samples(self):
        with pytest.raises(ConfigurationError):
            empirical_dp_ratio(NoiseKind.LAPLACE, 1.0, 1.0, bins=8, samples=10)

    def test_gaussian_violation_mass_small(self):
        sigma = gaussian_sigma(1.0, 0.5, 0.01)
        frac = empirical_dp_violation_fraction(
            NoiseKind.GAUSSIAN, sigma, 1.0, 0.5, bins=80,
            samples=2 * 10 ** 5, rng=np.random.default_rng(4),
        )
        assert frac <= 0.01 + 0.005

    def test_none_kind_violates_fully(self):
        assert empirical_dp_violation_fraction(NoiseKind.NONE, 0.0, 1.0, 0.5,
                                               bins=10, samples=1000) == 1.0
