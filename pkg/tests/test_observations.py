import math

import numpy as np
import pytest
from scipy import integrate
from scipy import special
from scipy import stats

from ehsense.model import observations
from ehsense.model.errors import DomainError, ValidationError
from ehsense.model.observations import ObservationModel, marcum_q1, mixed_transmit_prob

Q1_ONE_ONE = 0.7328798


class TestDensity:
    """Rayleigh and Rician densities."""

    def test_vanishes_at_origin(self):
        assert ObservationModel(3.0).pdf(0, 0.0) == 0.0
        assert ObservationModel(3.0).pdf(1, 0.0) == 0.0

    def test_rayleigh_value(self):
        assert ObservationModel(2.0).pdf(0, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-12)

    def test_zero_noncentrality_degenerates_to_rayleigh(self):
        model = ObservationModel(0.0)
        assert model.pdf(1, 1.3) == pytest.approx(model.pdf(0, 1.3), abs=1e-15)

    def test_rician_matches_closed_form(self):
        model = ObservationModel(2.5)
        x = np.linspace(0.1, 8.0, 50)
        expected = x * np.exp(-(x ** 2 + 2.5 ** 2) / 2.0) * special.i0(2.5 * x)
        np.testing.assert_allclose(model.pdf(1, x), expected, rtol=1e-12)

    def test_large_arguments_stay_finite(self):
        density = ObservationModel(300.0).pdf(1, np.array([290.0, 300.0, 310.0]))
        assert np.all(np.isfinite(density))
        assert density[1] > density[0] > 0.0

    def test_negative_observation_is_rejected(self):
        with pytest.raises(DomainError):
            ObservationModel(1.0).pdf(0, -0.1)

    def test_invalid_hypothesis_is_rejected(self):
        with pytest.raises(DomainError):
            ObservationModel(1.0).pdf(2, 1.0)

    @pytest.mark.parametrize('noncentrality, scale', [(-1.0, 1.0), (1.0, 0.0)])
    def test_invalid_parameters(self, noncentrality, scale):
        with pytest.raises(ValidationError):
            ObservationModel(noncentrality, scale_h0=scale)


class TestMarcumQ:
    """First-order Marcum Q function against independent oracles."""

    def test_reference_value(self):
        assert marcum_q1(1.0, 1.0) == pytest.approx(Q1_ONE_ONE, abs=1e-6)

    def test_zero_threshold(self):
        assert marcum_q1(5.0, 0.0) == 1.0

    def test_zero_noncentrality_is_rayleigh_tail(self):
        b = np.linspace(0.0, 6.0, 25)
        np.testing.assert_allclose(marcum_q1(0.0, b), np.exp(-b ** 2 / 2.0), atol=1e-15)

    @pytest.mark.parametrize('a', [0.5, 3.0, 17.0, 300.0])
    def test_diagonal_identity(self, a):
        """Q1(a, a) = (1 + exp(-a^2) I0(a^2)) / 2, also where the quadrature fallback is taken."""
        assert marcum_q1(a, a) == pytest.approx(0.5 * (1.0 + special.i0e(a * a)), abs=1e-9)

    def test_noncentral_chi_square(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(0.0, 8.0, 100)
        b = rng.uniform(0.0, 10.0, 100)
        expected = stats.ncx2.sf(b ** 2, 2, a ** 2)
        np.testing.assert_allclose(marcum_q1(a, b), expected, atol=1e-8)

    def test_series_matches_quadrature(self):
        rng = np.random.default_rng(2024)
        for s, theta in zip(rng.uniform(0.0, 40.0, 200), rng.uniform(0.0, 10.0, 200)):
            model = ObservationModel(float(s))
            assert model.tail_prob(1, theta) == pytest.approx(model.tail_prob_quadrature(1, theta), abs=1e-8)

    def test_vectorized_matches_scalar(self):
        b = np.linspace(0.0, 12.0, 40)
        vectorized = marcum_q1(6.0, b)
        scalars = [marcum_q1(6.0, float(value)) for value in b]
        np.testing.assert_allclose(vectorized, scalars, atol=1e-13)

    def test_negative_first_argument_is_rejected(self):
        with pytest.raises(DomainError):
            marcum_q1(-1.0, 1.0)


class TestTailProbability:
    """Detection and false-alarm probabilities."""

    def test_whole_support(self):
        assert ObservationModel(2.0).tail_prob(0, 0.0) == 1.0
        assert ObservationModel(2.0).tail_prob(1, -3.0) == 1.0

    def test_rician_reference(self, unit_rician):
        assert unit_rician.tail_prob(1, 1.0) == pytest.approx(Q1_ONE_ONE, abs=1e-6)

    @pytest.mark.parametrize('theta', [0.3, 1.0, 2.7])
    def test_zero_noncentrality(self, theta):
        assert ObservationModel(0.0).tail_prob(1, theta) == pytest.approx(math.exp(-theta ** 2 / 2.0), abs=1e-15)

    def test_nonincreasing_in_threshold(self):
        theta = np.linspace(0.0, 15.0, 500)
        for h in observations.HYPOTHESES:
            tails = ObservationModel(4.0).tail_prob(h, theta)
            assert np.all(np.diff(tails) <= 1e-15)

    def test_detection_dominates_false_alarm(self):
        theta = np.linspace(0.0, 10.0, 200)
        model = ObservationModel(2.0)
        assert np.all(model.tail_prob(1, theta) >= model.tail_prob(0, theta) - 1e-15)

    def test_nondecreasing_in_noncentrality(self):
        tails = [ObservationModel(s).tail_prob(1, 2.0) for s in np.linspace(0.0, 10.0, 41)]
        assert np.all(np.diff(tails) >= -1e-15)

    @pytest.mark.parametrize('h', observations.HYPOTHESES)
    def test_derivative_is_density(self, h):
        model = ObservationModel(2.0)
        theta = np.linspace(0.1, 5.0, 50)
        step = 1e-5
        slope = (model.tail_prob(h, theta - step) - model.tail_prob(h, theta + step)) / (2.0 * step)
        np.testing.assert_allclose(slope, model.pdf(h, theta), atol=1e-6)

    def test_cdf_complements_tail(self):
        model = ObservationModel(1.5, scale_h1=1.3)
        x = np.linspace(0.0, 6.0, 30)
        for h in observations.HYPOTHESES:
            np.testing.assert_allclose(model.cdf(h, x) + model.tail_prob(h, x), 1.0, atol=1e-14)

    def test_scaled_rayleigh(self):
        model = ObservationModel(0.0, scale_h0=2.0)
        assert model.tail_prob(0, 2.0) == pytest.approx(math.exp(-0.5), abs=1e-15)

    @pytest.mark.parametrize('theta', [0.2, 1.0, 2.5, 5.0])
    def test_rayleigh_quadrature_oracle(self, theta):
        model = ObservationModel(3.0, scale_h0=1.4)
        assert model.tail_prob_quadrature(0, theta) == pytest.approx(model.tail_prob(0, theta), abs=1e-10)


class TestMissProbability:
    """Lower tail of the Rician observation, which must not be formed as 1 - tail."""

    @pytest.mark.parametrize('s, theta', [(20.0, 10.0), (30.0, 12.0), (40.0, 20.0), (3.0, 0.5)])
    def test_matches_quadrature_of_density(self, s, theta):
        model = ObservationModel(s)
        expected, _ = integrate.quad(lambda x: float(model.pdf(1, x)), 0.0, theta, epsabs=0.0, epsrel=1e-11, limit=200)
        assert expected > 0.0
        assert model.cdf(1, theta) == pytest.approx(expected, rel=1e-6)

    def test_far_below_rounding_of_one(self):
        assert 1e-25 < ObservationModel(20.0).cdf(1, 10.0) < 1e-22
        assert 0.0 < ObservationModel(40.0).cdf(1, 20.0) < 1e-85

    def test_nonincreasing_in_noncentrality(self):
        misses = np.array([ObservationModel(s).cdf(1, 4.0) for s in np.linspace(5.0, 30.0, 26)])
        assert np.all(misses > 0.0)
        assert np.all(np.diff(np.log(misses)) < 0.0)

    def test_complement_of_marcum(self):
        a = np.array([0.5, 2.0, 6.0])
        b = np.array([1.0, 1.5, 7.0])
        np.testing.assert_allclose(observations.marcum_q1_complement(a, b) + marcum_q1(a, b), 1.0, atol=1e-13)
        assert observations.marcum_q1_complement(0.0, 1.0) == pytest.approx(-math.expm1(-0.5), abs=1e-16)


class TestSampler:
    """Inverse-CDF sampling of observations."""

    def test_rayleigh_closed_form(self):
        u = np.array([1.0, 0.5, 1e-3])
        x = ObservationModel(2.0).sample(0, u)
        np.testing.assert_allclose(np.exp(-x ** 2 / 2.0), u, rtol=1e-12)

    @pytest.mark.parametrize('s', [0.5, 3.0, 12.0])
    def test_rician_inverts_tail(self, s):
        model = ObservationModel(s)
        u = np.random.default_rng(11).uniform(1e-6, 1.0, 300)
        x = model.sample(1, u)
        np.testing.assert_allclose(model.tail_prob(1, x), u, atol=1e-8)

    def test_sample_mean(self):
        model = ObservationModel(3.0)
        u = 1.0 - np.random.default_rng(5).random(20_000)
        x = model.sample(1, u)
        expected = math.sqrt(math.pi / 2.0) * special.hyp1f1(-0.5, 1.0, -4.5)
        assert x.mean() == pytest.approx(expected, abs=0.05)

    def test_uniforms_outside_support_are_rejected(self):
        with pytest.raises(DomainError):
            ObservationModel(1.0).sample(1, np.array([0.0, 0.5]))


class TestMixedTransmitProbability:
    """Unconstrained probability that the observation clears the threshold."""

    def test_degenerate_prior(self):
        model = ObservationModel(2.0)
        assert mixed_transmit_prob(model, (1.0, 0.0), 1.4) == pytest.approx(model.tail_prob(0, 1.4), abs=1e-15)

    def test_empty_support(self):
        assert mixed_transmit_prob(ObservationModel(2.0), (0.5, 0.5), 60.0) == pytest.approx(0.0, abs=1e-15)

    def test_reference_value(self, unit_rician):
        expected = 0.5 * math.exp(-0.5) + 0.5 * Q1_ONE_ONE
        assert mixed_transmit_prob(unit_rician, (0.5, 0.5), 1.0) == pytest.approx(expected, abs=1e-6)

    def test_priors_must_sum_to_one(self, unit_rician):
        with pytest.raises(ValidationError):
            mixed_transmit_prob(unit_rician, (0.5, 0.6), 1.0)
