import math

import numpy as np
import pytest

from ehsense.model import batteries
from ehsense.model.batteries import BirthDeathChain, EnergySensorConfig
from ehsense.model.errors import ValidationError


class TestChainParameters:
    """Birth and death probabilities of the battery chain."""

    def test_equal_harvest_and_demand(self):
        chain = batteries.build_chain(EnergySensorConfig(1.0, 0.5), 0.5)
        assert (chain.lambda0, chain.lambda_tail, chain.mu_tail) == (0.5, 0.25, 0.25)

    def test_never_harvests(self):
        chain = batteries.build_chain(EnergySensorConfig(1.0, 0.0), 0.8)
        assert chain.lambda0 == 0.0
        assert chain.lambda_tail == 0.0

    def test_reference_values(self):
        chain = batteries.build_chain(EnergySensorConfig(1.0, 0.3), 0.6)
        assert chain.lambda_tail == pytest.approx(0.12, abs=1e-15)
        assert chain.mu_tail == pytest.approx(0.42, abs=1e-15)

    def test_empty_battery_cannot_lose_energy(self):
        chain = batteries.build_chain(EnergySensorConfig(1.0, 0.3, capacity=3), 0.6)
        assert chain.death(0) == 0.0
        assert chain.birth(3) == 0.0
        assert chain.transition_prob(0, 0) == pytest.approx(0.7)
        assert chain.transition_prob(3, 3) == pytest.approx(1.0 - chain.mu_tail)
        assert chain.transition_prob(1, 3) == 0.0

    def test_transition_rows_sum_to_one(self):
        chain = batteries.build_chain(EnergySensorConfig(1.0, 0.35, capacity=6), 0.55)
        np.testing.assert_allclose(chain.transition_matrix().sum(axis=1), 1.0, atol=1e-15)

    def test_transition_matrix_needs_finite_capacity(self):
        with pytest.raises(ValidationError):
            batteries.build_chain(EnergySensorConfig(1.0, 0.3), 0.6).transition_matrix()

    def test_harvest_probability_is_checked(self):
        with pytest.raises(ValidationError):
            EnergySensorConfig(1.0, 1.2)

    def test_transmit_probability_is_checked(self):
        with pytest.raises(ValidationError):
            batteries.build_chain(EnergySensorConfig(1.0, 0.5), -0.1)

    @pytest.mark.parametrize('capacity', [0, -3, 2.5])
    def test_capacity_must_be_positive_integer(self, capacity):
        with pytest.raises(ValidationError):
            EnergySensorConfig(1.0, 0.5, capacity=capacity)


class TestInfiniteDepletion:
    """Closed-form depletion probability of an unlimited battery."""

    @pytest.mark.parametrize('harvest, transmit, expected', [
        (0.5, 0.25, 0.0),
        (0.2, 0.5, 0.6),
        (0.0, 0.7, 1.0),
        (0.4, 0.4, 0.0),
    ])
    def test_reference_values(self, harvest, transmit, expected):
        assert batteries.depletion_infinite(harvest, transmit) == pytest.approx(expected, abs=1e-15)

    def test_never_wanting_to_transmit(self):
        assert batteries.depletion_infinite(0.0, 0.0) == 0.0

    def test_vectorized(self):
        depletion = batteries.depletion_infinite(0.3, np.array([0.1, 0.3, 0.6, 1.0]))
        np.testing.assert_allclose(depletion, [0.0, 0.0, 0.5, 0.7], atol=1e-15)

    def test_nondecreasing_in_demand(self):
        depletion = batteries.depletion_infinite(0.25, np.linspace(0.0, 1.0, 101))
        assert np.all(np.diff(depletion) >= 0.0)

    def test_nonincreasing_in_harvest(self):
        depletion = batteries.depletion_infinite(np.linspace(0.0, 1.0, 101), 0.6)
        assert np.all(np.diff(depletion) <= 0.0)
        assert depletion[0] == 1.0 and depletion[-1] == 0.0

    def test_out_of_range_is_rejected(self):
        with pytest.raises(ValidationError):
            batteries.depletion_infinite(0.5, 1.5)

    def test_null_recurrent_chain_is_flagged(self):
        steady = batteries.steady_state_infinite(EnergySensorConfig(1.0, 0.5), 0.5)
        assert steady.null_recurrent
        assert steady.depletion_prob == 0.0
        assert steady.capacity_series == math.inf

    def test_positive_recurrent_series(self):
        steady = batteries.steady_state_infinite(EnergySensorConfig(1.0, 0.2), 0.5)
        assert not steady.null_recurrent
        assert steady.depletion_prob == pytest.approx(1.0 / (1.0 + steady.capacity_series), abs=1e-14)


class TestFiniteStationary:
    """Product-form stationary distribution of a finite battery."""

    def test_two_state_chain(self):
        steady = batteries.stationary_finite(BirthDeathChain(0.5, 0.25, 0.25, capacity=1))
        assert steady.depletion_prob == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert steady.distribution == pytest.approx((1.0 / 3.0, 2.0 / 3.0), abs=1e-15)

    def test_chain_stuck_below_two(self):
        """With lambda_tail = 0 the mass lives on states 0 and 1."""
        steady = batteries.stationary_finite(BirthDeathChain(0.5, 0.0, 0.5, capacity=5))
        assert steady.depletion_prob == pytest.approx(0.5, abs=1e-15)
        assert sum(steady.distribution[2:]) == 0.0

    def test_never_harvests(self):
        steady = batteries.stationary_finite(BirthDeathChain(0.0, 0.0, 0.4, capacity=5))
        assert steady.depletion_prob == 1.0

    def test_never_spends(self):
        steady = batteries.stationary_finite(BirthDeathChain(0.4, 0.4, 0.0, capacity=5))
        assert steady.depletion_prob == 0.0
        assert steady.distribution[-1] == 1.0

    @pytest.mark.parametrize('harvest, transmit', [(0.3, 0.6), (0.6, 0.3), (0.4, 0.4), (0.9, 0.95)])
    def test_flow_balance(self, harvest, transmit):
        chain = batteries.build_chain(EnergySensorConfig(1.0, harvest, capacity=12), transmit)
        distribution = np.array(batteries.stationary_finite(chain).distribution)
        assert distribution.sum() == pytest.approx(1.0, abs=1e-14)
        for k in range(12):
            assert distribution[k] * chain.birth(k) == pytest.approx(distribution[k + 1] * chain.death(k + 1),
                                                                       abs=1e-15)

    @pytest.mark.parametrize('harvest, transmit', [(0.3, 0.6), (0.7, 0.2)])
    def test_invariant_under_transitions(self, harvest, transmit):
        chain = batteries.build_chain(EnergySensorConfig(1.0, harvest, capacity=9), transmit)
        distribution = np.array(batteries.stationary_finite(chain).distribution)
        np.testing.assert_allclose(distribution @ chain.transition_matrix(), distribution, atol=1e-14)

    def test_large_capacity_does_not_overflow(self):
        chain = batteries.build_chain(EnergySensorConfig(1.0, 0.9, capacity=50_000), 0.1)
        steady = batteries.stationary_finite(chain)
        assert np.all(np.isfinite(steady.distribution))
        assert steady.depletion_prob == pytest.approx(0.0, abs=1e-300)

    @pytest.mark.parametrize('harvest, transmit', [(0.3, 0.5), (0.5, 0.3)])
    def test_converges_monotonically_with_capacity(self, harvest, transmit):
        depletion = np.array([
            batteries.stationary_finite(batteries.build_chain(EnergySensorConfig(1.0, harvest, capacity=c), transmit))
            .depletion_prob
            for c in range(1, 200)
        ])
        assert np.all(np.diff(depletion) <= 1e-15)
        assert depletion[-1] == pytest.approx(batteries.depletion_infinite(harvest, transmit), abs=1e-10)

    def test_truncation_reference(self):
        config = EnergySensorConfig(1.0, 0.2, capacity=10_000)
        assert batteries.depletion_prob(config, 0.5) == pytest.approx(0.6, abs=1e-6)

    def test_truncation_converges_to_closed_form(self):
        for transmit in np.linspace(0.1, 1.0, 10):
            for harvest in np.linspace(0.02, 0.9, 12) * transmit:
                if harvest / transmit > 0.9:
                    continue
                finite = batteries.depletion_prob(EnergySensorConfig(1.0, harvest, capacity=10_000), transmit)
                assert finite == pytest.approx(batteries.depletion_infinite(harvest, transmit), abs=1e-6)

    def test_needs_finite_capacity(self):
        with pytest.raises(ValidationError):
            batteries.stationary_finite(BirthDeathChain(0.5, 0.25, 0.25))


class TestDepletionDispatch:
    """depletion_prob over both battery kinds."""

    def test_infinite_matches_closed_form(self):
        config = EnergySensorConfig(1.0, 0.3)
        transmit = np.linspace(0.0, 1.0, 11)
        np.testing.assert_allclose(batteries.depletion_prob(config, transmit),
                                   batteries.depletion_infinite(0.3, transmit))

    def test_finite_vectorized_shape(self):
        config = EnergySensorConfig(1.0, 0.3, capacity=4)
        depletion = batteries.depletion_prob(config, np.array([[0.1, 0.2], [0.5, 0.9]]))
        assert depletion.shape == (2, 2)
        assert depletion[1, 1] > depletion[0, 0]

    def test_finite_battery_depletes_more_often(self):
        transmit = 0.6
        unlimited = batteries.depletion_prob(EnergySensorConfig(1.0, 0.3), transmit)
        small = batteries.depletion_prob(EnergySensorConfig(1.0, 0.3, capacity=2), transmit)
        assert small > unlimited
