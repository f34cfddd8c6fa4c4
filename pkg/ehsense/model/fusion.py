from __future__ import annotations
from dataclasses import dataclass
import itertools
import logging
import math
from typing import Sequence

import numpy as np

from ehsense.logger import core as logger_core
from ehsense.model import batteries
from ehsense.model import metrics
from ehsense.model import observations
from ehsense.model.errors import DomainError, ValidationError

verbose_logger = logging.getLogger('verbose')


@dataclass(frozen=True)
class NetworkConfig:
    num_sensors: int
    prior_h1: float

    def __post_init__(self) -> None:
        if int(self.num_sensors) != self.num_sensors or self.num_sensors < 1:
            raise ValidationError(f"A network needs at least one sensor, got {self.num_sensors!r}.")
        if not 0.0 < self.prior_h1 < 1.0:
            raise ValidationError(f"The prior of H=1 must lie in (0, 1), got {self.prior_h1!r}.")

    @property
    def priors(self) -> observations.Priors:
        return observations.Priors.from_prior_h1(self.prior_h1)


@dataclass(frozen=True)
class DetectionReport(logger_core.LoggingMixin):
    theta: float
    depletion_prob: float
    pmf: metrics.SensorConditionalPMF
    per_sensor_distances: list[float]
    total_distance: float
    error_probability: float
    error_bound: float


def count_likelihoods(num_sensors: int, prob_one: float, prob_zero: float) -> list[float]:
    """P(k ones | h) for k = 0..N; binomial coefficients stay exact integers until the product."""
    return [
        float(math.comb(num_sensors, k)) * prob_one ** k * prob_zero ** (num_sensors - k)
        for k in range(num_sensors + 1)
    ]


def map_error_probability(net: NetworkConfig, pmf: metrics.SensorConditionalPMF) -> float:
    """
    Exact MAP error probability of N identical sensors.

    The number of ones is a sufficient statistic, so the sum over 2^N message
    vectors collapses to N + 1 counts. 1 - sum max(...) is evaluated as the
    equivalent sum of min(...) terms.
    """
    pi0, pi1 = net.priors
    likelihoods_h0 = count_likelihoods(net.num_sensors, pmf.prob_one_given_h0, pmf.prob_zero_given_h0)
    likelihoods_h1 = count_likelihoods(net.num_sensors, pmf.prob_one_given_h1, pmf.prob_zero_given_h1)
    return math.fsum(min(pi0 * l0, pi1 * l1) for l0, l1 in zip(likelihoods_h0, likelihoods_h1))


def map_error_probability_brute_force(
        priors: tuple[float, float],
        pmfs: Sequence[metrics.SensorConditionalPMF],
) -> float:
    pi0, pi1 = observations.validate_priors(priors)
    terms = []
    for messages in itertools.product((0, 1), repeat=len(pmfs)):
        likelihood_h0 = math.prod(pmf.prob(u, 0) for u, pmf in zip(messages, pmfs))
        likelihood_h1 = math.prod(pmf.prob(u, 1) for u, pmf in zip(messages, pmfs))
        terms.append(min(pi0 * likelihood_h0, pi1 * likelihood_h1))
    return math.fsum(terms)


def map_decision(net: NetworkConfig, pmf: metrics.SensorConditionalPMF, ones_count: int) -> int:
    """MAP estimate of H given the number of received ones; equal posteriors decide 0."""
    if int(ones_count) != ones_count or not 0 <= ones_count <= net.num_sensors:
        raise DomainError(f"Count of ones must lie in [0, {net.num_sensors}], got {ones_count!r}.")
    pi0, pi1 = net.priors
    n, k = net.num_sensors, int(ones_count)
    posterior_h0 = pi0 * pmf.prob_one(0) ** k * pmf.prob_zero(0) ** (n - k)
    posterior_h1 = pi1 * pmf.prob_one(1) ** k * pmf.prob_zero(1) ** (n - k)
    return 1 if posterior_h1 > posterior_h0 else 0


def decision_table(net: NetworkConfig, pmf: metrics.SensorConditionalPMF) -> np.ndarray:
    return np.array([map_decision(net, pmf, k) for k in range(net.num_sensors + 1)], dtype=np.int8)


def evaluate_network(
        model: observations.ObservationModel,
        net: NetworkConfig,
        config: batteries.EnergySensorConfig,
) -> DetectionReport:
    priors = net.priors
    transmit_prob = float(observations.mixed_transmit_prob(model, priors, config.theta))
    depletion = batteries.steady_state(config, transmit_prob).depletion_prob
    pmf = metrics.pmf_from_depletion(model, config.theta, depletion)
    per_sensor = [metrics.bhattacharyya_single(pmf)] * net.num_sensors
    total = metrics.bhattacharyya_total(per_sensor)
    report = DetectionReport(
        theta=config.theta,
        depletion_prob=depletion,
        pmf=pmf,
        per_sensor_distances=per_sensor,
        total_distance=total,
        error_probability=map_error_probability(net, pmf),
        error_bound=metrics.error_bound(total, priors),
    )
    verbose_logger.debug(f"Network of {net.num_sensors} sensors at theta={config.theta}: "
                         f"error {report.error_probability}, bound {report.error_bound}.")
    return report
