from __future__ import annotations
from dataclasses import dataclass
import logging
import math
from typing import Optional, Union

import numpy as np
from scipy import special

from ehsense.logger import core as logger_core
from ehsense.model.errors import ValidationError, check_probability

verbose_logger = logging.getLogger('verbose')

INFINITE_CAPACITY: Optional[int] = None
SELF_LOOP_TOLERANCE: float = 1e-15
NULL_RECURRENCE_RTOL: float = 1e-12

RealOrArray = Union[float, np.ndarray]


@dataclass(frozen=True)
class EnergySensorConfig:
    theta: float
    harvest_prob: float
    capacity: Optional[int] = INFINITE_CAPACITY

    def __post_init__(self) -> None:
        check_probability('harvest_prob', self.harvest_prob)
        if self.capacity is not None and (int(self.capacity) != self.capacity or self.capacity < 1):
            raise ValidationError(f"Battery capacity must be a positive integer, got {self.capacity!r}.")
        if math.isnan(self.theta):
            raise ValidationError("Threshold must be a number.")

    @property
    def finite(self) -> bool:
        return self.capacity is not None


@dataclass(frozen=True)
class BirthDeathChain:
    lambda0: float
    lambda_tail: float
    mu_tail: float
    capacity: Optional[int] = INFINITE_CAPACITY

    def __post_init__(self) -> None:
        check_probability('lambda0', self.lambda0)
        check_probability('lambda_tail', self.lambda_tail)
        check_probability('mu_tail', self.mu_tail)
        if self.lambda_tail + self.mu_tail > 1.0 + SELF_LOOP_TOLERANCE:
            raise ValidationError("Birth and death probabilities of a state must not exceed 1 in total.")
        if self.capacity is not None and self.capacity < 1:
            raise ValidationError(f"Battery capacity must be a positive integer, got {self.capacity!r}.")

    def birth(self, k: int) -> float:
        if self.capacity is not None and k >= self.capacity:
            return 0.0
        return self.lambda0 if k == 0 else self.lambda_tail

    def death(self, k: int) -> float:
        return 0.0 if k == 0 else self.mu_tail

    def transition_prob(self, i: int, j: int) -> float:
        """One-step probability p_{i,j} of moving the battery from i to j packets."""
        if j == i + 1:
            return self.birth(i)
        if j == i - 1:
            return self.death(i)
        if j == i:
            return 1.0 - self.birth(i) - self.death(i)
        return 0.0

    def transition_matrix(self) -> np.ndarray:
        if self.capacity is None:
            raise ValidationError("A dense transition matrix needs a finite capacity.")
        size = self.capacity + 1
        matrix = np.zeros((size, size))
        for i in range(size):
            for j in (i - 1, i, i + 1):
                if 0 <= j < size:
                    matrix[i, j] = self.transition_prob(i, j)
        return matrix


@dataclass(frozen=True)
class BatterySteadyState:
    depletion_prob: float
    distribution: Optional[tuple[float, ...]] = None
    capacity_series: Optional[float] = None
    null_recurrent: bool = False

    def __post_init__(self) -> None:
        check_probability('depletion_prob', self.depletion_prob)


def build_chain(config: EnergySensorConfig, transmit_prob: float) -> BirthDeathChain:
    check_probability('transmit_prob', transmit_prob)
    p_e = config.harvest_prob
    return BirthDeathChain(
        lambda0=p_e,
        lambda_tail=(1.0 - transmit_prob) * p_e,
        mu_tail=transmit_prob * (1.0 - p_e),
        capacity=config.capacity,
    )


def depletion_infinite(p_e: RealOrArray, transmit_prob: RealOrArray) -> RealOrArray:
    """Closed-form steady-state depletion probability of an unlimited battery."""
    harvest = np.asarray(p_e, dtype=float)
    demand = np.asarray(transmit_prob, dtype=float)
    if np.any((harvest < 0.0) | (harvest > 1.0)) or np.any((demand < 0.0) | (demand > 1.0)):
        raise ValidationError("Harvest and transmit probabilities must lie in [0, 1].")
    charging = harvest >= demand
    ratio = harvest / np.where(charging, 1.0, demand)
    depletion = np.where(charging, 0.0, 1.0 - ratio)
    return float(depletion) if depletion.ndim == 0 else depletion


def capacity_series(chain: BirthDeathChain) -> float:
    """Lambda, the sum over k >= 1 of lambda_0 ... lambda_{k-1} / (mu_1 ... mu_k)."""
    if chain.lambda0 == 0.0:
        return 0.0
    if chain.lambda_tail >= chain.mu_tail:
        return math.inf
    return chain.lambda0 / (chain.mu_tail - chain.lambda_tail)


def steady_state_infinite(config: EnergySensorConfig, transmit_prob: float) -> BatterySteadyState:
    chain = build_chain(config, transmit_prob)
    null_recurrent = math.isclose(config.harvest_prob, transmit_prob, rel_tol=NULL_RECURRENCE_RTOL)
    if null_recurrent:
        verbose_logger.warning(
            f"Harvest probability {config.harvest_prob} equals the transmit probability; "
            f"the battery chain is null-recurrent and has no proper stationary distribution."
        )
        NullRecurrentChainReport(config.harvest_prob, transmit_prob).log(logging.WARNING)
    return BatterySteadyState(
        depletion_prob=depletion_infinite(config.harvest_prob, transmit_prob),
        capacity_series=capacity_series(chain),
        null_recurrent=null_recurrent,
    )


def stationary_finite(chain: BirthDeathChain) -> BatterySteadyState:
    """
    Stationary distribution of a finite battery through the cut-balance
    product form p_{k+1} = p_k * lambda_k / mu_{k+1}, accumulated in log space.
    """
    if chain.capacity is None:
        raise ValidationError("The product-form solver needs a finite capacity.")
    size = chain.capacity + 1
    distribution = np.zeros(size)
    if chain.lambda0 == 0.0:
        distribution[0] = 1.0
    elif chain.mu_tail == 0.0:
        distribution[chain.capacity if chain.lambda_tail > 0.0 else 1] = 1.0
    else:
        births = np.full(size - 1, chain.lambda_tail)
        births[0] = chain.lambda0
        with np.errstate(divide='ignore'):
            log_ratios = np.log(births) - math.log(chain.mu_tail)
        log_weights = np.concatenate(([0.0], np.cumsum(log_ratios)))
        distribution = np.exp(log_weights - special.logsumexp(log_weights))
    depletion = float(min(max(distribution[0], 0.0), 1.0))
    return BatterySteadyState(
        depletion_prob=depletion,
        distribution=tuple(float(p) for p in distribution),
        capacity_series=(1.0 - depletion) / depletion if depletion > 0.0 else math.inf,
    )


def steady_state(config: EnergySensorConfig, transmit_prob: float) -> BatterySteadyState:
    if config.finite:
        return stationary_finite(build_chain(config, transmit_prob))
    return steady_state_infinite(config, transmit_prob)


def depletion_prob(config: EnergySensorConfig, transmit_prob: RealOrArray) -> RealOrArray:
    """Depletion probability for either battery kind; vectorized over transmit_prob."""
    if not config.finite:
        return depletion_infinite(config.harvest_prob, transmit_prob)
    demand = np.asarray(transmit_prob, dtype=float)
    depletion = np.array([stationary_finite(build_chain(config, float(p))).depletion_prob for p in demand.ravel()])
    return float(depletion[0]) if demand.ndim == 0 else depletion.reshape(demand.shape)


@dataclass(frozen=True)
class NullRecurrentChainReport(logger_core.LoggingMixin):
    harvest_prob: float
    transmit_prob: float
