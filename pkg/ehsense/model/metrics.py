from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
import itertools
import logging
import math
from typing import Optional, Sequence, Union

import numpy as np

from ehsense.logger import core as logger_core
from ehsense.model import batteries
from ehsense.model import observations
from ehsense.model.errors import ValidationError, check_probability

verbose_logger = logging.getLogger('verbose')

RealOrArray = Union[float, np.ndarray]

GRID_POINTS: int = 2000
GRID_SPAN_SCALES: float = 8.0
REFINE_TOLERANCE: float = 1e-8
REFINED_PEAKS: int = 8
PMF_SUM_TOLERANCE: float = 1e-12
EPSILON: float = float(np.finfo(float).eps)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQUARE = (3.0 - math.sqrt(5.0)) / 2.0


class ThresholdMode(str, Enum):
    ENERGY_ADAPTED = 'energy_adapted'
    UNCONSTRAINED = 'unconstrained'


@dataclass(frozen=True)
class SensorConditionalPMF(logger_core.LoggingMixin):
    """
    P(u|h) of one sensor. The zero-message probabilities default to the
    complements of the one-message ones; callers holding a directly computed
    complement pass it so that values near 1 keep their small side.
    """
    prob_one_given_h0: float
    prob_one_given_h1: float
    prob_zero_given_h0: Optional[float] = None
    prob_zero_given_h1: Optional[float] = None

    def __post_init__(self) -> None:
        check_probability('prob_one_given_h0', self.prob_one_given_h0)
        check_probability('prob_one_given_h1', self.prob_one_given_h1)
        sides = (('prob_zero_given_h0', self.prob_one_given_h0), ('prob_zero_given_h1', self.prob_one_given_h1))
        for name, one in sides:
            zero = getattr(self, name)
            if zero is None:
                object.__setattr__(self, name, 1.0 - one)
                continue
            check_probability(name, zero)
            if abs(zero + one - 1.0) > PMF_SUM_TOLERANCE:
                raise ValidationError(f"Message probabilities must sum to 1, got {one!r} + {zero!r}.")

    def prob_one(self, h: int) -> float:
        return self.prob_one_given_h1 if observations.check_hypothesis(h) == 1 else self.prob_one_given_h0

    def prob_zero(self, h: int) -> float:
        return self.prob_zero_given_h1 if observations.check_hypothesis(h) == 1 else self.prob_zero_given_h0

    def prob(self, u: int, h: int) -> float:
        return self.prob_one(h) if u == 1 else self.prob_zero(h)


@dataclass(frozen=True)
class ThresholdSearchResult(logger_core.LoggingMixin):
    theta_star: float
    objective_value: float
    depletion_at_optimum: float
    mode: str
    degenerate: bool = False
    search_trace: Optional[list[tuple[float, float]]] = field(default=None, repr=False)


def message_probs(
        model: observations.ObservationModel,
        h: int,
        theta: RealOrArray,
        depletion: RealOrArray,
) -> tuple[RealOrArray, RealOrArray]:
    """(P(u=1|h), P(u=0|h)); the zero side is the miss probability plus the blocked transmissions."""
    tail = np.asarray(model.tail_prob(h, theta))
    below = np.asarray(model.cdf(h, theta))
    return tail * (1.0 - depletion), below + tail * depletion


def pmf_from_depletion(model: observations.ObservationModel, theta: float, depletion: float) -> SensorConditionalPMF:
    one_h0, zero_h0 = message_probs(model, 0, theta, depletion)
    one_h1, zero_h1 = message_probs(model, 1, theta, depletion)
    return SensorConditionalPMF(float(one_h0), float(one_h1), float(zero_h0), float(zero_h1))


def sensor_pmf(
        model: observations.ObservationModel,
        priors: tuple[float, float],
        config: batteries.EnergySensorConfig,
) -> SensorConditionalPMF:
    """P(u=1|h) = P_h(X; theta) * (1 - p0); the battery state is independent of H and X."""
    transmit_prob = float(observations.mixed_transmit_prob(model, priors, config.theta))
    steady = batteries.steady_state(config, transmit_prob)
    return pmf_from_depletion(model, config.theta, steady.depletion_prob)


def _distance(one_h0: RealOrArray, one_h1: RealOrArray, zero_h0: RealOrArray, zero_h1: RealOrArray) -> RealOrArray:
    q0, q1, r0, r1 = (np.clip(np.asarray(p, dtype=float), 0.0, 1.0) for p in (one_h0, one_h1, zero_h0, zero_h1))
    coefficient = np.sqrt(q0 * q1) + np.sqrt(r0 * r1)
    # 1 - coefficient as a sum of squares, for conditionals that nearly coincide
    deficit = 0.5 * ((np.sqrt(q0) - np.sqrt(q1)) ** 2 + (np.sqrt(r0) - np.sqrt(r1)) ** 2)
    with np.errstate(divide='ignore'):
        separated = -np.log(coefficient)
        close = -np.log1p(-np.clip(deficit, 0.0, 1.0 - EPSILON))
    distance = np.where(coefficient < 0.5, separated, close) + 0.0
    return float(distance) if distance.ndim == 0 else distance


def bhattacharyya_single(pmf: SensorConditionalPMF) -> float:
    """Bhattacharyya distance in nats between the two message distributions; inf on perfect separation."""
    return _distance(pmf.prob_one_given_h0, pmf.prob_one_given_h1, pmf.prob_zero_given_h0, pmf.prob_zero_given_h1)


def bhattacharyya_total(per_sensor: Sequence[float]) -> float:
    for distance in per_sensor:
        if distance < 0.0:
            raise ValidationError(f"Bhattacharyya distances are nonnegative, got {distance!r}.")
    return math.fsum(per_sensor) if per_sensor else 0.0


def bhattacharyya_brute_force(pmfs: Sequence[SensorConditionalPMF]) -> float:
    """Total distance by summing the coefficient over all 2^N message vectors."""
    terms = []
    for messages in itertools.product((0, 1), repeat=len(pmfs)):
        likelihood_h0 = math.prod(pmf.prob(u, 0) for u, pmf in zip(messages, pmfs))
        likelihood_h1 = math.prod(pmf.prob(u, 1) for u, pmf in zip(messages, pmfs))
        terms.append(math.sqrt(likelihood_h0 * likelihood_h1))
    coefficient = math.fsum(terms)
    return -math.log(coefficient) + 0.0 if coefficient > 0.0 else math.inf


def error_bound(total_b: float, priors: tuple[float, float]) -> float:
    if total_b < 0.0:
        raise ValidationError(f"Bhattacharyya distance must be nonnegative, got {total_b!r}.")
    pi0, pi1 = observations.validate_priors(priors)
    return math.sqrt(pi0 * pi1) * math.exp(-total_b)


def threshold_objective(
        model: observations.ObservationModel,
        priors: tuple[float, float],
        config: batteries.EnergySensorConfig,
        mode: ThresholdMode,
        theta: RealOrArray,
) -> RealOrArray:
    """Single-sensor Bhattacharyya distance as a function of the threshold."""
    priors = observations.validate_priors(priors)
    if ThresholdMode(mode) == ThresholdMode.UNCONSTRAINED:
        depletion = 0.0
    else:
        transmit_prob = np.asarray(observations.mixed_transmit_prob(model, priors, theta))
        depletion = np.asarray(batteries.depletion_prob(config, transmit_prob))
    one_h0, zero_h0 = message_probs(model, 0, theta, depletion)
    one_h1, zero_h1 = message_probs(model, 1, theta, depletion)
    return _distance(one_h0, one_h1, zero_h0, zero_h1)


def golden_section_max(objective, lower: float, upper: float, tolerance: float = REFINE_TOLERANCE) -> float:
    lower, upper = min(lower, upper), max(lower, upper)
    width = upper - lower
    if width <= tolerance:
        return lower
    steps = int(math.ceil(math.log(tolerance / width) / math.log(INV_PHI)))
    left = lower + INV_PHI_SQUARE * width
    right = lower + INV_PHI * width
    left_value = objective(left)
    right_value = objective(right)
    for _ in range(steps - 1):
        # ties keep the left part of the bracket
        if left_value >= right_value:
            upper = right
            right, right_value = left, left_value
            width *= INV_PHI
            left = lower + INV_PHI_SQUARE * width
            left_value = objective(left)
        else:
            lower = left
            left, left_value = right, right_value
            width *= INV_PHI
            right = lower + INV_PHI * width
            right_value = objective(right)
    return left if left_value >= right_value else right


def optimize_threshold(
        model: observations.ObservationModel,
        priors: tuple[float, float],
        config: batteries.EnergySensorConfig,
        mode: ThresholdMode = ThresholdMode.ENERGY_ADAPTED,
        grid_points: int = GRID_POINTS,
        keep_trace: bool = False,
) -> ThresholdSearchResult:
    """
    Grid search over [0, s + 8 sigma] followed by golden-section refinement
    around the best local maxima of the grid. Ties go to the smaller threshold.
    """
    mode = ThresholdMode(mode)
    priors = observations.validate_priors(priors)

    def objective(theta: float) -> float:
        return float(threshold_objective(model, priors, config, mode, theta))

    upper = model.noncentrality + GRID_SPAN_SCALES * max(model.scale_h0, model.scale_h1)
    grid = np.linspace(0.0, upper, grid_points)
    values = np.asarray(threshold_objective(model, priors, config, mode, grid))
    trace = [(float(t), float(v)) for t, v in zip(grid, values)] if keep_trace else None

    if not np.any(values > 0.0):
        verbose_logger.info(f"Objective vanishes on the whole grid for s={model.noncentrality}, mode {mode.value}.")
        DegenerateObjectiveReport(model.noncentrality, mode.value).log(logging.INFO)
        theta_star = float(grid[0])
        return ThresholdSearchResult(
            theta_star, objective(theta_star), _depletion_at(model, priors, config, mode, theta_star),
            mode.value, degenerate=True, search_trace=trace,
        )

    padded = np.concatenate(([-np.inf], values, [-np.inf]))
    peaks = np.flatnonzero((values >= padded[:-2]) & (values >= padded[2:]))
    peaks = sorted(peaks, key=lambda i: (-values[i], i))[:REFINED_PEAKS]

    theta_star, best_value = None, -math.inf
    for peak in sorted(peaks):
        candidates = [float(grid[peak])]
        bracket_low = float(grid[max(peak - 1, 0)])
        bracket_high = float(grid[min(peak + 1, grid_points - 1)])
        candidates.append(golden_section_max(objective, bracket_low, bracket_high))
        for candidate in candidates:
            value = objective(candidate)
            if value > best_value or (value == best_value and candidate < theta_star):
                theta_star, best_value = candidate, value

    result = ThresholdSearchResult(
        theta_star, objective(theta_star), _depletion_at(model, priors, config, mode, theta_star),
        mode.value, search_trace=trace,
    )
    verbose_logger.debug(f"Threshold {theta_star:.10f} maximizes the {mode.value} objective at s={model.noncentrality}.")
    ThresholdOptimizedReport(model.noncentrality, mode.value, theta_star, result.objective_value).log(logging.DEBUG)
    return result


def _depletion_at(
        model: observations.ObservationModel,
        priors: observations.Priors,
        config: batteries.EnergySensorConfig,
        mode: ThresholdMode,
        theta: float,
) -> float:
    if mode == ThresholdMode.UNCONSTRAINED:
        return 0.0
    transmit_prob = float(observations.mixed_transmit_prob(model, priors, theta))
    return float(batteries.depletion_prob(config, transmit_prob))


@dataclass(frozen=True)
class ThresholdOptimizedReport(logger_core.LoggingMixin):
    noncentrality: float
    mode: str
    theta_star: float
    objective_value: float


@dataclass(frozen=True)
class DegenerateObjectiveReport(logger_core.LoggingMixin):
    noncentrality: float
    mode: str
