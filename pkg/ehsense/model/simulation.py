from __future__ import annotations
from dataclasses import dataclass, field
import logging
import math
from typing import Optional

import numpy as np

from ehsense import parallel
from ehsense.logger import core as logger_core
from ehsense.model import batteries
from ehsense.model import fusion
from ehsense.model import metrics
from ehsense.model import observations
from ehsense.model.errors import ContractViolation, ValidationError

verbose_logger = logging.getLogger('verbose')

CHUNK_STEPS: int = 2 ** 16
DEFAULT_BATCHES: int = 32
MAX_SEED: int = 2 ** 64


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    seed: int
    warmup: Optional[int] = None
    initial_battery: int = 0
    replicas: int = 1
    batches: int = DEFAULT_BATCHES
    materialize_observations: bool = False

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValidationError(f"Horizon must be positive, got {self.horizon!r}.")
        if not 0 <= self.seed < MAX_SEED:
            raise ValidationError(f"Seed must be an unsigned 64-bit integer, got {self.seed!r}.")
        if not 0 <= self.measured_from < self.horizon:
            raise ValidationError(f"Warmup {self.measured_from} must be nonnegative and below the horizon.")
        if self.initial_battery < 0:
            raise ValidationError(f"Initial battery must be nonnegative, got {self.initial_battery!r}.")
        if self.replicas < 1:
            raise ValidationError(f"At least one replica is needed, got {self.replicas!r}.")
        if not 1 <= self.batches <= self.steps_per_replica:
            raise ValidationError(f"Batch count must lie in [1, {self.steps_per_replica}], got {self.batches!r}.")

    @property
    def measured_from(self) -> int:
        return self.horizon // 10 if self.warmup is None else self.warmup

    @property
    def steps_per_replica(self) -> int:
        return self.horizon - self.measured_from


@dataclass(frozen=True)
class SimStdErrors(logger_core.LoggingMixin):
    depletion: float
    prob_one_given_h0: float
    prob_one_given_h1: float
    error_rate: float


@dataclass(frozen=True)
class TransitionEstimate(logger_core.LoggingMixin):
    lambda0: float
    lambda_tail: float
    mu_tail: float
    lambda0_se: float
    lambda_tail_se: float
    mu_tail_se: float


@dataclass(frozen=True)
class SimReport(logger_core.LoggingMixin):
    empirical_depletion: float
    empirical_pmf: metrics.SensorConditionalPMF
    empirical_error_rate: float
    std_errors: SimStdErrors
    steps_measured: int
    transitions: TransitionEstimate


@dataclass
class ReplicaTally:
    batches: int
    empty: np.ndarray = field(init=False)
    sensor_steps: np.ndarray = field(init=False)
    ones: np.ndarray = field(init=False)
    hypothesis_steps: np.ndarray = field(init=False)
    errors: np.ndarray = field(init=False)
    steps: np.ndarray = field(init=False)
    zero_visits: int = 0
    zero_births: int = 0
    birth_visits: int = 0
    births: int = 0
    death_visits: int = 0
    deaths: int = 0

    def __post_init__(self) -> None:
        self.empty = np.zeros(self.batches)
        self.sensor_steps = np.zeros(self.batches)
        self.ones = np.zeros((2, self.batches))
        self.hypothesis_steps = np.zeros((2, self.batches))
        self.errors = np.zeros(self.batches)
        self.steps = np.zeros(self.batches)


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(replica,)))


def sensor_decide(x: float, theta: float, b: int) -> int:
    """On-off keyed message: 1 costs one packet and needs a non-empty battery."""
    return int(x >= theta and b > 0)


def step_battery(b: int, transmitted: bool, harvested: bool, capacity: Optional[int]) -> int:
    """Battery level after spending on the message, then harvesting, clamped at capacity."""
    if transmitted and b <= 0:
        raise ContractViolation("A transmission was attempted from an empty battery.")
    level = b - int(transmitted) + int(harvested)
    return level if capacity is None else min(level, capacity)


def battery_path_infinite(initial: int, exceeds: np.ndarray, harvests: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Levels b_0..b_C and messages of an unlimited battery for one sensor.

    After spending, the level y_t = max(b_t - d_t, 0) follows the reflected walk
    y_{t+1} = max(y_t + e_t - d_{t+1}, 0), so y_t = S_t - min(-y_0, min_k S_k)
    with S the partial sums of e_t - d_{t+1}.
    """
    wants = exceeds.astype(np.int64)
    gains = harvests.astype(np.int64)
    after_first = max(initial - int(wants[0]), 0)
    walk = np.concatenate(([0], np.cumsum(gains[:-1] - wants[1:])))
    after_spend = walk - np.minimum(np.minimum.accumulate(walk), -after_first)
    levels = np.empty(len(wants) + 1, dtype=np.int64)
    levels[0] = initial
    levels[1:] = after_spend + gains
    messages = levels[:-1] - after_spend
    return levels, messages.astype(bool)


def battery_path_finite(
        initial: int,
        statistics: np.ndarray,
        cutoffs: observations.RealOrArray,
        harvests: np.ndarray,
        capacity: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Step-by-step levels and messages of a finite battery; statistic >= cutoff is the wish to transmit."""
    cutoffs = np.broadcast_to(np.asarray(cutoffs, dtype=float), statistics.shape)
    levels = np.empty(len(statistics) + 1, dtype=np.int64)
    messages = np.empty(len(statistics), dtype=bool)
    b = initial
    for t, (x, theta, harvested) in enumerate(zip(statistics.tolist(), cutoffs.tolist(), harvests.tolist())):
        levels[t] = b
        sent = bool(sensor_decide(x, theta, b))
        messages[t] = sent
        b = step_battery(b, sent, harvested, capacity)
    levels[-1] = b
    return levels, messages


def _decision_statistics(
        model: observations.ObservationModel,
        theta: float,
        hypotheses: np.ndarray,
        uniforms: np.ndarray,
        materialize: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-step statistic and cutoff whose comparison is the event x >= theta."""
    if not materialize:
        # x = tail^{-1}(u) is nonincreasing in u, hence x >= theta exactly when -u >= -tail(theta)
        tails = np.array([model.tail_prob(0, theta), model.tail_prob(1, theta)])
        return -uniforms, np.broadcast_to(-tails[hypotheses][:, None], uniforms.shape)
    observed = np.empty(uniforms.shape)
    for h in observations.HYPOTHESES:
        rows = hypotheses == h
        if np.any(rows):
            observed[rows] = model.sample(h, uniforms[rows])
    return observed, np.full(uniforms.shape, float(theta))


def run_replica(
        model: observations.ObservationModel,
        net: fusion.NetworkConfig,
        config: batteries.EnergySensorConfig,
        sim: SimConfig,
        replica: int,
) -> ReplicaTally:
    rng = replica_rng(sim.seed, replica)
    decisions = fusion.decision_table(net, metrics.sensor_pmf(model, net.priors, config))
    tally = ReplicaTally(sim.batches)
    levels_now = np.full(net.num_sensors, sim.initial_battery, dtype=np.int64)
    if config.finite:
        levels_now = np.minimum(levels_now, config.capacity)

    for offset in range(0, sim.horizon, CHUNK_STEPS):
        size = min(CHUNK_STEPS, sim.horizon - offset)
        hypotheses = (rng.random(size) < net.prior_h1).astype(np.int64)
        uniforms = 1.0 - rng.random((size, net.num_sensors))
        harvests = rng.random((size, net.num_sensors)) < config.harvest_prob
        statistics, cutoffs = _decision_statistics(
            model, config.theta, hypotheses, uniforms, sim.materialize_observations,
        )

        levels = np.empty((size + 1, net.num_sensors), dtype=np.int64)
        messages = np.empty((size, net.num_sensors), dtype=bool)
        for n in range(net.num_sensors):
            if config.finite:
                path = battery_path_finite(
                    int(levels_now[n]), statistics[:, n], cutoffs[:, n], harvests[:, n], config.capacity,
                )
            else:
                exceeds = statistics[:, n] >= cutoffs[:, n]
                path = battery_path_infinite(int(levels_now[n]), exceeds, harvests[:, n])
            levels[:, n], messages[:, n] = path
        if levels.min() < 0 or (config.finite and levels.max() > config.capacity):
            raise ContractViolation("Battery level left its admissible range.")
        levels_now = levels[-1].copy()

        times = offset + np.arange(size)
        measured = times >= sim.measured_from
        if np.any(measured):
            _tally_chunk(tally, sim, config, times[measured], hypotheses[measured], levels[:-1][measured],
                         levels[1:][measured], messages[measured], decisions)

    verbose_logger.debug(f"Replica {replica} finished {sim.horizon} steps.")
    ReplicaFinishedReport(replica, sim.horizon).log(logging.DEBUG)
    return tally


def _tally_chunk(
        tally: ReplicaTally,
        sim: SimConfig,
        config: batteries.EnergySensorConfig,
        times: np.ndarray,
        hypotheses: np.ndarray,
        levels: np.ndarray,
        next_levels: np.ndarray,
        messages: np.ndarray,
        decisions: np.ndarray,
) -> None:
    batch = ((times - sim.measured_from) * sim.batches) // sim.steps_per_replica
    sensors = levels.shape[1]

    def add(target: np.ndarray, weights: np.ndarray) -> None:
        target += np.bincount(batch, weights=weights, minlength=sim.batches)

    ones = messages.sum(axis=1)
    add(tally.empty, (levels == 0).sum(axis=1).astype(float))
    add(tally.sensor_steps, np.full(len(times), float(sensors)))
    add(tally.errors, (decisions[ones] != hypotheses).astype(float))
    add(tally.steps, np.ones(len(times)))
    for h in observations.HYPOTHESES:
        rows = (hypotheses == h).astype(float)
        add(tally.ones[h], rows * ones)
        add(tally.hypothesis_steps[h], rows * sensors)

    at_zero = levels == 0
    tally.zero_visits += int(at_zero.sum())
    tally.zero_births += int((at_zero & (next_levels == 1)).sum())
    charged = levels >= 1
    below_top = charged if not config.finite else charged & (levels < config.capacity)
    tally.birth_visits += int(below_top.sum())
    tally.births += int((below_top & (next_levels == levels + 1)).sum())
    tally.death_visits += int(charged.sum())
    tally.deaths += int((charged & (next_levels == levels - 1)).sum())


def _replica_job(job: tuple) -> ReplicaTally:
    return run_replica(*job)


def _batch_estimate(numerators: np.ndarray, denominators: np.ndarray) -> tuple[float, float]:
    total = float(denominators.sum())
    estimate = float(numerators.sum()) / total if total > 0 else 0.0
    usable = denominators > 0
    ratios = numerators[usable] / denominators[usable]
    if ratios.size < 2:
        return estimate, 0.0
    return estimate, float(np.std(ratios, ddof=1) / math.sqrt(ratios.size))


def _binomial_estimate(successes: int, trials: int) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 0.0
    p = successes / trials
    return p, math.sqrt(p * (1.0 - p) / trials)


def run_simulation(
        model: observations.ObservationModel,
        net: fusion.NetworkConfig,
        config: batteries.EnergySensorConfig,
        sim: SimConfig,
        workers: Optional[int] = None,
) -> SimReport:
    """
    Monte-Carlo run of the whole network. Replicas draw from independent
    substreams keyed by (seed, replica) and are reduced in replica order;
    standard errors come from batch means pooled over replicas.
    """
    jobs = [(model, net, config, sim, replica) for replica in range(sim.replicas)]
    tallies = parallel.ordered_map(_replica_job, jobs, workers=workers, description="Simulating replicas")

    def stacked(attribute: str) -> np.ndarray:
        return np.concatenate([getattr(tally, attribute) for tally in tallies], axis=-1)

    depletion, depletion_se = _batch_estimate(stacked('empty'), stacked('sensor_steps'))
    error_rate, error_se = _batch_estimate(stacked('errors'), stacked('steps'))
    ones, hypothesis_steps = stacked('ones'), stacked('hypothesis_steps')
    q0, q0_se = _batch_estimate(ones[0], hypothesis_steps[0])
    q1, q1_se = _batch_estimate(ones[1], hypothesis_steps[1])

    def summed(attribute: str) -> int:
        return sum(getattr(tally, attribute) for tally in tallies)

    lambda0, lambda0_se = _binomial_estimate(summed('zero_births'), summed('zero_visits'))
    lambda_tail, lambda_tail_se = _binomial_estimate(summed('births'), summed('birth_visits'))
    mu_tail, mu_tail_se = _binomial_estimate(summed('deaths'), summed('death_visits'))

    report = SimReport(
        empirical_depletion=depletion,
        empirical_pmf=metrics.SensorConditionalPMF(q0, q1),
        empirical_error_rate=error_rate,
        std_errors=SimStdErrors(depletion_se, q0_se, q1_se, error_se),
        steps_measured=sim.steps_per_replica * sim.replicas,
        transitions=TransitionEstimate(lambda0, lambda_tail, mu_tail, lambda0_se, lambda_tail_se, mu_tail_se),
    )
    verbose_logger.info(f"Simulated {sim.replicas} replica(s) of {sim.horizon} steps: "
                        f"depletion {depletion:.6f}, error rate {error_rate:.6f}.")
    SimulationFinishedReport(sim.seed, sim.replicas, report.steps_measured, depletion, error_rate).log(logging.INFO)
    return report


@dataclass(frozen=True)
class ReplicaFinishedReport(logger_core.LoggingMixin):
    replica: int
    steps: int


@dataclass(frozen=True)
class SimulationFinishedReport(logger_core.LoggingMixin):
    seed: int
    replicas: int
    steps_measured: int
    empirical_depletion: float
    empirical_error_rate: float
