from __future__ import annotations
import csv
from dataclasses import dataclass
import json
import logging
import pathlib
from typing import Any, NamedTuple, Optional, Union

from ehsense import parallel
from ehsense.experiments import ExperimentKind, ExperimentSpec, OperatingPoint
from ehsense.logger import core as logger_core
from ehsense.model import batteries
from ehsense.model import fusion
from ehsense.model import metrics
from ehsense.model import observations
from ehsense.model import simulation
from ehsense.model.errors import ExperimentError

verbose_logger = logging.getLogger('verbose')

FIG3_HEADER = [
    's', 'pi1', 'pe', 'b_unconstrained_theta', 'b_adapted_theta', 'theta_u', 'theta_star', 'p0_u', 'p0_star',
]
FIG4_HEADER = [
    's', 'pi1', 'pe', 'num_sensors', 'theta_u', 'theta_star',
    'pe_unconstrained', 'pe_adapted', 'bound_unconstrained', 'bound_adapted',
]
SWEEP_HEADER = [
    's', 'pi1', 'pe', 'mode', 'theta', 'objective', 'p0', 'transmit_prob', 'q0', 'q1',
    'total_distance', 'error_probability', 'error_bound', 'degenerate',
]
SIMULATE_HEADER = [
    's', 'pi1', 'pe', 'capacity', 'num_sensors', 'theta', 'seed', 'horizon', 'warmup', 'replicas', 'steps_measured',
    'depletion_empirical', 'depletion_se', 'depletion_analytic',
    'q0_empirical', 'q0_se', 'q0_analytic',
    'q1_empirical', 'q1_se', 'q1_analytic',
    'error_empirical', 'error_se', 'error_analytic',
    'lambda0_empirical', 'lambda0_se', 'lambda0_analytic',
    'lambda_tail_empirical', 'lambda_tail_se', 'lambda_tail_analytic',
    'mu_tail_empirical', 'mu_tail_se', 'mu_tail_analytic',
]

Cell = Union[int, float, str, None]


class Table(NamedTuple):
    header: list[str]
    rows: list[tuple[Cell, ...]]


class ThresholdPair(NamedTuple):
    unconstrained: metrics.ThresholdSearchResult
    adapted: metrics.ThresholdSearchResult


def format_cell(value: Cell) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return format(value, '.17g')
    return str(value)


def write_table(table: Table, path: Optional[str]) -> None:
    lines = [table.header] + [[format_cell(cell) for cell in row] for row in table.rows]
    if path is None:
        for line in lines:
            print(','.join(line))
        return
    try:
        target = pathlib.Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, 'w', newline='') as file:
            csv.writer(file, lineterminator='\n').writerows(lines)
    except OSError as e:
        raise ExperimentError(f"Unable to write table: {e.strerror}", str(path)) from e
    verbose_logger.info(f"Wrote {len(table.rows)} rows to {path}.")
    TableWrittenReport(str(path), len(table.rows)).log(logging.INFO)


def read_table(path: str) -> Table:
    with open(path, newline='') as file:
        header, *rows = list(csv.reader(file))
    return Table(header, [tuple(row) for row in rows])


def optimize_pair(spec: ExperimentSpec, noncentrality: float, point: OperatingPoint) -> ThresholdPair:
    model = spec.model(noncentrality)
    priors = observations.Priors.from_prior_h1(point.prior_h1)
    config = spec.energy_config(point)
    return ThresholdPair(*(
        metrics.optimize_threshold(model, priors, config, mode, grid_points=spec.grid_points)
        for mode in (metrics.ThresholdMode.UNCONSTRAINED, metrics.ThresholdMode.ENERGY_ADAPTED)
    ))


def _fig3_row(job: tuple[ExperimentSpec, float, OperatingPoint]) -> tuple[Cell, ...]:
    spec, s, point = job
    pair = optimize_pair(spec, s, point)
    model = spec.model(s)
    priors = observations.Priors.from_prior_h1(point.prior_h1)
    config = spec.energy_config(point)
    theta_u = pair.unconstrained.theta_star
    b_unconstrained = float(metrics.threshold_objective(
        model, priors, config, metrics.ThresholdMode.ENERGY_ADAPTED, theta_u,
    ))
    p0_u = float(batteries.depletion_prob(config, observations.mixed_transmit_prob(model, priors, theta_u)))
    return (
        s, point.prior_h1, point.harvest_prob, b_unconstrained, pair.adapted.objective_value,
        theta_u, pair.adapted.theta_star, p0_u, pair.adapted.depletion_at_optimum,
    )


def _fig4_row(job: tuple[ExperimentSpec, float, OperatingPoint]) -> tuple[Cell, ...]:
    spec, s, point = job
    pair = optimize_pair(spec, s, point)
    model = spec.model(s)
    net = spec.network(point)
    unconstrained = fusion.evaluate_network(model, net, spec.energy_config(point, pair.unconstrained.theta_star))
    adapted = fusion.evaluate_network(model, net, spec.energy_config(point, pair.adapted.theta_star))
    return (
        s, point.prior_h1, point.harvest_prob, spec.num_sensors,
        pair.unconstrained.theta_star, pair.adapted.theta_star,
        unconstrained.error_probability, adapted.error_probability,
        unconstrained.error_bound, adapted.error_bound,
    )


def _sweep_rows(job: tuple[ExperimentSpec, float, OperatingPoint]) -> list[tuple[Cell, ...]]:
    spec, s, point = job
    model = spec.model(s)
    net = spec.network(point)
    rows = []
    for result in optimize_pair(spec, s, point):
        config = spec.energy_config(point, result.theta_star)
        report = fusion.evaluate_network(model, net, config)
        rows.append((
            s, point.prior_h1, point.harvest_prob, result.mode, result.theta_star, result.objective_value,
            report.depletion_prob, float(observations.mixed_transmit_prob(model, net.priors, result.theta_star)),
            report.pmf.prob_one_given_h0, report.pmf.prob_one_given_h1,
            report.total_distance, report.error_probability, report.error_bound, result.degenerate,
        ))
    return rows


class ExperimentRunner:
    def __init__(self, spec: ExperimentSpec, workers: Optional[int] = None) -> None:
        self.spec: ExperimentSpec = spec.validate()
        self.workers: Optional[int] = workers

    def run(self) -> Union[Table, dict[str, Any]]:
        kind = ExperimentKind(self.spec.kind)
        verbose_logger.info(f"Starting {kind.value} experiment.")
        ExperimentStartReport(kind.value).log(logging.INFO)
        handlers = {
            ExperimentKind.OPTIMIZE: self.run_optimize,
            ExperimentKind.SWEEP_S: self.run_sweep,
            ExperimentKind.SIMULATE: self.run_simulate,
            ExperimentKind.ERROR_CURVE: self.run_fig4,
            ExperimentKind.FIG3: self.run_fig3,
        }
        result = handlers[kind]()
        ExperimentFinishedReport(kind.value).log(logging.INFO)
        return result

    def run_and_write(self) -> None:
        result = self.run()
        if isinstance(result, Table):
            write_table(result, self.spec.output)
        else:
            write_document(result, self.spec.output)

    def _grid_jobs(self) -> list[tuple[ExperimentSpec, float, OperatingPoint]]:
        return [(self.spec, s, point) for s in self.spec.noncentrality_grid for point in self.spec.operating_points]

    def run_fig3(self) -> Table:
        rows = parallel.ordered_map(_fig3_row, self._grid_jobs(), self.workers, "Bhattacharyya sweep")
        return Table(FIG3_HEADER, rows)

    def run_fig4(self) -> Table:
        rows = parallel.ordered_map(_fig4_row, self._grid_jobs(), self.workers, "Error probability sweep")
        return Table(FIG4_HEADER, rows)

    def run_sweep(self) -> Table:
        batches = parallel.ordered_map(_sweep_rows, self._grid_jobs(), self.workers, "Analytic sweep")
        return Table(SWEEP_HEADER, [row for batch in batches for row in batch])

    def run_optimize(self) -> dict[str, Any]:
        s = self.spec.noncentrality
        model = self.spec.model(s)
        results = []
        for point in self.spec.operating_points:
            pair = optimize_pair(self.spec, s, point)
            net = self.spec.network(point)
            entry: dict[str, Any] = {'prior_h1': point.prior_h1, 'harvest_prob': point.harvest_prob}
            for result in pair:
                report = fusion.evaluate_network(model, net, self.spec.energy_config(point, result.theta_star))
                entry[result.mode] = {'search': result.to_dict(), 'network': report.to_dict()}
            results.append(entry)
        return {
            'schema_version': self.spec.schema_version,
            'noncentrality': s,
            'capacity': self.spec.capacity,
            'num_sensors': self.spec.num_sensors,
            'results': results,
        }

    def run_simulate(self) -> Table:
        sim = self.spec.sim.to_config()
        s = self.spec.noncentrality
        model = self.spec.model(s)
        rows = []
        for point in self.spec.operating_points:
            net = self.spec.network(point)
            theta = self.spec.theta
            if theta is None:
                theta = optimize_pair(self.spec, s, point).adapted.theta_star
            config = self.spec.energy_config(point, theta)
            rows.append(self._simulate_row(model, net, config, sim, s, point))
        return Table(SIMULATE_HEADER, rows)

    def _simulate_row(
            self,
            model: observations.ObservationModel,
            net: fusion.NetworkConfig,
            config: batteries.EnergySensorConfig,
            sim: simulation.SimConfig,
            s: float,
            point: OperatingPoint,
    ) -> tuple[Cell, ...]:
        report = simulation.run_simulation(model, net, config, sim, workers=self.workers)
        analytic = fusion.evaluate_network(model, net, config)
        transmit_prob = float(observations.mixed_transmit_prob(model, net.priors, config.theta))
        chain = batteries.build_chain(config, transmit_prob)
        errors, transitions = report.std_errors, report.transitions
        return (
            s, point.prior_h1, point.harvest_prob, config.capacity, net.num_sensors, config.theta, sim.seed,
            sim.horizon, sim.measured_from, sim.replicas, report.steps_measured,
            report.empirical_depletion, errors.depletion, analytic.depletion_prob,
            report.empirical_pmf.prob_one_given_h0, errors.prob_one_given_h0, analytic.pmf.prob_one_given_h0,
            report.empirical_pmf.prob_one_given_h1, errors.prob_one_given_h1, analytic.pmf.prob_one_given_h1,
            report.empirical_error_rate, errors.error_rate, analytic.error_probability,
            transitions.lambda0, transitions.lambda0_se, chain.lambda0,
            transitions.lambda_tail, transitions.lambda_tail_se, chain.lambda_tail,
            transitions.mu_tail, transitions.mu_tail_se, chain.mu_tail,
        )


def write_document(document: dict[str, Any], path: Optional[str]) -> None:
    text = json.dumps(document, indent=2, sort_keys=True) + '\n'
    if path is None:
        print(text, end='')
        return
    try:
        target = pathlib.Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    except OSError as e:
        raise ExperimentError(f"Unable to write report: {e.strerror}", str(path)) from e
    verbose_logger.info(f"Wrote optimization report to {path}.")


@dataclass(frozen=True)
class ExperimentStartReport(logger_core.LoggingMixin):
    kind: str


@dataclass(frozen=True)
class ExperimentFinishedReport(logger_core.LoggingMixin):
    kind: str


@dataclass(frozen=True)
class TableWrittenReport(logger_core.LoggingMixin):
    path: str
    rows: int


@dataclass(frozen=True)
class ExperimentFailedReport(logger_core.LoggingMixin):
    error: str
    message: str
    path: Optional[str]
