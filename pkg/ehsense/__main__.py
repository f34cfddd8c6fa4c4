from __future__ import annotations
from datetime import datetime
import json
import logging
import pathlib
import sys
from typing import Any, Callable, Optional

import click
import questionary

from ehsense import experiments
from ehsense import runner
from ehsense.experiments import ExperimentKind
from ehsense.model import metrics
from ehsense.model.errors import EhsenseError, ExperimentError

verbose_logger = logging.getLogger('verbose')

DEFAULT_CONFIG_PATH = pathlib.Path(__file__).with_name('default_config.py')


def _install_handler(logger: logging.Logger, handler: logging.Handler) -> None:
    for previous in list(logger.handlers):
        logger.removeHandler(previous)
        previous.close()
    logger.addHandler(handler)


def configure_logging(log_directory: str) -> None:
    logging_dir_path = pathlib.Path(log_directory)
    try:
        logging_dir_path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExperimentError(f"Unable to create log directory: {e.strerror}", log_directory) from e
    time = datetime.now().strftime('%Y_%m_%d_%H_%M_%S')

    verbose_logger.propagate = False
    verbose_file_path = logging_dir_path / f'ehsense__{time}.log'
    verbose_file_handler = logging.FileHandler(verbose_file_path.as_posix())
    verbose_formatter = logging.Formatter(
        '%(asctime)s | %(levelname)s | %(module)s.%(funcName)s:%(lineno)d | %(message)s'
    )
    verbose_file_handler.setFormatter(verbose_formatter)
    _install_handler(verbose_logger, verbose_file_handler)
    verbose_logger.setLevel(logging.DEBUG)

    json_logger = logging.getLogger('json')
    json_logger.propagate = False
    json_file_path = logging_dir_path / f'ehsense__{time}.json'
    json_file_handler = logging.FileHandler(json_file_path.as_posix())
    json_formatter = logging.Formatter(
        '{"time_stamp": "%(asctime)s",'
        ' "severity": "%(levelname)s",'
        ' "line": "%(module)s.%(funcName)s:%(lineno)d",'
        ' "type": "%(event_type)s",'
        ' "value": %(message)s}'
    )
    json_file_handler.setFormatter(json_formatter)
    _install_handler(json_logger, json_file_handler)
    json_logger.setLevel(logging.DEBUG)


def validate_positive_integer(text: str) -> bool | str:
    return True if text.strip().isdigit() and int(text) > 0 else "A positive integer is needed!"


def ask_capacity(default: int = 10) -> int:
    answer = questionary.text(
        'Battery capacity in packets?', default=str(default), validate=validate_positive_integer,
    ).ask()
    if answer is None:
        raise ExperimentError("Interactive configuration was cancelled.")
    return int(answer)


def configuration_inquiry(initial_config: dict[str, Any]) -> dict[str, Any]:
    def validate_float(text: str) -> bool | str:
        try:
            float(text)
            return True
        except ValueError:
            return "Please provide a number!"

    def validate_probability(text: str) -> bool | str:
        try:
            return True if 0.0 <= float(text) <= 1.0 else "Probabilities lie in [0, 1]!"
        except ValueError:
            return "Please provide a number!"

    first_point = (initial_config.get('operating_points') or [{'prior_h1': 0.5, 'harvest_prob': 0.5}])[0]
    questions = [
        {
            'type': 'input',
            'name': 'noncentrality',
            'message': 'Noncentrality parameter s of the Rician observations?',
            'validate': validate_float,
            'filter': float,
            'default': str(initial_config.get('noncentrality', 3.0)),
        },
        {
            'type': 'input',
            'name': 'prior_h1',
            'message': 'Prior probability of H=1?',
            'validate': validate_probability,
            'filter': float,
            'default': str(first_point['prior_h1']),
        },
        {
            'type': 'input',
            'name': 'harvest_prob',
            'message': 'Probability of harvesting an energy packet per interval?',
            'validate': validate_probability,
            'filter': float,
            'default': str(first_point['harvest_prob']),
        },
        {
            'type': 'input',
            'name': 'num_sensors',
            'message': 'How many sensors report to the fusion center?',
            'validate': validate_positive_integer,
            'filter': int,
            'default': str(initial_config.get('num_sensors', 4)),
        },
        {
            'type': 'confirm',
            'name': 'infinite',
            'message': 'Assume an unlimited-capacity battery?',
            'default': initial_config.get('capacity') is None,
        },
    ]
    answers = questionary.prompt(questions)
    if not answers:
        raise ExperimentError("Interactive configuration was cancelled.")
    config = dict(initial_config)
    config['noncentrality'] = answers['noncentrality']
    config['num_sensors'] = answers['num_sensors']
    config['operating_points'] = [{'prior_h1': answers['prior_h1'], 'harvest_prob': answers['harvest_prob']}]
    if answers['infinite']:
        config['capacity'] = None
    elif config.get('capacity') is None:
        config['capacity'] = ask_capacity()
    return config


def parse_grid(text: Optional[str]) -> Optional[list[float]]:
    """Either a comma-separated list or start:stop:step with an inclusive stop."""
    if text is None:
        return None
    try:
        if ':' in text:
            start, stop, step = (float(part) for part in text.split(':'))
            if step <= 0.0:
                raise ValueError("step must be positive")
            count = int(round((stop - start) / step))
            return [start + i * step for i in range(count + 1)]
        return [float(part) for part in text.split(',')]
    except ValueError as e:
        raise click.BadParameter(f"Malformed grid {text!r}: {e}") from e


def report_failure(error: EhsenseError) -> None:
    path = getattr(error, 'path', None)
    verbose_logger.error(f"Experiment failed: {error!r}.")
    runner.ExperimentFailedReport(error.__class__.__name__, str(error), path).log(logging.ERROR)
    click.echo(json.dumps({'error': error.__class__.__name__, 'message': str(error), 'path': path}), err=True)


def execute(kind: Optional[ExperimentKind], options: dict[str, Any], sim_options: Optional[dict] = None) -> None:
    try:
        configure_logging(options.pop('log_directory'))
        current_config = experiments.load_initial_config(options.pop('config_path'))
        current_config = configuration_inquiry(current_config) if options.pop('inquiry') else current_config

        prior_h1, harvest_prob = options.pop('prior_h1'), options.pop('harvest_prob')
        points = current_config.get('operating_points') or []
        if prior_h1 is not None and harvest_prob is not None:
            points = [{'prior_h1': prior_h1, 'harvest_prob': harvest_prob}]
        elif prior_h1 is not None or harvest_prob is not None:
            points = [
                {
                    'prior_h1': prior_h1 if prior_h1 is not None else point['prior_h1'],
                    'harvest_prob': harvest_prob if harvest_prob is not None else point['harvest_prob'],
                }
                for point in points
            ]
        overrides = dict(options)
        overrides['operating_points'] = points or None
        overrides['noncentrality_grid'] = parse_grid(options['noncentrality_grid'])
        overrides['kind'] = kind.value if kind else None
        overrides['sim'] = sim_options or {}
        spec = experiments.build_spec(current_config, overrides)
        runner.ExperimentRunner(spec).run_and_write()
    except EhsenseError as e:
        report_failure(e)
        sys.exit(1)


def experiment_options(function: Callable) -> Callable:
    options = [
        click.option('-c', '--config', 'config_path', default=str(DEFAULT_CONFIG_PATH),
                     type=click.Path(exists=True), help="The path to a .json or Python configuration file."),
        click.option('-o', '--out', 'output', default=None,
                     type=click.Path(), help="Where to write the result; standard output if omitted."),
        click.option('-l', '--log_directory', default='results',
                     type=click.Path(exists=False), help="The path to log storage directory."),
        click.option('-i', '--inquiry',
                     is_flag=True, help="Whether to configure the experiment interactively on start."),
        click.option('-s', '--noncentrality', type=float, default=None, help="Noncentrality s of the signal."),
        click.option('--s-grid', 'noncentrality_grid', default=None,
                     help="Noncentrality grid, 'a,b,c' or 'start:stop:step'."),
        click.option('--prior-h1', type=float, default=None, help="Prior probability of H=1."),
        click.option('--harvest-prob', type=float, default=None, help="Energy packet arrival probability."),
        click.option('--capacity', type=int, default=None, help="Battery capacity; unlimited if omitted."),
        click.option('--num-sensors', type=int, default=None, help="Number of sensors N."),
        click.option('--theta', type=float, default=None, help="Fixed threshold for simulations."),
        click.option('--mode', type=click.Choice([mode.value for mode in metrics.ThresholdMode]), default=None,
                     help="Threshold design objective."),
    ]
    for option in reversed(options):
        function = option(function)
    return function


@click.group()
def main() -> None:
    """Decentralized detection with energy harvesting sensors."""


@main.command()
@experiment_options
def run(**options: Any) -> None:
    """Run the experiment kind named in the configuration file."""
    execute(None, options)


@main.command()
@experiment_options
def optimize(**options: Any) -> None:
    """Optimize thresholds at one noncentrality and report the network performance as JSON."""
    execute(ExperimentKind.OPTIMIZE, options)


@main.command()
@experiment_options
def sweep(**options: Any) -> None:
    """Tabulate optimal thresholds and network metrics along the noncentrality grid."""
    execute(ExperimentKind.SWEEP_S, options)


@main.command()
@experiment_options
def fig3(**options: Any) -> None:
    """Bhattacharyya distance with unconstrained and energy-adapted thresholds."""
    execute(ExperimentKind.FIG3, options)


@main.command()
@experiment_options
def fig4(**options: Any) -> None:
    """MAP error probability of the network with both thresholds."""
    execute(ExperimentKind.ERROR_CURVE, options)


@main.command()
@experiment_options
@click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), required=True, help="Seed of the random streams.")
@click.option('--horizon', type=int, default=None, help="Number of simulated time steps.")
@click.option('--warmup', type=int, default=None, help="Steps discarded before measuring.")
@click.option('--replicas', type=int, default=None, help="Number of independent replicas.")
@click.option('--initial-battery', type=int, default=None, help="Battery level at the first step.")
def simulate(seed: int, horizon: Optional[int], warmup: Optional[int], replicas: Optional[int],
             initial_battery: Optional[int], **options: Any) -> None:
    """Monte-Carlo simulation checked against the analytic quantities."""
    sim_options = {
        'seed': seed, 'horizon': horizon, 'warmup': warmup, 'replicas': replicas, 'initial_battery': initial_battery,
    }
    execute(ExperimentKind.SIMULATE, options, sim_options)


if __name__ == '__main__':
    main(prog_name='ehsense')
