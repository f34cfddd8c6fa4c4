from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
import importlib.util
import json
import pathlib
import sys
from typing import Any, Optional

from dataclasses_json import DataClassJsonMixin

from ehsense.model import batteries
from ehsense.model import fusion
from ehsense.model import metrics
from ehsense.model import observations
from ehsense.model import simulation
from ehsense.model.errors import ExperimentError, ValidationError, check_probability

SCHEMA_VERSION: int = 1

DEFAULT_NONCENTRALITY_GRID = [float(s) for s in range(0, 41)]

# both regimes: harvest below and at or above the prior of H=1
DEFAULT_OPERATING_POINTS = [
    (0.3, 0.2),
    (0.3, 0.5),
    (0.7, 0.5),
    (0.7, 0.9),
]


class ExperimentKind(str, Enum):
    OPTIMIZE = 'optimize'
    SWEEP_S = 'sweep_s'
    SIMULATE = 'simulate'
    ERROR_CURVE = 'error_curve'
    FIG3 = 'fig3'


@dataclass
class OperatingPoint(DataClassJsonMixin):
    prior_h1: float
    harvest_prob: float

    def validate(self) -> None:
        check_probability('prior_h1', self.prior_h1)
        check_probability('harvest_prob', self.harvest_prob)


@dataclass
class SimSettings(DataClassJsonMixin):
    horizon: int = 1_000_000
    warmup: Optional[int] = None
    replicas: int = 1
    initial_battery: int = 0
    seed: Optional[int] = None
    batches: int = simulation.DEFAULT_BATCHES

    def to_config(self) -> simulation.SimConfig:
        if self.seed is None:
            raise ValidationError("A simulation needs an explicit seed.")
        return simulation.SimConfig(
            horizon=self.horizon,
            seed=self.seed,
            warmup=self.warmup,
            initial_battery=self.initial_battery,
            replicas=self.replicas,
            batches=self.batches,
        )


@dataclass
class ExperimentSpec(DataClassJsonMixin):
    kind: str = ExperimentKind.FIG3.value
    schema_version: int = SCHEMA_VERSION
    noncentrality: float = 3.0
    noncentrality_grid: list[float] = field(default_factory=lambda: list(DEFAULT_NONCENTRALITY_GRID))
    operating_points: list[OperatingPoint] = field(
        default_factory=lambda: [OperatingPoint(pi1, pe) for pi1, pe in DEFAULT_OPERATING_POINTS]
    )
    capacity: Optional[int] = None
    num_sensors: int = 4
    theta: Optional[float] = None
    mode: str = metrics.ThresholdMode.ENERGY_ADAPTED.value
    scale_h0: float = 1.0
    scale_h1: float = 1.0
    grid_points: int = metrics.GRID_POINTS
    sim: SimSettings = field(default_factory=SimSettings)
    output: Optional[str] = None

    def validate(self) -> ExperimentSpec:
        if self.schema_version != SCHEMA_VERSION:
            raise ValidationError(f"Unsupported schema version {self.schema_version!r}, expected {SCHEMA_VERSION}.")
        try:
            ExperimentKind(self.kind)
            metrics.ThresholdMode(self.mode)
        except ValueError as e:
            raise ValidationError(str(e)) from e
        if not self.noncentrality_grid:
            raise ValidationError("The noncentrality grid must not be empty.")
        if any(b <= a for a, b in zip(self.noncentrality_grid, self.noncentrality_grid[1:])):
            raise ValidationError("The noncentrality grid must be strictly increasing.")
        if not self.operating_points:
            raise ValidationError("At least one (prior, harvest probability) pair is needed.")
        for point in self.operating_points:
            point.validate()
        if self.grid_points < 3:
            raise ValidationError(f"The threshold grid needs at least 3 points, got {self.grid_points!r}.")
        self.model(self.noncentrality)
        self.energy_config(self.operating_points[0])
        return self

    def model(self, noncentrality: float) -> observations.ObservationModel:
        return observations.ObservationModel(noncentrality, self.scale_h0, self.scale_h1)

    def energy_config(self, point: OperatingPoint, theta: float = 0.0) -> batteries.EnergySensorConfig:
        return batteries.EnergySensorConfig(theta, point.harvest_prob, self.capacity)

    def network(self, point: OperatingPoint) -> fusion.NetworkConfig:
        return fusion.NetworkConfig(self.num_sensors, point.prior_h1)


def load_initial_config(config_path: str) -> dict[str, Any]:
    """Reads a JSON file or a Python module exposing a CONFIGURATION dict."""
    path = pathlib.Path(config_path)
    try:
        if path.suffix == '.json':
            with open(path) as file:
                return json.load(file)
        spec = importlib.util.spec_from_file_location("config_module", path)
        if spec is None or spec.loader is None:
            raise ExperimentError("Configuration must be a .json file or a Python module", str(path))
        config_module = importlib.util.module_from_spec(spec)
        sys.modules[spec.name] = config_module
        spec.loader.exec_module(config_module)
        return dict(config_module.CONFIGURATION)
    except (OSError, json.JSONDecodeError, AttributeError, SyntaxError) as e:
        raise ExperimentError(f"Unable to read configuration: {e}", str(path)) from e


def build_spec(config: dict[str, Any], overrides: dict[str, Any]) -> ExperimentSpec:
    merged, overrides = dict(config), dict(overrides)
    sim_overrides = {key: value for key, value in overrides.pop('sim', {}).items() if value is not None}
    merged.update({key: value for key, value in overrides.items() if value is not None})
    merged['sim'] = {**merged.get('sim', {}), **sim_overrides}
    try:
        spec = ExperimentSpec.from_dict(merged)
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"Malformed experiment configuration: {e}") from e
    return spec.validate()
