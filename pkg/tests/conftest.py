import pytest

from ehsense import parallel
from ehsense.model import fusion
from ehsense.model import metrics
from ehsense.model import observations


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.setenv(parallel.THREADS_VARIABLE, '1')


@pytest.fixture
def unit_rician():
    return observations.ObservationModel(noncentrality=1.0)


@pytest.fixture
def separable_pmf():
    return metrics.SensorConditionalPMF(prob_one_given_h0=0.1, prob_one_given_h1=0.8)


@pytest.fixture
def four_sensors():
    return fusion.NetworkConfig(num_sensors=4, prior_h1=0.5)
