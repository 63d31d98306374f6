import dataclasses
import math

import numpy as np
import pytest

from config import Config
from models.geometry import Window
from models.simulation import DgpSpec, OutcomeSpec, TreatmentSpec
from models.surface import QuadratureGrid


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="Corre también las simulaciones marcadas como slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="simulación larga: usar --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def window():
    return Window.unit_square()


@pytest.fixture
def grid(window):
    return QuadratureGrid.regular(window, 64)


@pytest.fixture
def coarse_grid(window):
    return QuadratureGrid.regular(window, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="events.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write


@pytest.fixture
def default_spec():
    """DGP de referencia con una serie corta."""
    spec = DgpSpec.from_toml(Config.DEFAULT_DGP_SPEC)
    return dataclasses.replace(spec, T=6, burn_in=2)


@pytest.fixture
def flat_spec(default_spec):
    """
    DGP sin pendientes: tratamientos Poisson(5) y resultados Poisson(4)
    homogéneos, independientes de la historia.
    """
    treatment = TreatmentSpec(intercept=math.log(5.0), covariates=(0.0, 0.0, 0.0, 0.0),
                              lagged_treatment=0.0, lagged_outcome=0.0)
    outcome = OutcomeSpec(intercept=math.log(4.0), covariates=(0.0, 0.0, 0.0, 0.0),
                          lagged_covariate_coefficient=0.0, recent_treatment=0.0, lagged_outcome=0.0)
    return dataclasses.replace(default_spec, treatment=treatment, outcome=outcome, T=12, burn_in=2)
