"""Shared fixtures: default parameters, the quadratic pressure law and its profile."""

import pytest

from diffwave.model import Params, PressureModel
from diffwave.wave import build_profile


@pytest.fixture(scope="session")
def default_params() -> Params:
    return Params()


@pytest.fixture(scope="session")
def quadratic_model(default_params) -> PressureModel:
    return PressureModel.quadratic(2.0, default_params)


@pytest.fixture(scope="session")
def default_profile(default_params, quadratic_model):
    return build_profile(default_params, quadratic_model, xi_max=8.0, n_pts=4001)


@pytest.fixture
def tmp_run_dir(tmp_path):
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    return run_dir
