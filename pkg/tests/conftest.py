import numpy as np
import pytest

from src.core.gaugefield import THETA, Connection, FlatBase
from src.utils.initial_data import random_perturbation

INTERIOR = FlatBase(np.pi / 2, np.pi / 3)
REGULAR = FlatBase(np.pi / 2, np.pi / 2)
CORNERS = [FlatBase(0.0, 0.0), FlatBase(np.pi, 0.0), FlatBase(0.0, np.pi), FlatBase(np.pi, np.pi)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def theta():
    return THETA


@pytest.fixture
def interior():
    return INTERIOR


@pytest.fixture
def random_connection():
    """Factory: smooth random slice perturbation of a base"""
    def make(N=8, amplitude=0.2, seed=1, base=INTERIOR) -> Connection:
        return random_perturbation(N, amplitude, seed=seed, base=base)
    return make


@pytest.fixture
def random_one_form(rng):
    def make(N=8):
        return rng.standard_normal((2, N, N, 3))
    return make


@pytest.fixture(autouse=True)
def results_dir(tmp_path, monkeypatch):
    """Default outputs go to a temporary directory"""
    import src.utils.io as io
    monkeypatch.setattr(io, "RESULTS_DIR", tmp_path / "results")
    return tmp_path / "results"
