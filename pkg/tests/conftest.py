"""Shared fixtures: the three-level Lorentzian example and a seeded random instance."""

import numpy as np
import pytest

from src.bath import Lorentzian
from src.ensemble import instance_for_index
from src.system_model import enumerate_transitions, three_level_system

ENSEMBLE_SEED = 1234321


@pytest.fixture
def three_level():
    return three_level_system(omega1=0.75, omega2=1.35, d=1.0)


@pytest.fixture
def three_level_table(three_level):
    return enumerate_transitions(three_level)


@pytest.fixture
def lorentzian():
    return Lorentzian(g=0.1, omega_m=1.0, kappa=0.1)


@pytest.fixture
def superposition_state():
    """(|1> - |2>)/sqrt(2) of the three-level system."""
    psi = np.array([0.0, 1.0, -1.0], dtype=complex) / np.sqrt(2.0)
    return np.outer(psi, psi.conj())


@pytest.fixture
def random_instance():
    return instance_for_index(ENSEMBLE_SEED, 0)


@pytest.fixture
def random_instances():
    return [instance_for_index(ENSEMBLE_SEED, i) for i in range(100)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
