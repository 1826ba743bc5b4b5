import numpy as np
import pytest

from exchwalk.env import MuDistribution, TransitionVector, two_atom_mu


@pytest.fixture
def mu_drift048():
    """d=1 benchmark law: right-steppers (0.9) weight 0.8, left-steppers weight 0.2."""
    return two_atom_mu(0.9, 0.1, 0.8)


@pytest.fixture
def mu_two_types():
    """d=1 two equal-weight types with opposite drifts."""
    return two_atom_mu(0.9, 0.1, 0.5)


@pytest.fixture
def mu_point_right():
    """Deterministic right-stepper, d=1."""
    return MuDistribution(atoms=(TransitionVector(np.array([0.0, 1.0])),), weights=(1.0,))
