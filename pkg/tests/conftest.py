"""
Shared fixtures for the noisy mixture-of-experts tests
"""

import os
import sys

import numpy as np
import pytest

# Add the parent directory to the path so we can import the modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.simbench import make_truth, sample  # noqa: E402
from models.gmm_model import GmmModel  # noqa: E402
from models.simulation import SimulationConfig  # noqa: E402


@pytest.fixture
def rng():
    """Fixed generator for test data"""
    return np.random.default_rng(12345)


@pytest.fixture
def two_cluster_x(rng):
    """400 points around (-5, -5) and 400 around (5, 5), unit covariance"""
    first = rng.normal(-5.0, 1.0, size=(400, 2))
    second = rng.normal(5.0, 1.0, size=(400, 2))
    return np.vstack([first, second])


@pytest.fixture
def two_component_gmm():
    """Well separated two-component mixture in one dimension"""
    return GmmModel(
        weights=np.array([0.4, 0.6]),
        means=np.array([[-2.0], [3.0]]),
        covariances=np.array([[[0.5]], [[1.5]]]),
    )


@pytest.fixture
def small_sim():
    """Three clusters in two dimensions with wide, separated components"""
    return SimulationConfig(
        k=3,
        p=2,
        n_labeled=1500,
        n_test=2000,
        n_unlabeled=0,
        p0=0.8,
        seed=7,
        d_range=(0.2, 0.3),
    )


@pytest.fixture
def small_truth(small_sim):
    """True model of the small simulation"""
    return make_truth(small_sim)


@pytest.fixture
def small_draw(small_truth, small_sim):
    """Labeled sample of the small simulation"""
    return sample(small_truth, small_sim.n_labeled, rng=1)
