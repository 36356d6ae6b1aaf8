"""Shared builders for the test suite.

Most tests run on small toy metros: a handful of regions, a few hundred
nodes each, scale 1.  Builders are plain functions so each test controls
its own seeds; a couple of session fixtures cache the expensive ones.
"""

import numpy as np
import pytest

from metroepi.epidemic import TransitionThresholds, initial_state
from metroepi.topology import RegionSpec, build_metro


def toy_regions(n_regions=3, nodes=200, commuting=60):
    return [RegionSpec(f"r{i}", nodes, commuting) for i in range(n_regions)]


def toy_metro(n_regions=3, nodes=200, commuting=60, k_r=4, p_r=0.05,
              k_w=10, p_w=0.1, seed=42):
    return build_metro(
        toy_regions(n_regions, nodes, commuting),
        (k_r, p_r), (k_w, p_w), seed=seed,
    )


def fresh_state(topology, seed=7, exposed=5):
    return initial_state(topology, seed_key=seed, exposed_per_region=exposed)


@pytest.fixture(scope="session")
def thresholds():
    return TransitionThresholds()


@pytest.fixture(scope="session")
def small_metro():
    """3 regions x 200 nodes with commuting, reused where mutation-free."""
    return toy_metro()


@pytest.fixture
def rng():
    return np.random.default_rng(123)
