import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dynfuse import FusionConfig, synth


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_config():
    return FusionConfig(r_window=2, rng_seed=42)


@pytest.fixture(scope="session")
def complementary():
    """The seed-42 disjoint-failure benchmark (tensor, ground truth)."""
    return synth.generate(synth.complementary_fixture_spec())


def random_tensor_data(rng, n, queries, d, constant_prob=0.0):
    """Random raw similarity data with optional constant (degenerate) rows."""
    data = rng.random((n, queries, d))
    for tech in range(n):
        for q in range(queries):
            if rng.random() < constant_prob:
                data[tech, q, :] = rng.random()
    return data
