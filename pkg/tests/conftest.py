"""
Shared dataset fixtures
"""

import numpy as np
import pytest

from ais_recommender.dataset import Dataset, generate_synthetic


@pytest.fixture(scope="session")
def small_dataset() -> Dataset:
    """Clustered dataset small enough for full harness runs"""
    return generate_synthetic(
        users=60,
        movies=40,
        clusters=3,
        sparsity=0.5,
        noise=0.1,
        rng=np.random.default_rng(7),
    )


@pytest.fixture(scope="session")
def desk_dataset() -> Dataset:
    """Desk-scale dataset for directional checks"""
    return generate_synthetic(
        users=500,
        movies=200,
        clusters=5,
        sparsity=0.25,
        noise=0.2,
        rng=np.random.default_rng(42),
    )
