import numpy as np
import pytest

from kernelfusion import synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    return synthetic.make_dataset(n_frames=60, seed=3)


# Small network and embedding sizes so pipeline tests run in seconds.
FAST = {"embedding_dim": 16, "tower_sizes": [32, 32, 16], "tower_keep_prob": 0.8,
        "epochs": 8, "batch_size": 16}


@pytest.fixture
def fast_config():
    from kernelfusion.config import RunConfig

    return RunConfig(**FAST)


@pytest.fixture(scope="session")
def prepared(small_dataset):
    from kernelfusion import pipeline
    from kernelfusion.config import RunConfig

    return pipeline.prepare(small_dataset, RunConfig(**FAST))
