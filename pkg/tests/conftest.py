import numpy as np
import pytest

from rocket_forge.surface import SynthConfig, generate_dataset


def random_batch(seed, n, c, t):
    from rocket_forge.transform import TimeSeriesBatch
    rng = np.random.default_rng(seed)
    return TimeSeriesBatch(rng.standard_normal((n, c, t)).astype(np.float32))


@pytest.fixture(scope="session")
def default_dataset():
    """The stock 200-example synthetic dataset, generated once per session."""
    config = SynthConfig()
    batch, labels, profiles = generate_dataset(config)
    return batch, labels, profiles
