import numpy as np
import pytest

from zoneprior.phantom import PhantomSpec, generate_dataset
from zoneprior.preprocess import preprocess_dataset


@pytest.fixture(scope="session")
def small_spec():
    # small in-plane grid keeps unit tests fast while still exercising
    # the crop (240 > 216) and the z crop (20 -> 18)
    return PhantomSpec(shape=(240, 240, 20), seed=11)


@pytest.fixture(scope="session")
def raw_dataset(small_spec, tmp_path_factory):
    out = tmp_path_factory.mktemp("raw")
    return generate_dataset(small_spec, 8, out)


@pytest.fixture(scope="session")
def processed_dataset(raw_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("proc")
    return preprocess_dataset(raw_dataset, out)


def random_labels(shape, rng) -> np.ndarray:
    return rng.integers(0, 3, size=shape).astype(np.uint8)
