import numpy as np
import pytest

from hsiaccel import NetParams, derive_config, random_weights
from hsiaccel.synth import make_synthetic_scene


@pytest.fixture(scope="session")
def small_spec():
    """Desk-scale network: 40 bands, 3 classes, patch 5, 3x3 Block 1."""
    return derive_config(40, 3, NetParams(n_b=4, p=5, block1_kernel="3x3"))


@pytest.fixture(scope="session")
def small_spec_1x1():
    return derive_config(40, 3, NetParams(n_b=4, p=3, block1_kernel="1x1"))


@pytest.fixture(scope="session")
def small_weights(small_spec):
    return random_weights(small_spec, seed=11)


@pytest.fixture(scope="session")
def scene():
    """Synthetic 3-class striped scene matching small_spec."""
    return make_synthetic_scene(28, 24, 40, 3, noise=0.05, seed=5)


@pytest.fixture(scope="session")
def trained(small_spec, scene):
    """Desk-scale trained model + metrics on the synthetic scene."""
    from desk_train import train_desk_model

    cube, labels = scene
    model, metrics = train_desk_model(small_spec, cube, labels, seed=0, epochs=30)
    return model, metrics


def random_patch(rng, p, bands, scale=1.0):
    return (scale * rng.standard_normal((p, p, bands))).astype(np.float32)
