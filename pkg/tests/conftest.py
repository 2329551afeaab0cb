import numpy as np
import pytest

from privedit.fixtures import make_workspace, synthetic_portrait, write_sidecar


@pytest.fixture(scope="session")
def portrait_512():
    return synthetic_portrait(512, 512, seed=1)


@pytest.fixture(scope="session")
def portrait_256():
    return synthetic_portrait(256, 256, seed=2)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


@pytest.fixture()
def workspace(tmp_path):
    return make_workspace(tmp_path / "ws", image_ids=("000001",), size=192)
