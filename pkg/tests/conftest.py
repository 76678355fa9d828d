import numpy as np
import pytest

from foilbox import fileio, fixtures

FIXTURE_TRAIN = fixtures.TrainConfig(epochs=20, batch_size=16, lr=0.1, seed=0)


@pytest.fixture(scope="session")
def train_dataset():
    return fixtures.generate_dataset(0, 512)


@pytest.fixture(scope="session")
def heldout_dataset():
    return fixtures.generate_dataset(1, 128)


@pytest.fixture(scope="session")
def fixture_net(train_dataset):
    """The canonical trained fixture classifier (built once per session)."""
    return fixtures.train_fixture(train_dataset, "convnet", FIXTURE_TRAIN)


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory, train_dataset, fixture_net):
    """Dataset directory + model file on disk, as the CLI/harness consume them."""
    root = tmp_path_factory.mktemp("fixture")
    fixtures.save_dataset(train_dataset, root / "train")
    fileio.save_model(fixture_net, root / "model.anet")
    return {"dataset": root / "train", "model": root / "model.anet", "root": root}


@pytest.fixture(scope="session")
def loaded_net(fixture_paths):
    """The float32-truncated network as serialized; what experiments run on."""
    return fileio.load_model(fixture_paths["model"])


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(1234))
