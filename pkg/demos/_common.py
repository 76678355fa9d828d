"""Shared setup for the demo scripts: build the fixture stack once, reuse it."""

from pathlib import Path

from foilbox import fileio, fixtures

ARTIFACTS = Path(__file__).parent / "_artifacts"


def fixture_stack(epochs: int = 20):
    """Return (dataset, network); trains and caches on first use."""
    ARTIFACTS.mkdir(exist_ok=True)
    model_path = ARTIFACTS / "model.anet"
    data_dir = ARTIFACTS / "train"
    if not model_path.exists():
        print("building fixture dataset and training the classifier (one-time)...")
        train = fixtures.generate_dataset(0, 512)
        fixtures.save_dataset(train, data_dir)
        net = fixtures.train_fixture(
            train, "convnet", fixtures.TrainConfig(epochs=epochs, batch_size=16, lr=0.1, seed=0)
        )
        fileio.save_model(net, model_path)
        held = fixtures.generate_dataset(1, 128)
        print(f"held-out accuracy: {fixtures.evaluate_accuracy(net, held):.3f}")
    dataset = fixtures.load_dataset(data_dir)
    net = fileio.load_model(model_path)
    return dataset, net
