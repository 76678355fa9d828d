import numpy as np
import pytest

from foilbox import fileio
from foilbox.engine import forward
from foilbox.errors import ConfigError, TrainingError
from foilbox.fixtures import (
    TrainConfig,
    evaluate_accuracy,
    generate_dataset,
    init_network,
    load_dataset,
    save_dataset,
    train_fixture,
)


def test_same_seed_gives_byte_identical_files(tmp_path):
    for name in ("a", "b"):
        save_dataset(generate_dataset(42, 16), tmp_path / name)
    assert (tmp_path / "a/images.tnsr").read_bytes() == (tmp_path / "b/images.tnsr").read_bytes()
    assert (tmp_path / "a/labels.lbls").read_bytes() == (tmp_path / "b/labels.lbls").read_bytes()


def test_labels_cycle_round_robin():
    assert generate_dataset(0, 8).labels == [0, 1, 2, 3, 0, 1, 2, 3]


def test_size_must_divide_by_four():
    with pytest.raises(ConfigError):
        generate_dataset(0, 10)


def test_pixels_stay_in_range():
    images = generate_dataset(3, 64).images
    assert images.min() >= 0.0 and images.max() <= 1.0
    assert images.shape == (64, 1, 16, 16)


def test_horizontal_bar_band_dominates_before_noise():
    ds = generate_dataset(11, 32, noise=0.0)
    for img, label in zip(ds.images, ds.labels):
        if label != 0:
            continue
        row_means = img[0].mean(axis=1)
        band = np.sort(row_means)[-3:].mean()  # the 3 bar rows
        off = np.sort(row_means)[:-3].mean()
        assert band >= 2.0 * off


def test_dataset_round_trip(tmp_path):
    ds = generate_dataset(5, 12)
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    np.testing.assert_array_equal(back.images, ds.images.astype(np.float32).astype(np.float64))
    assert back.labels == ds.labels


def test_zero_epochs_returns_seeded_init_unchanged():
    ds = generate_dataset(0, 8)
    trained = train_fixture(ds, "convnet", TrainConfig(epochs=0, seed=7))
    fresh = init_network("convnet", 7)
    x = ds.images[0]
    assert np.array_equal(forward(trained, x)[0], forward(fresh, x)[0])


def test_training_loss_strictly_decreases_first_three_epochs(train_dataset):
    losses: list = []
    train_fixture(train_dataset, "convnet", TrainConfig(epochs=3, seed=0), epoch_losses=losses)
    assert len(losses) == 3
    assert losses[0] > losses[1] > losses[2]


def test_same_seed_training_is_bit_identical(tmp_path):
    ds = generate_dataset(1, 64)
    for name in ("m1.anet", "m2.anet"):
        net = train_fixture(ds, "convnet", TrainConfig(epochs=2, batch_size=16, seed=3))
        fileio.save_model(net, tmp_path / name)
    assert (tmp_path / "m1.anet").read_bytes() == (tmp_path / "m2.anet").read_bytes()


def test_divergence_raises_training_error_naming_epoch():
    ds = generate_dataset(0, 16)
    with np.errstate(all="ignore"):  # the overflow is the point of the test
        with pytest.raises(TrainingError, match="epoch 1"):
            train_fixture(ds, "convnet", TrainConfig(epochs=4, lr=1e100, seed=0))


def test_mlp_architecture_trains():
    ds = generate_dataset(2, 64)
    net = train_fixture(ds, "mlp", TrainConfig(epochs=5, seed=0))
    assert evaluate_accuracy(net, ds) >= 0.75


def test_unknown_architecture():
    ds = generate_dataset(0, 8)
    with pytest.raises(ConfigError):
        train_fixture(ds, "resnet", TrainConfig(epochs=0))


def test_fixture_reaches_heldout_accuracy(fixture_net, heldout_dataset):
    assert evaluate_accuracy(fixture_net, heldout_dataset) >= 0.90


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=-1)
    with pytest.raises(ConfigError):
        TrainConfig(lr=0.0)
