"""Desk-scale stand-ins for pretrained models and image datasets.

Four procedurally drawn 16x16 grayscale classes (horizontal bar, vertical
bar, cross, centered blob) plus a small SGD trainer that produces the
fixture classifier used throughout the test suite. Generation and
training are fully deterministic under a fixed seed, down to the bytes of
the emitted TNSR/ANET files.

The engine deliberately exposes no weight gradients, so the trainer does
its own layer-local backward pass over the fixed architectures, reusing
the engine's forward/backward kernels for the input-side propagation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .engine import (
    Conv2D,
    Flatten,
    Linear,
    MaxPool2D,
    Network,
    ReLU,
    Softmax,
    _conv_backward_input,
    _conv_windows,
    _layer_forward,
    _pool_scatter,
)
from .errors import ConfigError, TrainingError

__all__ = [
    "SyntheticDataset",
    "TrainConfig",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "init_network",
    "train_fixture",
    "evaluate_accuracy",
    "ARCHITECTURES",
]

IMAGE_SIZE = 16
NUM_CLASSES = 4
ARCHITECTURES = ("convnet", "mlp")


@dataclass
class SyntheticDataset:
    images: np.ndarray  # (n, 1, 16, 16) in [0,1]
    labels: list
    seed: int


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("batch_size and lr must be positive")


def _draw_clean(rng: np.random.Generator, cls: int) -> np.ndarray:
    """One noise-free class prototype with seeded positional jitter."""
    img = np.full((IMAGE_SIZE, IMAGE_SIZE), 0.1)
    if cls == 0:  # horizontal bar
        r = int(rng.integers(2, IMAGE_SIZE - 5))
        img[r : r + 3, :] = 0.9
    elif cls == 1:  # vertical bar
        c = int(rng.integers(2, IMAGE_SIZE - 5))
        img[:, c : c + 3] = 0.9
    elif cls == 2:  # cross
        r = int(rng.integers(5, 9))
        c = int(rng.integers(5, 9))
        img[r : r + 3, :] = 0.9
        img[:, c : c + 3] = 0.9
    else:  # centered blob
        cy = 7.5 + rng.uniform(-1.5, 1.5)
        cx = 7.5 + rng.uniform(-1.5, 1.5)
        width = rng.uniform(1.8, 2.8)
        yy, xx = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE]
        img = img + 0.85 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
    return img


def generate_dataset(seed: int, n: int, noise: float = 0.1) -> SyntheticDataset:
    """Emit ``n`` images with labels cycling 0,1,2,3 (n must divide by 4)."""
    if n % NUM_CLASSES != 0:
        raise ConfigError(f"dataset size {n} must be divisible by {NUM_CLASSES}")
    rng = np.random.Generator(np.random.PCG64(seed))
    images = np.empty((n, 1, IMAGE_SIZE, IMAGE_SIZE))
    labels = []
    for i in range(n):
        cls = i % NUM_CLASSES
        img = _draw_clean(rng, cls)
        if noise > 0:
            img = img + rng.uniform(-noise, noise, img.shape)
        images[i, 0] = np.clip(img, 0.0, 1.0)
        labels.append(cls)
    return SyntheticDataset(images=images, labels=labels, seed=seed)


def save_dataset(ds: SyntheticDataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fileio.save_tensor(ds.images, directory / "images.tnsr")
    fileio.save_labels(ds.labels, directory / "labels.lbls")


def load_dataset(directory) -> SyntheticDataset:
    directory = Path(directory)
    images = fileio.load_tensor(directory / "images.tnsr")
    labels = fileio.load_labels(directory / "labels.lbls")
    return SyntheticDataset(images=images, labels=labels, seed=-1)


# -- architectures + trainer -----------------------------------------------------


def _he_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def _init_layers(arch: str, rng: np.random.Generator):
    if arch == "convnet":
        return [
            Conv2D(_he_init(rng, (8, 1, 3, 3), 9), np.zeros(8), stride=1, padding=1),
            ReLU(),
            MaxPool2D(window=2, stride=2),
            Conv2D(_he_init(rng, (16, 8, 3, 3), 72), np.zeros(16), stride=1, padding=1),
            ReLU(),
            MaxPool2D(window=2, stride=2),
            Flatten(),
            Linear(_he_init(rng, (32, 256), 256), np.zeros(32)),
            ReLU(),
            Linear(_he_init(rng, (4, 32), 32), np.zeros(4)),
            Softmax(),
        ]
    if arch == "mlp":
        return [
            Flatten(),
            Linear(_he_init(rng, (32, 256), 256), np.zeros(32)),
            ReLU(),
            Linear(_he_init(rng, (4, 32), 32), np.zeros(4)),
            Softmax(),
        ]
    raise ConfigError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")


def init_network(arch: str, seed: int) -> Network:
    """Seeded random initialization of a fixture architecture."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return Network(_init_layers(arch, rng), (1, IMAGE_SIZE, IMAGE_SIZE))


def _conv_weight_grad(layer: Conv2D, a_in: np.ndarray, g: np.ndarray) -> np.ndarray:
    oc, ic, kh, kw = layer.weight.shape
    win = _conv_windows(a_in, kh, kw, layer.stride, layer.padding)
    _, ho, wo, _, _ = win.shape
    cols = win.transpose(0, 3, 4, 1, 2).reshape(ic * kh * kw, ho * wo)
    return (g.reshape(oc, -1) @ cols.T).reshape(oc, ic, kh, kw)


def _forward_cached(layers, x):
    acts = [x]
    for layer in layers:
        acts.append(_layer_forward(layer, acts[-1]))
    return acts


def _backward_param_grads(layers, acts, y: int):
    """Cross-entropy gradients for every parametric layer of one sample."""
    probs = acts[-1]
    g = probs.copy()
    g[y] -= 1.0  # d CE / d logits through the softmax
    grads = {}
    for i in range(len(layers) - 2, -1, -1):
        layer = layers[i]
        a_in = acts[i]
        if isinstance(layer, Linear):
            grads[i] = (np.outer(g, a_in), g.copy())
            g = layer.weight.T @ g
        elif isinstance(layer, Conv2D):
            grads[i] = (_conv_weight_grad(layer, a_in, g), g.sum(axis=(1, 2)))
            g = _conv_backward_input(g, layer, a_in.shape)
        elif isinstance(layer, ReLU):
            g = np.where(a_in > 0.0, g, 0.0)
        elif isinstance(layer, MaxPool2D):
            g = _pool_scatter(g, a_in, layer)
        elif isinstance(layer, Flatten):
            g = g.reshape(a_in.shape)
    return grads


def train_fixture(
    dataset: SyntheticDataset,
    arch: str = "convnet",
    cfg: TrainConfig | None = None,
    epoch_losses: list | None = None,
) -> Network:
    """Train a fixture classifier with plain minibatch SGD on cross-entropy.

    Zero epochs returns the seeded initialization unchanged. A NaN epoch
    loss aborts with a TrainingError naming the epoch. When the caller
    passes a list as ``epoch_losses`` the mean per-sample loss of every
    epoch is appended to it.
    """
    cfg = cfg or TrainConfig()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    layers = _init_layers(arch, rng)
    n = dataset.images.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            acc = {}
            for idx in batch:
                acts = _forward_cached(layers, dataset.images[idx])
                epoch_loss += -np.log(max(acts[-1][dataset.labels[idx]], 1e-300))
                for li, (dw, db) in _backward_param_grads(layers, acts, dataset.labels[idx]).items():
                    if li in acc:
                        acc[li] = (acc[li][0] + dw, acc[li][1] + db)
                    else:
                        acc[li] = (dw, db)
            scale = cfg.lr / len(batch)
            for li, (dw, db) in acc.items():
                old = layers[li]
                if isinstance(old, Linear):
                    layers[li] = Linear(old.weight - scale * dw, old.bias - scale * db)
                else:
                    layers[li] = Conv2D(
                        old.weight - scale * dw, old.bias - scale * db, old.stride, old.padding
                    )
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"training diverged (non-finite loss) at epoch {epoch}")
        if epoch_losses is not None:
            epoch_losses.append(float(epoch_loss) / n)
    return Network(layers, (1, IMAGE_SIZE, IMAGE_SIZE))


def evaluate_accuracy(net: Network, dataset: SyntheticDataset) -> float:
    """Fraction of dataset images whose argmax class matches the label."""
    hits = 0
    for img, label in zip(dataset.images, dataset.labels):
        acts = _forward_cached(net.layers, img)
        hits += int(np.argmax(acts[-1]) == label)
    return hits / len(dataset.labels)
