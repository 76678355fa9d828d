"""Binary file formats: TNSR tensors, ANET models, LBLS labels, PGM/PPM images.

All integers are little-endian. Tensor payloads are stored as float32 and
upcast to float64 on load, so a save/load round trip truncates precision
once and is bit-stable afterwards.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .engine import Conv2D, Flatten, Linear, MaxPool2D, Network, ReLU, Softmax
from .errors import FormatError

__all__ = [
    "save_tensor",
    "load_tensor",
    "save_model",
    "load_model",
    "save_labels",
    "load_labels",
    "write_pgm",
    "write_ppm",
]

TENSOR_MAGIC = b"TNSR"
MODEL_MAGIC = b"ANET"
LABELS_MAGIC = b"LBLS"

_LAYER_TAGS = {Conv2D: 0, Linear: 1, ReLU: 2, MaxPool2D: 3, Flatten: 4, Softmax: 5}


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.name}: truncated file (needed {n} more bytes)")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def expect_magic(self, magic: bytes):
        got = self.take(len(magic))
        if got != magic:
            raise FormatError(f"{self.name}: bad magic {got!r}, expected {magic!r}")

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.name}: {len(self.data) - self.pos} trailing bytes")


# -- TNSR ----------------------------------------------------------------------


def _tensor_bytes(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim > 255:
        raise FormatError("TNSR supports at most 255 dimensions")
    head = TENSOR_MAGIC + struct.pack("<BB", 1, a.ndim)
    head += struct.pack(f"<{a.ndim}I", *a.shape)
    return head + a.astype("<f4").tobytes()


def _read_tensor(r: _Reader) -> np.ndarray:
    r.expect_magic(TENSOR_MAGIC)
    version = r.u8()
    if version != 1:
        raise FormatError(f"{r.name}: unsupported TNSR version {version}")
    ndim = r.u8()
    dims = [r.u32() for _ in range(ndim)]
    if any(d < 1 for d in dims):
        raise FormatError(f"{r.name}: non-positive dimension in {dims}")
    count = int(np.prod(dims, dtype=np.int64)) if dims else 1
    payload = r.take(4 * count)
    a = np.frombuffer(payload, dtype="<f4", count=count).astype(np.float64)
    return np.ascontiguousarray(a.reshape(dims))


def save_tensor(a: np.ndarray, path) -> None:
    Path(path).write_bytes(_tensor_bytes(a))


def load_tensor(path) -> np.ndarray:
    r = _Reader(Path(path).read_bytes(), str(path))
    t = _read_tensor(r)
    r.done()
    return t


# -- ANET ----------------------------------------------------------------------


def _layer_bytes(layer) -> bytes:
    tag = _LAYER_TAGS[type(layer)]
    out = struct.pack("<B", tag)
    if isinstance(layer, Conv2D):
        out += struct.pack("<II", layer.stride, layer.padding)
        out += _tensor_bytes(layer.weight) + _tensor_bytes(layer.bias)
    elif isinstance(layer, Linear):
        out += _tensor_bytes(layer.weight) + _tensor_bytes(layer.bias)
    elif isinstance(layer, MaxPool2D):
        out += struct.pack("<II", layer.window, layer.stride)
    return out


def _read_layer(r: _Reader):
    tag = r.u8()
    if tag == 0:
        stride, padding = r.u32(), r.u32()
        weight = _read_tensor(r)
        bias = _read_tensor(r)
        return Conv2D(weight, bias, stride=stride, padding=padding)
    if tag == 1:
        return Linear(_read_tensor(r), _read_tensor(r))
    if tag == 2:
        return ReLU()
    if tag == 3:
        window, stride = r.u32(), r.u32()
        return MaxPool2D(window=window, stride=stride)
    if tag == 4:
        return Flatten()
    if tag == 5:
        return Softmax()
    raise FormatError(f"{r.name}: unknown layer tag {tag}")


def save_model(net: Network, path) -> None:
    """Write a network as an ANET file (weights truncated to float32)."""
    out = MODEL_MAGIC + struct.pack("<B", 1)
    out += struct.pack("<III", *net.input_dims)
    out += struct.pack("<I", len(net.layers))
    for layer in net.layers:
        out += _layer_bytes(layer)
    Path(path).write_bytes(out)


def load_model(path) -> Network:
    """Read an ANET file back into a dimension-checked Network."""
    r = _Reader(Path(path).read_bytes(), str(path))
    r.expect_magic(MODEL_MAGIC)
    version = r.u8()
    if version != 1:
        raise FormatError(f"{r.name}: unsupported ANET version {version}")
    input_dims = (r.u32(), r.u32(), r.u32())
    n_layers = r.u32()
    layers = [_read_layer(r) for _ in range(n_layers)]
    r.done()
    return Network(layers, input_dims)


# -- LBLS ----------------------------------------------------------------------


def save_labels(labels, path) -> None:
    labels = [int(v) for v in labels]
    if any(v < 0 for v in labels):
        raise FormatError("labels must be non-negative")
    out = LABELS_MAGIC + struct.pack("<B", 1) + struct.pack("<I", len(labels))
    out += struct.pack(f"<{len(labels)}I", *labels)
    Path(path).write_bytes(out)


def load_labels(path) -> list:
    r = _Reader(Path(path).read_bytes(), str(path))
    r.expect_magic(LABELS_MAGIC)
    version = r.u8()
    if version != 1:
        raise FormatError(f"{r.name}: unsupported LBLS version {version}")
    count = r.u32()
    labels = [r.u32() for _ in range(count)]
    r.done()
    return labels


# -- portable image dumps --------------------------------------------------------


def write_pgm(values: np.ndarray, path) -> None:
    """Render a 2-D map as binary PGM (P5) after min-max normalization.

    A constant map has no range to stretch and renders as mid-gray 128.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise FormatError(f"PGM needs a 2-D map, got shape {values.shape}")
    lo, hi = values.min(), values.max()
    if hi > lo:
        scaled = np.rint((values - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.full_like(values, 128.0)
    h, w = values.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + scaled.astype(np.uint8).tobytes())


def write_ppm(image: np.ndarray, path) -> None:
    """Render a (c,h,w) image with pixels in [0,1] as binary PPM (P6).

    Single-channel images are replicated to gray RGB; 3-channel images are
    written as-is.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise FormatError(f"PPM needs a (1|3,h,w) image, got shape {image.shape}")
    if image.shape[0] == 1:
        image = np.repeat(image, 3, axis=0)
    rgb = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    _, h, w = rgb.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + rgb.transpose(1, 2, 0).tobytes())
