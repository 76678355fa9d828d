"""Minimal dense-tensor inference engine.

Networks are ordered lists of layers (conv / linear / relu / maxpool /
flatten / softmax) over 64-bit float arrays shaped ``(channels, height,
width)``. The engine exposes exactly what the attack stack needs: a
traced forward pass, the gradient of a chosen pre-softmax logit with
respect to the input, and a hook point for rule-modified backward passes
(guided backpropagation). It deliberately has no training graph; weight
gradients for the fixture trainer live in :mod:`foilbox.fixtures`.

Everything is deterministic: identical network + input give bit-identical
outputs, and maxpool ties always route to the first maximal element in
row-major order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

__all__ = [
    "Conv2D",
    "Linear",
    "ReLU",
    "MaxPool2D",
    "Flatten",
    "Softmax",
    "Layer",
    "Network",
    "ForwardTrace",
    "GradientRule",
    "forward",
    "backward_input",
    "backward_modified",
]


def _as_f64(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64))


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64, order="C")  # always copy before freezing
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Conv2D:
    """2-D convolution (cross-correlation) with zero padding.

    weight: (out_channels, in_channels, kh, kw); bias: (out_channels,).
    No dilation, no groups.
    """

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        object.__setattr__(self, "weight", _frozen(self.weight))
        object.__setattr__(self, "bias", _frozen(self.bias))
        if self.weight.ndim != 4:
            raise ShapeError(f"Conv2D weight must be 4-D, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"Conv2D bias shape {self.bias.shape} does not match "
                f"{self.weight.shape[0]} output channels"
            )
        if self.stride < 1 or self.padding < 0:
            raise ShapeError("Conv2D needs stride >= 1 and padding >= 0")


@dataclass(frozen=True)
class Linear:
    """Affine layer y = W x + b; weight (out, in), bias (out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weight", _frozen(self.weight))
        object.__setattr__(self, "bias", _frozen(self.bias))
        if self.weight.ndim != 2:
            raise ShapeError(f"Linear weight must be 2-D, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"Linear bias shape {self.bias.shape} does not match "
                f"{self.weight.shape[0]} outputs"
            )


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool2D:
    window: int
    stride: int

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise ShapeError("MaxPool2D needs window >= 1 and stride >= 1")


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Softmax:
    pass


Layer = Union[Conv2D, Linear, ReLU, MaxPool2D, Flatten, Softmax]


class GradientRule(enum.Enum):
    PLAIN = "plain"
    GUIDED = "guided"


def _layer_output_shape(layer: Layer, shape: tuple, idx: int) -> tuple:
    """Shape arithmetic for the chain check; raises ShapeError on mismatch."""
    if isinstance(layer, Conv2D):
        if len(shape) != 3:
            raise ShapeError(f"layer {idx}: Conv2D needs (c,h,w) input, got {shape}")
        c, h, w = shape
        oc, ic, kh, kw = layer.weight.shape
        if ic != c:
            raise ShapeError(f"layer {idx}: Conv2D expects {ic} channels, got {c}")
        hp, wp = h + 2 * layer.padding, w + 2 * layer.padding
        if kh > hp or kw > wp:
            raise ShapeError(f"layer {idx}: kernel {kh}x{kw} larger than padded input")
        return (oc, (hp - kh) // layer.stride + 1, (wp - kw) // layer.stride + 1)
    if isinstance(layer, Linear):
        if len(shape) != 1:
            raise ShapeError(f"layer {idx}: Linear needs flat input, got {shape}")
        if shape[0] != layer.weight.shape[1]:
            raise ShapeError(
                f"layer {idx}: Linear expects {layer.weight.shape[1]} inputs, got {shape[0]}"
            )
        return (layer.weight.shape[0],)
    if isinstance(layer, MaxPool2D):
        if len(shape) != 3:
            raise ShapeError(f"layer {idx}: MaxPool2D needs (c,h,w) input, got {shape}")
        c, h, w = shape
        if layer.window > h or layer.window > w:
            raise ShapeError(f"layer {idx}: pool window larger than input")
        return (c, (h - layer.window) // layer.stride + 1, (w - layer.window) // layer.stride + 1)
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, (ReLU, Softmax)):
        return shape
    raise ShapeError(f"layer {idx}: unknown layer type {type(layer).__name__}")


class Network:
    """Immutable layer stack f: (c,h,w) -> K class probabilities.

    The layer chain is dimension-checked at construction and the final
    layer must be a Softmax; ``num_classes`` is the width entering it.
    """

    def __init__(self, layers, input_dims: tuple):
        self.layers: tuple = tuple(layers)
        self.input_dims = tuple(int(d) for d in input_dims)
        if len(self.input_dims) != 3 or any(d < 1 for d in self.input_dims):
            raise ShapeError(f"input_dims must be a positive (c,h,w), got {input_dims}")
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ShapeError("final layer must be Softmax")
        if sum(isinstance(l, Softmax) for l in self.layers) != 1:
            raise ShapeError("exactly one Softmax layer allowed (at the end)")
        shape = self.input_dims
        self._shapes = [shape]
        for idx, layer in enumerate(self.layers):
            shape = _layer_output_shape(layer, shape, idx)
            self._shapes.append(shape)
        if len(shape) != 1:
            raise ShapeError("Softmax output must be a flat vector")
        self.num_classes = int(shape[0])

    def layer_shapes(self) -> list:
        """Input shape of every layer plus the final output shape."""
        return list(self._shapes)

    def __repr__(self):
        kinds = ",".join(type(l).__name__ for l in self.layers)
        return f"Network(input={self.input_dims}, K={self.num_classes}, layers=[{kinds}])"


@dataclass
class ForwardTrace:
    """Per-layer activations of one forward pass.

    ``inputs[i]`` / ``outputs[i]`` are the arrays entering / leaving layer
    ``i``; for nonlinear layers the input is the pre-activation. Replaying
    any layer on ``inputs[i]`` reproduces ``outputs[i]`` bit-exactly.
    """

    inputs: tuple
    outputs: tuple


# -- layer kernels ------------------------------------------------------------


def _conv_windows(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """View of sliding (kh,kw) windows: shape (c, Ho, Wo, kh, kw)."""
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    return win[:, ::stride, ::stride]


def _conv_forward(x: np.ndarray, layer: Conv2D) -> np.ndarray:
    oc, ic, kh, kw = layer.weight.shape
    win = _conv_windows(x, kh, kw, layer.stride, layer.padding)
    _, ho, wo, _, _ = win.shape
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, ic * kh * kw)
    out = cols @ layer.weight.reshape(oc, -1).T + layer.bias
    return np.ascontiguousarray(out.T.reshape(oc, ho, wo))


def _conv_backward_input(g: np.ndarray, layer: Conv2D, in_shape: tuple) -> np.ndarray:
    """Gradient w.r.t. the conv input given gradient g w.r.t. its output."""
    oc, ic, kh, kw = layer.weight.shape
    c, h, w = in_shape
    s, p = layer.stride, layer.padding
    _, ho, wo = g.shape
    gx = np.zeros((c, h + 2 * p, w + 2 * p))
    gflat = g.reshape(oc, -1)
    for u in range(kh):
        for v in range(kw):
            # each output (i,j) touches padded input at (u + i*s, v + j*s)
            contrib = (layer.weight[:, :, u, v].T @ gflat).reshape(c, ho, wo)
            gx[:, u : u + s * ho : s, v : v + s * wo : s] += contrib
    if p:
        gx = gx[:, p : p + h, p : p + w]
    return np.ascontiguousarray(gx)


def _pool_forward(x: np.ndarray, layer: MaxPool2D) -> np.ndarray:
    win = sliding_window_view(x, (layer.window, layer.window), axis=(1, 2))
    win = win[:, :: layer.stride, :: layer.stride]
    return np.ascontiguousarray(win.max(axis=(3, 4)))


def _pool_argmax(x: np.ndarray, layer: MaxPool2D):
    """Row/col index of the winning element per window (first max, row-major)."""
    k, s = layer.window, layer.stride
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]
    c, ho, wo, _, _ = win.shape
    flat = win.reshape(c, ho, wo, k * k)
    idx = flat.argmax(axis=3)  # argmax returns the first max -> row-major tie rule
    ci, ii, ji = np.indices((c, ho, wo))
    rows = ii * s + idx // k
    cols = ji * s + idx % k
    return ci, rows, cols


def _pool_scatter(values: np.ndarray, x: np.ndarray, layer: MaxPool2D) -> np.ndarray:
    """Route per-window values back onto the winning input positions."""
    out = np.zeros_like(x)
    ci, rows, cols = _pool_argmax(x, layer)
    np.add.at(out, (ci, rows, cols), values)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _layer_forward(layer: Layer, x: np.ndarray) -> np.ndarray:
    if isinstance(layer, Conv2D):
        return _conv_forward(x, layer)
    if isinstance(layer, Linear):
        return layer.weight @ x + layer.bias
    if isinstance(layer, ReLU):
        return np.maximum(x, 0.0)
    if isinstance(layer, MaxPool2D):
        return _pool_forward(x, layer)
    if isinstance(layer, Flatten):
        return np.ascontiguousarray(x.reshape(-1))
    if isinstance(layer, Softmax):
        return _softmax(x)
    raise ShapeError(f"unknown layer type {type(layer).__name__}")


# -- public operations ---------------------------------------------------------


def forward(net: Network, x: np.ndarray):
    """Run the network on one image.

    Returns ``(logits, probs, trace)`` where logits are the values entering
    the final Softmax and the trace records every layer's input and output.
    """
    x = _as_f64(x)
    if x.shape != net.input_dims:
        raise ShapeError(f"input shape {x.shape} != network input {net.input_dims}")
    inputs, outputs = [], []
    a = x
    for layer in net.layers:
        inputs.append(a)
        a = _layer_forward(layer, a)
        outputs.append(a)
    logits = inputs[-1]
    probs = outputs[-1]
    return logits, probs, ForwardTrace(tuple(inputs), tuple(outputs))


def _seed_gradient(net: Network, trace: ForwardTrace, class_idx: int, post_softmax: bool):
    if not 0 <= class_idx < net.num_classes:
        raise IndexError(f"class_idx {class_idx} out of range [0,{net.num_classes})")
    onehot = np.zeros(net.num_classes)
    onehot[class_idx] = 1.0
    if not post_softmax:
        return onehot
    # d prob_y / d logit_k = p_y (delta_yk - p_k)
    p = trace.outputs[-1]
    return p[class_idx] * (onehot - p)


def backward_modified(
    net: Network,
    trace: ForwardTrace,
    class_idx: int,
    rule: GradientRule = GradientRule.PLAIN,
    *,
    post_softmax: bool = False,
    stage_hook: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray:
    """Backpropagate one class score to the input under a ReLU rule.

    PLAIN is the true input gradient of the pre-softmax logit (or of the
    softmax probability when ``post_softmax``). GUIDED additionally zeroes
    negative components of the backpropagated signal at every ReLU, i.e.
    it multiplies by 1[pre-activation > 0] * 1[incoming signal > 0].

    ``stage_hook(layer_index, grad)`` is called with the signal right
    after it passes each layer (used by instrumented tests).
    """
    g = _seed_gradient(net, trace, class_idx, post_softmax)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        a_in = trace.inputs[i]
        if isinstance(layer, Softmax):
            pass  # seed already accounts for it
        elif isinstance(layer, Linear):
            g = layer.weight.T @ g
        elif isinstance(layer, Conv2D):
            g = _conv_backward_input(g, layer, a_in.shape)
        elif isinstance(layer, ReLU):
            mask = a_in > 0.0
            if rule is GradientRule.GUIDED:
                mask = mask & (g > 0.0)
            g = np.where(mask, g, 0.0)
        elif isinstance(layer, MaxPool2D):
            g = _pool_scatter(g, a_in, layer)
        elif isinstance(layer, Flatten):
            g = g.reshape(a_in.shape)
        if stage_hook is not None:
            stage_hook(i, g)
    return np.ascontiguousarray(g)


def backward_input(
    net: Network, trace: ForwardTrace, class_idx: int, *, post_softmax: bool = False
) -> np.ndarray:
    """Gradient of the class score w.r.t. the input image."""
    return backward_modified(net, trace, class_idx, GradientRule.PLAIN, post_softmax=post_softmax)
