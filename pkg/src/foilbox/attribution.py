"""Pixel-attribution methods: gradient, gradient*input, guided backprop,
relevance propagation, and reference-difference contributions.

Every method maps an image ``(c,h,w)`` and a class index to a 2-D map
``(h,w)`` by channel-reducing a per-pixel attribution tensor. Methods are
pure functions of (network, image, class, config) and safe to call
concurrently. By default all of them score the pre-softmax logit of the
chosen class; the gradient-family methods can optionally score the
softmax probability instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (
    Conv2D,
    Flatten,
    ForwardTrace,
    GradientRule,
    Linear,
    MaxPool2D,
    Network,
    ReLU,
    Softmax,
    _conv_backward_input,
    _conv_forward,
    _pool_scatter,
    backward_modified,
    forward,
)
from .errors import NumericDegeneracyError, ShapeError

__all__ = [
    "METHODS",
    "LrpConfig",
    "DeepLiftConfig",
    "channel_reduce",
    "explain",
    "explain_gradient",
    "explain_grad_times_input",
    "explain_guided_backprop",
    "explain_lrp",
    "explain_deeplift",
]

METHODS = ("gradient", "gxi", "gbp", "lrp", "deeplift")


@dataclass(frozen=True)
class LrpConfig:
    """Relevance-propagation settings.

    ``epsilon`` stabilizes the denominators of the generic rule;
    ``input_low``/``input_high`` are the per-channel pixel bounds used by
    the bounded-input rule at the first parametric layer (``input_rule``
    can fall back to the epsilon rule there instead). ``weight_transform``
    is a hook for weight-modifying rule variants; only the identity is
    implemented.
    """

    epsilon: float = 1e-6
    input_low: float | tuple = 0.0
    input_high: float | tuple = 1.0
    weight_transform: str = "identity"
    input_rule: str = "zb"  # "zb" | "epsilon"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.weight_transform != "identity":
            raise ValueError(f"unsupported weight transform {self.weight_transform!r}")
        if self.input_rule not in ("zb", "epsilon"):
            raise ValueError(f"input_rule must be 'zb' or 'epsilon', got {self.input_rule!r}")
        lo = np.atleast_1d(np.asarray(self.input_low, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.input_high, dtype=np.float64))
        if np.any(lo > hi):
            raise ValueError("input_low must be <= input_high per channel")


@dataclass(frozen=True)
class DeepLiftConfig:
    """Reference image and the near-zero-delta guard for the rescale rule."""

    reference: np.ndarray | None = None  # None -> all-zero image
    stability_tau: float = 1e-9

    def __post_init__(self):
        if self.stability_tau <= 0:
            raise ValueError("stability_tau must be positive")


def channel_reduce(map3d: np.ndarray, mode: str = "sum") -> np.ndarray:
    """Collapse a (c,h,w) attribution tensor to an (h,w) map.

    ``sum`` adds channels with sign; ``sumabs`` adds absolute values.
    """
    map3d = np.asarray(map3d, dtype=np.float64)
    if map3d.ndim != 3 or map3d.shape[0] < 1:
        raise ShapeError(f"channel_reduce needs (c,h,w), got {map3d.shape}")
    if mode == "sum":
        return map3d.sum(axis=0)
    if mode == "sumabs":
        return np.abs(map3d).sum(axis=0)
    raise ValueError(f"unknown reduce mode {mode!r}")


def _trace_or_forward(net: Network, x: np.ndarray, trace: ForwardTrace | None) -> ForwardTrace:
    if trace is not None:
        return trace
    return forward(net, x)[2]


def explain_gradient(
    net: Network,
    x: np.ndarray,
    y: int,
    *,
    trace: ForwardTrace | None = None,
    post_softmax: bool = False,
    reduce: str = "sum",
) -> np.ndarray:
    """Saliency: channel-reduced input gradient of the class score."""
    trace = _trace_or_forward(net, x, trace)
    g = backward_modified(net, trace, y, GradientRule.PLAIN, post_softmax=post_softmax)
    return channel_reduce(g, reduce)


def explain_grad_times_input(
    net: Network,
    x: np.ndarray,
    y: int,
    *,
    trace: ForwardTrace | None = None,
    post_softmax: bool = False,
    reduce: str = "sum",
) -> np.ndarray:
    """Input gradient weighted elementwise by the input itself."""
    trace = _trace_or_forward(net, x, trace)
    g = backward_modified(net, trace, y, GradientRule.PLAIN, post_softmax=post_softmax)
    return channel_reduce(g * trace.inputs[0], reduce)


def explain_guided_backprop(
    net: Network,
    x: np.ndarray,
    y: int,
    *,
    trace: ForwardTrace | None = None,
    post_softmax: bool = False,
    reduce: str = "sum",
) -> np.ndarray:
    """Gradient variant that zeroes negative backward signal at ReLUs."""
    trace = _trace_or_forward(net, x, trace)
    g = backward_modified(net, trace, y, GradientRule.GUIDED, post_softmax=post_softmax)
    return channel_reduce(g, reduce)


# -- relevance propagation -------------------------------------------------------


def _bounds_like(value, shape: tuple) -> np.ndarray:
    """Broadcast a scalar or per-channel bound to a (c,h,w) image."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape == (shape[0],):
        return np.broadcast_to(arr[:, None, None], shape).copy()
    raise ShapeError(f"bound shape {arr.shape} does not broadcast to image {shape}")


def _check_denominator(denom: np.ndarray, layer_index: int):
    m = np.abs(denom).min()
    if m < 1e-300:
        raise NumericDegeneracyError(
            layer_index, f"relevance denominator ~0 (|min|={m:.3e}) at layer {layer_index}"
        )


def _lrp_epsilon_linear(layer: Linear, a: np.ndarray, rel: np.ndarray, eps: float, idx: int):
    z = layer.weight @ a  # bias excluded: relevance is fully redistributed
    denom = z + eps
    _check_denominator(denom, idx)
    s = rel / denom
    return a * (layer.weight.T @ s)


def _lrp_epsilon_conv(layer: Conv2D, a: np.ndarray, rel: np.ndarray, eps: float, idx: int):
    zero_bias = Conv2D(layer.weight, np.zeros(layer.weight.shape[0]), layer.stride, layer.padding)
    z = _conv_forward(a, zero_bias)
    denom = z + eps
    _check_denominator(denom, idx)
    s = rel / denom
    return a * _conv_backward_input(s, layer, a.shape)


def _lrp_zb_linear(layer: Linear, a, rel, low, high, eps: float, idx: int):
    wp = np.clip(layer.weight, 0.0, None)
    wm = np.clip(layer.weight, None, 0.0)
    # for in-range pixels every share a*w - l*w+ - h*w- is >= 0, so the
    # epsilon keeps the denominator strictly positive (never cancelling)
    denom = layer.weight @ a - wp @ low - wm @ high + eps
    _check_denominator(denom, idx)
    s = rel / denom
    return a * (layer.weight.T @ s) - low * (wp.T @ s) - high * (wm.T @ s)


def _lrp_zb_conv(layer: Conv2D, a, rel, low, high, eps: float, idx: int):
    zeros = np.zeros(layer.weight.shape[0])
    w = Conv2D(layer.weight, zeros, layer.stride, layer.padding)
    wp = Conv2D(np.clip(layer.weight, 0.0, None), zeros, layer.stride, layer.padding)
    wm = Conv2D(np.clip(layer.weight, None, 0.0), zeros, layer.stride, layer.padding)
    denom = _conv_forward(a, w) - _conv_forward(low, wp) - _conv_forward(high, wm) + eps
    _check_denominator(denom, idx)
    s = rel / denom
    return (
        a * _conv_backward_input(s, w, a.shape)
        - low * _conv_backward_input(s, wp, a.shape)
        - high * _conv_backward_input(s, wm, a.shape)
    )


def explain_lrp(
    net: Network,
    x: np.ndarray,
    y: int,
    cfg: LrpConfig | None = None,
    *,
    trace: ForwardTrace | None = None,
    reduce: str = "sum",
) -> np.ndarray:
    """Propagate the class logit backwards as a conserved relevance budget.

    Output relevance is seeded one-hot with the logit of class ``y``.
    Linear/conv layers redistribute relevance proportionally to each
    input's share ``a_j w_jk`` of the (bias-free) pre-activation, with
    ``epsilon`` added to the denominator; ReLUs mask by activation sign,
    maxpool routes winner-takes-all, and the first parametric layer
    applies the bounded-input rule using the configured pixel bounds.
    """
    cfg = cfg or LrpConfig()
    if not 0 <= y < net.num_classes:
        raise IndexError(f"class {y} out of range [0,{net.num_classes})")
    trace = _trace_or_forward(net, x, trace)
    logits = trace.inputs[-1]
    rel = np.zeros(net.num_classes)
    rel[y] = logits[y]

    first_param = min(
        (i for i, l in enumerate(net.layers) if isinstance(l, (Conv2D, Linear))),
        default=None,
    )
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        a = trace.inputs[i]
        if isinstance(layer, Softmax):
            continue  # relevance is seeded at the logits
        if isinstance(layer, ReLU):
            rel = np.where(a > 0.0, rel, 0.0)
        elif isinstance(layer, MaxPool2D):
            rel = _pool_scatter(rel, a, layer)
        elif isinstance(layer, Flatten):
            rel = rel.reshape(a.shape)
        elif isinstance(layer, Linear):
            if i == first_param and cfg.input_rule == "zb":
                low = _bounds_like(cfg.input_low, net.input_dims).reshape(-1)
                high = _bounds_like(cfg.input_high, net.input_dims).reshape(-1)
                rel = _lrp_zb_linear(layer, a, rel, low, high, cfg.epsilon, i)
            else:
                rel = _lrp_epsilon_linear(layer, a, rel, cfg.epsilon, i)
        elif isinstance(layer, Conv2D):
            if i == first_param and cfg.input_rule == "zb":
                low = _bounds_like(cfg.input_low, a.shape)
                high = _bounds_like(cfg.input_high, a.shape)
                rel = _lrp_zb_conv(layer, a, rel, low, high, cfg.epsilon, i)
            else:
                rel = _lrp_epsilon_conv(layer, a, rel, cfg.epsilon, i)
    return channel_reduce(rel.reshape(net.input_dims), reduce)


# -- reference-difference contributions --------------------------------------------


def explain_deeplift(
    net: Network,
    x: np.ndarray,
    y: int,
    cfg: DeepLiftConfig | None = None,
    *,
    trace: ForwardTrace | None = None,
    reference_trace: ForwardTrace | None = None,
    reduce: str = "sum",
) -> np.ndarray:
    """Rescale-rule contributions relative to a reference image.

    Multipliers chain backwards like gradients, except each ReLU uses the
    activation-difference slope (delta out / delta in) where the input
    delta exceeds ``stability_tau`` and the plain gradient elsewhere. The
    final map is multiplier * (x - reference), so on linear/ReLU stacks
    contributions sum to logit_y(x) - logit_y(reference).
    """
    cfg = cfg or DeepLiftConfig()
    x = np.asarray(x, dtype=np.float64)
    ref = cfg.reference
    if ref is None:
        ref = np.zeros(net.input_dims)
    ref = np.asarray(ref, dtype=np.float64)
    if ref.shape != tuple(net.input_dims):
        raise ShapeError(f"reference shape {ref.shape} != network input {net.input_dims}")
    if not 0 <= y < net.num_classes:
        raise IndexError(f"class {y} out of range [0,{net.num_classes})")
    trace = _trace_or_forward(net, x, trace)
    rtrace = _trace_or_forward(net, ref, reference_trace)

    m = np.zeros(net.num_classes)
    m[y] = 1.0
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if isinstance(layer, Softmax):
            continue
        if isinstance(layer, Linear):
            m = layer.weight.T @ m
        elif isinstance(layer, Conv2D):
            m = _conv_backward_input(m, layer, trace.inputs[i].shape)
        elif isinstance(layer, ReLU):
            dz = trace.inputs[i] - rtrace.inputs[i]
            da = trace.outputs[i] - rtrace.outputs[i]
            wide = np.abs(dz) > cfg.stability_tau
            slope = np.where(wide, da / np.where(wide, dz, 1.0), trace.inputs[i] > 0.0)
            m = m * slope
        elif isinstance(layer, MaxPool2D):
            m = _pool_scatter(m, trace.inputs[i], layer)
        elif isinstance(layer, Flatten):
            m = m.reshape(trace.inputs[i].shape)
    return channel_reduce(m * (x - ref), reduce)


def explain(
    net: Network,
    x: np.ndarray,
    y: int,
    method: str,
    *,
    lrp: LrpConfig | None = None,
    deeplift: DeepLiftConfig | None = None,
    trace: ForwardTrace | None = None,
    reference_trace: ForwardTrace | None = None,
    reduce: str = "sum",
) -> np.ndarray:
    """Dispatch one of the five methods by short name."""
    if method == "gradient":
        return explain_gradient(net, x, y, trace=trace, reduce=reduce)
    if method == "gxi":
        return explain_grad_times_input(net, x, y, trace=trace, reduce=reduce)
    if method == "gbp":
        return explain_guided_backprop(net, x, y, trace=trace, reduce=reduce)
    if method == "lrp":
        return explain_lrp(net, x, y, lrp, trace=trace, reduce=reduce)
    if method == "deeplift":
        return explain_deeplift(
            net, x, y, deeplift, trace=trace, reference_trace=reference_trace, reduce=reduce
        )
    raise ValueError(f"unknown explanation method {method!r}; expected one of {METHODS}")
