"""Residual CNN denoiser on stacked real/imaginary planes, with exact
hand-written backpropagation.

Every layer is a 3x3 "same" convolution (zero padding); all but the last
are followed by a ReLU.  With ``residual=True`` the output is
``x - net(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass
class DenoiserModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    residual: bool = True

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per layer and at least one layer")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        prev = 2
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 4 or w.shape[2:] != (3, 3):
                raise ValueError(f"layer {i}: kernels must have shape (out, in, 3, 3), got {w.shape}")
            if w.shape[1] != prev:
                raise ValueError(f"layer {i}: expects {w.shape[1]} input channels, previous layer gives {prev}")
            if b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: bias shape {b.shape} does not match {w.shape[0]} outputs")
            prev = w.shape[0]
        if prev != 2:
            raise ValueError("last layer must output 2 channels (real, imaginary)")

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def width(self) -> int:
        return self.weights[0].shape[0] if self.depth > 1 else 2

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_parameters(self, params: list[np.ndarray]) -> "DenoiserModel":
        return DenoiserModel(list(params[0::2]), list(params[1::2]), self.residual)

    def copy(self) -> "DenoiserModel":
        return self.with_parameters([p.copy() for p in self.parameters()])

    def zeros_like(self) -> "DenoiserModel":
        return self.with_parameters([np.zeros_like(p) for p in self.parameters()])


def _layer_shapes(depth: int, width: int) -> list[tuple[int, int]]:
    if depth < 1:
        raise ValueError("depth must be at least 1")
    chans = [2] + [width] * (depth - 1) + [2]
    return list(zip(chans[1:], chans[:-1]))


def init_denoiser(depth: int = 4, width: int = 16, seed: int = 0, residual: bool = True, last_scale: float = 0.1) -> DenoiserModel:
    """He-initialised kernels, zero biases; the last layer is scaled down so
    a residual model starts close to the identity."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    shapes = _layer_shapes(depth, width)
    for i, (co, ci) in enumerate(shapes):
        std = np.sqrt(2.0 / (9 * ci))
        if i == len(shapes) - 1:
            std *= last_scale
        weights.append(rng.normal(0.0, std, (co, ci, 3, 3)))
        biases.append(np.zeros(co))
    return DenoiserModel(weights, biases, residual)


def zero_denoiser(depth: int = 4, width: int = 16, residual: bool = True) -> DenoiserModel:
    shapes = _layer_shapes(depth, width)
    return DenoiserModel([np.zeros((co, ci, 3, 3)) for co, ci in shapes], [np.zeros(co) for co, _ in shapes], residual)


def _windows(x: np.ndarray) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    return sliding_window_view(xp, (3, 3), axis=(1, 2))


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3x3 same-size cross-correlation: ``x`` is (C, H, W), ``w`` is (O, C, 3, 3)."""
    return np.tensordot(w, _windows(x), axes=([1, 2, 3], [0, 3, 4])) + b[:, None, None]


def conv2d_backward(x: np.ndarray, w: np.ndarray, gy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dw = np.tensordot(gy, _windows(x), axes=([1, 2], [1, 2]))
    db = gy.sum(axis=(1, 2))
    h, wd = x.shape[1:]
    dxp = np.zeros((x.shape[0], h + 2, wd + 2))
    for k in range(3):
        for l in range(3):
            dxp[:, k:k + h, l:l + wd] += np.tensordot(w[:, :, k, l], gy, axes=([0], [0]))
    return dw, db, dxp[:, 1:-1, 1:-1]


def to_planes(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    return np.stack([image.real, image.imag]).astype(float)


def from_planes(planes: np.ndarray) -> np.ndarray:
    return planes[0] + 1j * planes[1]


@dataclass
class _Cache:
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)


def _forward(model: DenoiserModel, image) -> tuple[np.ndarray, _Cache]:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"denoiser expects a 2-D image, got shape {image.shape}")
    a = to_planes(image)
    x0 = a
    cache = _Cache()
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        cache.inputs.append(a)
        z = conv2d(a, w, b)
        cache.pre.append(z)
        a = np.maximum(z, 0.0) if i < model.depth - 1 else z
    out = x0 - a if model.residual else a
    return from_planes(out), cache


def denoiser_apply(model: DenoiserModel, image) -> np.ndarray:
    """Map a complex image through the CNN; shape is preserved."""
    return _forward(model, image)[0]


def denoiser_backprop(model: DenoiserModel, image, upstream) -> tuple[DenoiserModel, np.ndarray]:
    """Gradients of ``Re<upstream, D(image)>`` w.r.t. every weight and the input.

    Returns ``(d_weights, d_input)``; ``d_weights`` is a model-shaped
    container of gradients and ``d_input`` is complex.
    """
    _, cache = _forward(model, image)
    g_out = to_planes(upstream)
    if g_out.shape != cache.inputs[0].shape:
        raise ValueError(f"upstream gradient shape {np.shape(upstream)} does not match the image")
    g = -g_out if model.residual else g_out
    dws: list[np.ndarray] = [None] * model.depth  # type: ignore[list-item]
    dbs: list[np.ndarray] = [None] * model.depth  # type: ignore[list-item]
    for i in reversed(range(model.depth)):
        if i < model.depth - 1:
            g = g * (cache.pre[i] > 0)
        dws[i], dbs[i], g = conv2d_backward(cache.inputs[i], model.weights[i], g)
    if model.residual:
        g = g + g_out
    return DenoiserModel(dws, dbs, model.residual), from_planes(g)
