"""Early-fusion convolutional SR network with explicit reverse mode.

All convolutions are 'valid' cross-correlations. The network sees the
compensated stack as ``n_frames`` groups of ``channels_per_frame``
channels; each group goes through its own first layer (or one shared
layer), the feature maps are concatenated and the rest of the layers are
shared.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionMismatch, InvalidArgument


@dataclass(frozen=True)
class LayerSpec:
    out_channels: int
    kernel: int
    relu: bool = True

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise InvalidArgument(f"kernel size must be odd, got {self.kernel}")
        if self.out_channels < 1:
            raise InvalidArgument("out_channels must be >= 1")


@dataclass(frozen=True)
class Topology:
    """Layer sizes. ``frame_layer=None`` fuses the raw stack directly."""

    n_frames: int = 3
    channels_per_frame: int = 1
    frame_layer: Optional[LayerSpec] = LayerSpec(64, 9, True)
    layers: tuple = (LayerSpec(32, 5, True), LayerSpec(1, 5, False))
    shared_first: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise InvalidArgument("at least one shared layer is required")
        if self.layers[-1].out_channels != 1:
            raise InvalidArgument("the last layer must produce one channel")
        if self.n_frames < 1 or self.channels_per_frame < 1:
            raise InvalidArgument("n_frames and channels_per_frame must be >= 1")

    @property
    def in_channels(self) -> int:
        return self.n_frames * self.channels_per_frame

    @property
    def shrink(self) -> int:
        """Pixels lost per side by valid convolution."""
        ks = [l.kernel for l in self.layers]
        if self.frame_layer is not None:
            ks.append(self.frame_layer.kernel)
        return sum((k - 1) // 2 for k in ks)


@dataclass
class ConvLayer:
    weight: np.ndarray  # (out, in, kh, kw)
    bias: np.ndarray  # (out,)
    relu: bool = True

    def __post_init__(self):
        if self.weight.ndim != 4 or self.weight.shape[2] % 2 == 0 or self.weight.shape[3] % 2 == 0:
            raise InvalidArgument(f"bad kernel shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise InvalidArgument("bias must have one entry per output channel")


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    c = x.shape[0]
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # (c, ho, wo, kh, kw)
    ho, wo = win.shape[1:3]
    return win.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo)


def conv2d_valid(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of ``x`` (C, H, W) with ``w`` (O, C, kh, kw)."""
    o, c, kh, kw = w.shape
    if x.ndim != 3 or x.shape[0] != c:
        raise DimensionMismatch(f"layer expects {c} channels, got shape {x.shape}")
    ho, wo = x.shape[1] - kh + 1, x.shape[2] - kw + 1
    if ho < 1 or wo < 1:
        raise DimensionMismatch(f"input {x.shape[1:]} smaller than kernel {kh}x{kw}")
    out = w.reshape(o, -1) @ _im2col(x, kh, kw)
    out += b[:, None]
    return out.reshape(o, ho, wo)


def conv2d_valid_backward(x: np.ndarray, w: np.ndarray, g: np.ndarray):
    """Gradients ``(dx, dw, db)`` of :func:`conv2d_valid` given upstream ``g``."""
    o, c, kh, kw = w.shape
    ho, wo = g.shape[1:]
    g2 = g.reshape(o, -1)
    dw = (g2 @ _im2col(x, kh, kw).T).reshape(w.shape)
    dcols = (w.reshape(o, -1).T @ g2).reshape(c, kh, kw, ho, wo)
    dx = np.zeros(x.shape, dtype=dcols.dtype)
    # col2im; fixed tap order keeps the summation deterministic
    for i in range(kh):
        for j in range(kw):
            dx[:, i:i + ho, j:j + wo] += dcols[:, i, j]
    return dx, dw, g2.sum(axis=1)


def _make_layer(spec: LayerSpec, in_ch: int, rng, std, dtype) -> ConvLayer:
    if std is None:
        std = np.sqrt(2.0 / (in_ch * spec.kernel * spec.kernel))
    w = rng.normal(0.0, std, size=(spec.out_channels, in_ch, spec.kernel, spec.kernel))
    return ConvLayer(w.astype(dtype), np.zeros(spec.out_channels, dtype=dtype), spec.relu)


@dataclass
class ForwardResult:
    output: np.ndarray
    shrink: int
    cache: dict = field(repr=False, default_factory=dict)


@dataclass
class SrNetwork:
    topology: Topology
    frame_layers: List[ConvLayer]
    layers: List[ConvLayer]

    @classmethod
    def init(cls, topology: Topology, seed: int = 0, std: Optional[float] = 1e-3,
             dtype=np.float32) -> "SrNetwork":
        """Gaussian init with zero biases. ``std=None`` uses He scaling per layer."""
        rng = np.random.default_rng(seed)
        t = topology
        frame_layers = []
        in_ch = t.in_channels
        if t.frame_layer is not None:
            n = 1 if t.shared_first else t.n_frames
            frame_layers = [_make_layer(t.frame_layer, t.channels_per_frame, rng, std, dtype) for _ in range(n)]
            in_ch = t.n_frames * t.frame_layer.out_channels
        layers = []
        for spec in t.layers:
            layers.append(_make_layer(spec, in_ch, rng, std, dtype))
            in_ch = spec.out_channels
        return cls(topology, frame_layers, layers)

    @property
    def dtype(self):
        return self.layers[0].weight.dtype

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in declaration order (weight, bias per layer)."""
        out = []
        for layer in self.frame_layers + self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self) -> "SrNetwork":
        clone = lambda ls: [replace(l, weight=l.weight.copy(), bias=l.bias.copy()) for l in ls]
        return SrNetwork(self.topology, clone(self.frame_layers), clone(self.layers))

    def astype(self, dtype) -> "SrNetwork":
        cast = lambda ls: [replace(l, weight=l.weight.astype(dtype), bias=l.bias.astype(dtype)) for l in ls]
        return SrNetwork(self.topology, cast(self.frame_layers), cast(self.layers))

    def _frame_layer(self, k: int) -> ConvLayer:
        return self.frame_layers[0 if self.topology.shared_first else k]

    def forward(self, stack: np.ndarray) -> ForwardResult:
        t = self.topology
        x = np.asarray(stack, dtype=self.dtype)
        if x.ndim != 3 or x.shape[0] != t.in_channels:
            raise DimensionMismatch(f"network expects {t.in_channels} input channels, got shape {x.shape}")
        cache = {"input": x, "frame_pre": [], "pre": []}
        if self.frame_layers:
            cpf = t.channels_per_frame
            feats = []
            for k in range(t.n_frames):
                layer = self._frame_layer(k)
                z = conv2d_valid(x[k * cpf:(k + 1) * cpf], layer.weight, layer.bias)
                cache["frame_pre"].append(z)
                feats.append(np.maximum(z, 0) if layer.relu else z)
            h = np.concatenate(feats, axis=0)
        else:
            h = x
        acts = [h]
        for layer in self.layers:
            z = conv2d_valid(h, layer.weight, layer.bias)
            cache["pre"].append(z)
            h = np.maximum(z, 0) if layer.relu else z
            acts.append(h)
        cache["acts"] = acts
        return ForwardResult(h[0], t.shrink, cache)

    def __call__(self, stack: np.ndarray) -> np.ndarray:
        return self.forward(stack).output

    def backward(self, result: ForwardResult, upstream: np.ndarray):
        """Reverse mode. Returns ``(param_grads, d_stack)``.

        ``param_grads`` follows :meth:`parameters` order.
        """
        t = self.topology
        cache = result.cache
        g = np.asarray(upstream, dtype=self.dtype)
        if g.shape != result.output.shape:
            raise DimensionMismatch(f"upstream {g.shape} does not match output {result.output.shape}")
        g = g[None]
        shared_grads = []
        acts = cache["acts"]
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            if layer.relu:
                g = g * (cache["pre"][idx] > 0)
            g, dw, db = conv2d_valid_backward(acts[idx], layer.weight, g)
            shared_grads = [dw, db] + shared_grads
        if not self.frame_layers:
            return shared_grads, g

        x = cache["input"]
        cpf = t.channels_per_frame
        nf = t.frame_layer.out_channels
        d_stack = np.zeros_like(x)
        frame_grads = [[np.zeros_like(l.weight), np.zeros_like(l.bias)] for l in self.frame_layers]
        for k in range(t.n_frames):
            layer = self._frame_layer(k)
            gk = g[k * nf:(k + 1) * nf]
            if layer.relu:
                gk = gk * (cache["frame_pre"][k] > 0)
            dx, dw, db = conv2d_valid_backward(x[k * cpf:(k + 1) * cpf], layer.weight, gk)
            d_stack[k * cpf:(k + 1) * cpf] = dx
            slot = frame_grads[0 if t.shared_first else k]
            slot[0] += dw
            slot[1] += db
        flat = [a for pair in frame_grads for a in pair]
        return flat + shared_grads, d_stack
