"""Bicubic up/down-sampling and bilinear backward warping.

This is the classical "upsample, then warp" baseline. Resamplers are
separable and built as dense 1D resampling matrices, so every operator is
linear in the image by construction.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import FlowField, as_plane
from .errors import DimensionMismatch, InvalidArgument


def keys_cubic(t, a: float = -0.5):
    """Keys cubic convolution kernel; ``a = -0.5`` gives the classic bicubic."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2, t3 = t * t, t * t * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


@dataclass(frozen=True)
class BicubicKernel:
    a: float = -0.5

    def __call__(self, t):
        return keys_cubic(t, self.a)


def _check_scale(scale):
    if isinstance(scale, bool) or int(scale) != scale or scale < 1:
        raise InvalidArgument(f"scale factor must be a positive integer, got {scale!r}")
    return int(scale)


@lru_cache(maxsize=64)
def _upsample_matrix(n_in: int, scale: int, a: float) -> np.ndarray:
    n_out = n_in * scale
    pos = (np.arange(n_out) + 0.5) / scale - 0.5
    base = np.floor(pos).astype(np.int64)
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for k in range(-1, 3):
        idx = base + k
        w = keys_cubic(pos - idx, a)
        np.add.at(mat, (rows, np.clip(idx, 0, n_in - 1)), w)
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=64)
def _downsample_matrix(n_in: int, scale: int, a: float) -> np.ndarray:
    n_out = n_in // scale
    # LR pixel centre expressed on the HR grid
    centers = scale * (np.arange(n_out) + 0.5) - 0.5
    radius = 2 * scale
    mat = np.zeros((n_out, n_in))
    for i, c in enumerate(centers):
        taps = np.arange(int(np.floor(c - radius)) + 1, int(np.ceil(c + radius)))
        w = keys_cubic((taps - c) / scale, a)
        np.add.at(mat[i], np.clip(taps, 0, n_in - 1), w)
        mat[i] /= mat[i].sum()
    mat.setflags(write=False)
    return mat


def bicubic_upsample(img, scale: int, kernel: BicubicKernel = BicubicKernel()) -> np.ndarray:
    """Upsample by an integer factor on the pixel-centre aligned grid with edge clamping."""
    scale = _check_scale(scale)
    img = as_plane(img)
    if scale == 1:
        return img.copy()
    ry = _upsample_matrix(img.shape[0], scale, kernel.a)
    rx = _upsample_matrix(img.shape[1], scale, kernel.a)
    return ry @ img @ rx.T


def bicubic_downsample(img, scale: int, kernel: BicubicKernel = BicubicKernel()) -> np.ndarray:
    """Antialiased downsampling: the kernel is widened by ``scale`` before decimation."""
    scale = _check_scale(scale)
    img = as_plane(img)
    h, w = img.shape
    if h % scale or w % scale:
        raise DimensionMismatch(f"image {img.shape} not divisible by scale {scale}")
    if scale == 1:
        return img.copy()
    ry = _downsample_matrix(h, scale, kernel.a)
    rx = _downsample_matrix(w, scale, kernel.a)
    return ry @ img @ rx.T


@dataclass(frozen=True)
class WarpGradients:
    d_image: np.ndarray
    d_flow: FlowField


def _bilinear_setup(shape, flow: FlowField):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = xs + flow.u
    sy = ys + flow.v
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    valid = (x0 + 1 >= 0) & (x0 <= w - 1) & (y0 + 1 >= 0) & (y0 <= h - 1)
    xa = np.clip(x0, 0, w - 1)
    xb = np.clip(x0 + 1, 0, w - 1)
    ya = np.clip(y0, 0, h - 1)
    yb = np.clip(y0 + 1, 0, h - 1)
    return fx, fy, xa, xb, ya, yb, valid


def _check_same(img, flow):
    if not isinstance(flow, FlowField):
        raise InvalidArgument("flow must be a FlowField")
    if img.shape != flow.shape:
        raise DimensionMismatch(f"image {img.shape} and flow {flow.shape} differ")


def backward_warp_bilinear(img, flow: FlowField):
    """Sample ``img`` at ``(x + u, y + v)`` with bilinear interpolation.

    Returns ``(warped, valid)``. Samples whose 2x2 support lies entirely
    outside the image are 0 and invalid; partial support is edge-clamped.
    """
    img = as_plane(img)
    _check_same(img, flow)
    fx, fy, xa, xb, ya, yb, valid = _bilinear_setup(img.shape, flow)
    out = ((1 - fy) * ((1 - fx) * img[ya, xa] + fx * img[ya, xb])
           + fy * ((1 - fx) * img[yb, xa] + fx * img[yb, xb]))
    out = np.where(valid, out, 0.0)
    return out, valid


def backward_warp_bilinear_grad(img, flow: FlowField, upstream) -> WarpGradients:
    """Analytic gradients of :func:`backward_warp_bilinear`.

    At exact lattice positions the flow derivative is the right/down
    one-sided one (it falls out of ``floor``). Clamped taps that collapse
    onto the same pixel give a zero derivative, matching the forward op.
    """
    img = as_plane(img)
    _check_same(img, flow)
    g = as_plane(upstream, "upstream")
    if g.shape != img.shape:
        raise DimensionMismatch(f"upstream {g.shape} does not match image {img.shape}")
    fx, fy, xa, xb, ya, yb, valid = _bilinear_setup(img.shape, flow)
    g = np.where(valid, g, 0.0)

    d_img = np.zeros_like(img)
    for yi, xi, wt in ((ya, xa, (1 - fy) * (1 - fx)), (ya, xb, (1 - fy) * fx),
                       (yb, xa, fy * (1 - fx)), (yb, xb, fy * fx)):
        np.add.at(d_img, (yi, xi), g * wt)

    ia, ib, ic, id_ = img[ya, xa], img[ya, xb], img[yb, xa], img[yb, xb]
    # clamped taps: the sample does not move along that axis
    dx_live = xa != xb
    dy_live = ya != yb
    d_dx = np.where(dx_live, (1 - fy) * (ib - ia) + fy * (id_ - ic), 0.0)
    d_dy = np.where(dy_live, (1 - fx) * (ic - ia) + fx * (id_ - ib), 0.0)
    return WarpGradients(d_img, FlowField(g * d_dx, g * d_dy))
