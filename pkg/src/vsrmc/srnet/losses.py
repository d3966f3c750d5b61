"""Reconstruction and flow-regularisation losses, each returning its gradient."""
from __future__ import annotations

import numpy as np

from ..core import FlowField, as_plane
from ..errors import DimensionMismatch, InvalidArgument


def mse_loss(estimate, target, border: int = 0):
    """Mean squared error over the interior; gradient is zero on the border."""
    e = np.asarray(estimate, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if e.shape != t.shape:
        raise DimensionMismatch(f"estimate {e.shape} vs target {t.shape}")
    h, w = e.shape[-2:]
    if border < 0 or 2 * border >= min(h, w):
        raise InvalidArgument(f"border {border} invalid for {h}x{w}")
    inner = (Ellipsis, slice(border, h - border), slice(border, w - border))
    diff = e[inner] - t[inner]
    n = diff.size
    grad = np.zeros_like(e)
    grad[inner] = 2.0 * diff / n
    return float(np.sum(diff * diff) / n), grad


def smoothness_loss(flow: FlowField, image):
    """Edge-aware total variation of the flow.

    ``sum exp(-|dI/dx|)(|du/dx| + |dv/dx|) + exp(-|dI/dy|)(|du/dy| + |dv/dy|)``
    with forward differences. Returns ``(loss, FlowField gradient)``; the
    subgradient of ``|.|`` at 0 is taken as 0.
    """
    img = as_plane(image)
    if img.shape != flow.shape:
        raise DimensionMismatch(f"flow {flow.shape} vs image {img.shape}")
    wx = np.exp(-np.abs(np.diff(img, axis=1)))
    wy = np.exp(-np.abs(np.diff(img, axis=0)))
    loss = 0.0
    grads = []
    for comp in (flow.u, flow.v):
        dx = np.diff(comp, axis=1)
        dy = np.diff(comp, axis=0)
        loss += float(np.sum(wx * np.abs(dx)) + np.sum(wy * np.abs(dy)))
        gx = wx * np.sign(dx)
        gy = wy * np.sign(dy)
        g = np.zeros_like(comp)
        g[:, 1:] += gx
        g[:, :-1] -= gx
        g[1:, :] += gy
        g[:-1, :] -= gy
        grads.append(g)
    return loss, FlowField(*grads)
