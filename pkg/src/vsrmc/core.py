"""Pixel grids, flow fields and the LR/HR coordinate convention.

Planes are plain 2D float64 ``numpy`` arrays indexed ``[y, x]``; a
multi-channel image is a ``(C, H, W)`` array. Coordinates are always given
as ``(x, y)`` with ``x`` the column index and the origin at the top-left
corner of the first pixel, so pixel ``i`` covers ``[i, i + 1)`` and has its
centre at ``i + 0.5``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import DimensionMismatch, InvalidArgument

FLOAT = np.float64


def as_plane(data, name: str = "plane") -> np.ndarray:
    """Validate and convert ``data`` into a 2D float64 plane.

    Integer arrays of dtype uint8/uint16 are mapped to ``[0, 1]``.
    """
    arr = np.asarray(data)
    if arr.dtype == np.uint8:
        arr = arr.astype(FLOAT) / 255.0
    elif arr.dtype == np.uint16:
        arr = arr.astype(FLOAT) / 65535.0
    else:
        arr = arr.astype(FLOAT, copy=False)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be at least 1x1, got {arr.shape}")
    return arr


def as_image(data, name: str = "image") -> np.ndarray:
    """Validate a multi-channel image; a 2D plane becomes a 1-channel image."""
    arr = np.asarray(data)
    if arr.ndim == 2:
        return as_plane(arr, name)[None]
    if arr.ndim != 3 or arr.shape[0] < 1:
        raise DimensionMismatch(f"{name} must be (C, H, W), got shape {arr.shape}")
    return np.stack([as_plane(c, name) for c in arr])


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement ``(u, v)`` in pixels of the grid it lives on."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = as_plane(self.u, "flow.u").copy()
        v = as_plane(self.v, "flow.v").copy()
        if u.shape != v.shape:
            raise DimensionMismatch(f"flow components differ: {u.shape} vs {v.shape}")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise InvalidArgument("flow contains non-finite values")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape

    @classmethod
    def zeros(cls, shape) -> "FlowField":
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def constant(cls, shape, u: float, v: float) -> "FlowField":
        return cls(np.full(shape, float(u)), np.full(shape, float(v)))

    def __eq__(self, other):
        if not isinstance(other, FlowField):
            return NotImplemented
        return np.array_equal(self.u, other.u) and np.array_equal(self.v, other.v)

    def __neg__(self) -> "FlowField":
        return FlowField(-self.u, -self.v)


@dataclass(frozen=True)
class GridGeometry:
    """Integer scale factor between the LR and HR grids."""

    scale: int = 4

    def __post_init__(self):
        if isinstance(self.scale, bool) or int(self.scale) != self.scale or self.scale < 1:
            raise InvalidArgument(f"scale factor must be a positive integer, got {self.scale!r}")
        object.__setattr__(self, "scale", int(self.scale))

    def hr_shape(self, lr_shape) -> Tuple[int, int]:
        return (lr_shape[0] * self.scale, lr_shape[1] * self.scale)

    def lr_shape(self, hr_shape) -> Tuple[int, int]:
        h, w = hr_shape
        if h % self.scale or w % self.scale:
            raise DimensionMismatch(f"HR shape {hr_shape} not divisible by scale {self.scale}")
        return (h // self.scale, w // self.scale)


@dataclass(frozen=True)
class FrameTriplet:
    """Previous, centre and next frames plus HR flows centre->prev and centre->next.

    ``flows`` may be ``None`` for modes that do not warp.
    """

    prev: np.ndarray
    center: np.ndarray
    next: np.ndarray
    flow_prev: FlowField | None = None
    flow_next: FlowField | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        frames = [as_plane(f, n) for f, n in zip((self.prev, self.center, self.next), ("prev", "center", "next"))]
        if len({f.shape for f in frames}) != 1:
            raise DimensionMismatch("triplet frames must share dimensions")
        for f, n in zip(frames, ("prev", "center", "next")):
            object.__setattr__(self, n, f)

    @property
    def frames(self):
        return (self.prev, self.center, self.next)

    @property
    def has_flows(self) -> bool:
        return self.flow_prev is not None and self.flow_next is not None


def map_hr_to_lr(x, y, u, v, geom: GridGeometry):
    """Continuous LR source coordinate of HR pixel ``(x, y)`` displaced by ``(u, v)``."""
    a = geom.scale
    xs = (np.asarray(x, FLOAT) + u + 0.5) / a - 0.5
    ys = (np.asarray(y, FLOAT) + v + 0.5) / a - 0.5
    return xs, ys


def round_nearest(c):
    """Round to the nearest integer, exact halves away from zero.

    Uses ``c - trunc(c)``, which is exact in binary floating point, so values
    just below a half are never pushed over it by an intermediate ``+ 0.5``.
    """
    c = np.asarray(c, FLOAT)
    whole = np.trunc(c)
    frac = c - whole
    out = whole + np.where(frac >= 0.5, 1.0, 0.0) - np.where(frac <= -0.5, 1.0, 0.0)
    return out.astype(np.int64) if out.ndim else int(out)
