"""Colour conversion and Y-channel PSNR with boundary cropping."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_image
from .errors import DimensionMismatch, InvalidArgument

# BT.601 full range, chroma offset 0.5 on [0, 1] data
BT601 = np.array([
    [0.299, 0.587, 0.114],
    [-0.168735891647856, -0.331264108352144, 0.5],
    [0.5, -0.418687589158970, -0.081312410841030],
])
CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])


@dataclass(frozen=True)
class YcbcrImage:
    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray


def rgb_to_ycbcr(img, matrix: np.ndarray = BT601, offset: np.ndarray = CHROMA_OFFSET) -> YcbcrImage:
    img = as_image(img)
    if img.shape[0] != 3:
        raise InvalidArgument(f"expected 3 channels, got {img.shape[0]}")
    ycc = np.tensordot(matrix, img, axes=1) + offset[:, None, None]
    return YcbcrImage(ycc[0], ycc[1], ycc[2])


def luma(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[0] == 1:
        return img[0]
    return rgb_to_ycbcr(img).y


def crop_border(plane: np.ndarray, border: int) -> np.ndarray:
    if border < 0:
        raise InvalidArgument("border must be >= 0")
    h, w = plane.shape[-2:]
    if 2 * border >= h or 2 * border >= w:
        raise InvalidArgument(f"crop of {border}px leaves nothing of a {h}x{w} image")
    if border == 0:
        return plane
    return plane[..., border:h - border, border:w - border]


def psnr_y(estimate, reference, border_crop: int = 0, max_value: float = 1.0) -> float:
    """PSNR in dB on the Y channel after cropping ``border_crop`` pixels per side.

    Both images are cropped to the same region. Grayscale inputs are used
    as-is. Returns ``math.inf`` for identical crops.
    """
    e = luma(estimate)
    r = luma(reference)
    if e.shape != r.shape:
        raise DimensionMismatch(f"estimate {e.shape} vs reference {r.shape}")
    diff = crop_border(e, border_crop) - crop_border(r, border_crop)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value * max_value / mse)


def format_db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.2f}"
