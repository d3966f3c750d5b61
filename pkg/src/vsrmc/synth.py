"""Synthetic triplets with known motion.

Frames are translated views of one HR base image: frame ``k`` shows
``base(x + t_k)``, so the ground-truth flow from the centre to frame ``k``
is ``t_center - t_k`` everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .core import FlowField, FrameTriplet, GridGeometry, as_plane
from .errors import InvalidArgument
from .resample import backward_warp_bilinear, bicubic_downsample

Shift = Tuple[float, float]


@dataclass(frozen=True)
class SyntheticSceneSpec:
    base: np.ndarray
    translations: Tuple[Shift, Shift, Shift] = ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0))
    scale: int = 4
    noise: float = 0.0

    def __post_init__(self):
        base = as_plane(self.base, "base")
        object.__setattr__(self, "base", base)
        geom = GridGeometry(self.scale)
        geom.lr_shape(base.shape)
        if not self.noise >= 0:
            raise InvalidArgument("noise level must be >= 0")
        if len(self.translations) != 3:
            raise InvalidArgument("need translations for prev, center and next")
        h, w = base.shape
        for tx, ty in self.translations:
            if abs(tx) >= w or abs(ty) >= h:
                raise InvalidArgument(f"translation ({tx}, {ty}) exceeds the {w}x{h} image")


@dataclass
class SyntheticTriplet:
    triplet: FrameTriplet  # LR frames + HR flows
    hr_frames: Tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def target(self) -> np.ndarray:
        return self.hr_frames[1]


def translate(img: np.ndarray, tx: float, ty: float) -> np.ndarray:
    if tx == 0 and ty == 0:
        return img.copy()
    return backward_warp_bilinear(img, FlowField.constant(img.shape, tx, ty))[0]


def synthesize_triplet(spec: SyntheticSceneSpec, rng: np.random.Generator) -> SyntheticTriplet:
    hr = tuple(translate(spec.base, tx, ty) for tx, ty in spec.translations)
    lr = []
    for frame in hr:
        low = bicubic_downsample(frame, spec.scale)
        if spec.noise > 0:
            low = low + rng.normal(0.0, spec.noise, size=low.shape)
        lr.append(low)
    (px, py), (cx, cy), (nx, ny) = spec.translations
    shape = spec.base.shape
    triplet = FrameTriplet(lr[0], lr[1], lr[2],
                           FlowField.constant(shape, cx - px, cy - py),
                           FlowField.constant(shape, cx - nx, cy - ny))
    return SyntheticTriplet(triplet, hr)


def gaussian_blur(img: np.ndarray, sigma_px: float) -> np.ndarray:
    """Periodic Gaussian blur through the FFT."""
    h, w = img.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    gain = np.exp(-2.0 * (np.pi * sigma_px) ** 2 * (fx ** 2 + fy ** 2))
    return np.fft.irfft2(np.fft.rfft2(img) * gain, s=img.shape)


def _lowpass_noise(shape, rng, sigma_px: float) -> np.ndarray:
    out = gaussian_blur(rng.standard_normal(shape), sigma_px)
    return out / (out.std() + 1e-12)


def random_scene(shape, rng: np.random.Generator, n_shapes: int = 12, psf: float = 1.0) -> np.ndarray:
    """Scene in [0.05, 0.95]: smooth shading, mid-frequency texture and shapes, seen through a Gaussian PSF."""
    h, w = shape
    img = 0.5 * _lowpass_noise(shape, rng, 8.0) + 0.15 * _lowpass_noise(shape, rng, 2.5)
    ys, xs = np.mgrid[0:h, 0:w] + 0.5
    for _ in range(n_shapes):
        level = rng.uniform(-1.0, 1.0)
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        rx, ry = rng.uniform(2, w / 4), rng.uniform(2, h / 4)
        if rng.random() < 0.5:
            mask = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
        else:
            theta = rng.uniform(0, np.pi)
            c, s = np.cos(theta), np.sin(theta)
            dx, dy = xs - cx, ys - cy
            mask = (np.abs(c * dx + s * dy) <= rx) & (np.abs(-s * dx + c * dy) <= ry)
        img = np.where(mask, level + 0.1 * img, img)
    if psf > 0:
        img = gaussian_blur(img, psf)
    lo, hi = img.min(), img.max()
    return 0.05 + 0.9 * (img - lo) / (hi - lo + 1e-12)


def sample_shift(rng: np.random.Generator, shift_range: Sequence[float] = (2, 6)) -> Shift:
    """Integer HR shift whose Euclidean magnitude lies in ``shift_range``."""
    lo, hi = shift_range
    m = int(np.floor(hi))
    while True:
        tx, ty = (int(v) for v in rng.integers(-m, m + 1, size=2))
        if lo <= np.hypot(tx, ty) <= hi:
            return float(tx), float(ty)


def make_benchmark(n: int, hr_shape=(64, 64), scale: int = 4, noise: float = 0.01,
                   shift_range=(2, 6), seed: int = 0) -> List[SyntheticTriplet]:
    """``n`` random scenes, each with independent prev/next integer shifts."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        base = random_scene(hr_shape, rng)
        spec = SyntheticSceneSpec(
            base, (sample_shift(rng, shift_range), (0.0, 0.0), sample_shift(rng, shift_range)),
            scale, noise)
        out.append(synthesize_triplet(spec, rng))
    return out
