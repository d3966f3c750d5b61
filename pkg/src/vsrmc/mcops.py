"""Joint upsampling + warping operators and input-stack assembly.

``jubw`` gathers straight from the LR frame (nearest source pixel, no
interpolation) and emits the sub-pixel residuals as two extra channels.
``spmc_fw`` is the forward-warping counterpart: every LR pixel is splatted
bilinearly onto the HR grid and collisions are averaged by weight.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FlowField, FrameTriplet, GridGeometry, as_plane, map_hr_to_lr, round_nearest
from .errors import DimensionMismatch, InvalidArgument
from .resample import WarpGradients, backward_warp_bilinear, bicubic_upsample

MODES = ("backward-warp", "jubw", "jubw-no-dist", "spmc-fw", "no-warp", "only-center")


@dataclass(frozen=True)
class JubwOutput:
    warped: np.ndarray
    dist_x: np.ndarray
    dist_y: np.ndarray
    valid: np.ndarray


@dataclass(frozen=True)
class SpmcOutput:
    warped: np.ndarray
    weight: np.ndarray


def _jubw_indices(lr_shape, flow_hr: FlowField, geom: GridGeometry):
    if not isinstance(flow_hr, FlowField):
        raise InvalidArgument("flow must be a FlowField")
    fh, fw = flow_hr.shape
    if fh % geom.scale or fw % geom.scale:
        raise DimensionMismatch(f"flow {flow_hr.shape} not divisible by scale {geom.scale}")
    if geom.hr_shape(lr_shape) != flow_hr.shape:
        raise DimensionMismatch(
            f"flow {flow_hr.shape} does not match {geom.scale}x image {lr_shape}")
    ys, xs = np.mgrid[0:fh, 0:fw]
    sx, sy = map_hr_to_lr(xs, ys, flow_hr.u, flow_hr.v, geom)
    rx, ry = round_nearest(sx), round_nearest(sy)
    h, w = lr_shape
    valid = (rx >= 0) & (rx < w) & (ry >= 0) & (ry < h)
    return sx, sy, rx, ry, valid


def jubw(img_lr, flow_hr: FlowField, geom: GridGeometry = GridGeometry()) -> JubwOutput:
    """Joint upsampling and backward warping of one LR plane onto the HR grid."""
    img = as_plane(img_lr)
    sx, sy, rx, ry, valid = _jubw_indices(img.shape, flow_hr, geom)
    gathered = img[np.clip(ry, 0, img.shape[0] - 1), np.clip(rx, 0, img.shape[1] - 1)]
    warped = np.where(valid, gathered, 0.0)
    dist_x = np.where(valid, rx - sx, 0.0)
    dist_y = np.where(valid, ry - sy, 0.0)
    return JubwOutput(warped, dist_x, dist_y, valid.astype(np.float64))


def jubw_grad(img_lr, flow_hr: FlowField, geom: GridGeometry, up_warped=None,
              up_dist_x=None, up_dist_y=None) -> WarpGradients:
    """Gradients of :func:`jubw`; missing upstream terms are treated as zero.

    Rounding is held fixed, so only the distance channels carry a flow
    gradient (``d dist / d flow = -1 / scale``).
    """
    img = as_plane(img_lr)
    sx, sy, rx, ry, valid = _jubw_indices(img.shape, flow_hr, geom)
    zeros = np.zeros(flow_hr.shape)

    def _up(g, name):
        if g is None:
            return zeros
        g = as_plane(g, name)
        if g.shape != flow_hr.shape:
            raise DimensionMismatch(f"{name} {g.shape} does not match HR grid {flow_hr.shape}")
        return np.where(valid, g, 0.0)

    gw, gx, gy = _up(up_warped, "upstream warped"), _up(up_dist_x, "upstream dist_x"), _up(up_dist_y, "upstream dist_y")
    d_img = np.zeros_like(img)
    np.add.at(d_img, (ry[valid], rx[valid]), gw[valid])
    inv = -1.0 / geom.scale
    return WarpGradients(d_img, FlowField(gx * inv, gy * inv))


def spmc_fw(img_lr, flow_lr: FlowField, geom: GridGeometry = GridGeometry()) -> SpmcOutput:
    """Forward-warp and upsample by bilinear splatting.

    ``flow_lr`` lives on the LR grid in LR pixel units. Each source pixel
    lands at ``scale * (x + u + 0.5) - 0.5`` on the HR grid; splat targets
    outside the HR image are dropped. Sites with zero accumulated weight
    (holes) are 0.
    """
    img = as_plane(img_lr)
    if not isinstance(flow_lr, FlowField):
        raise InvalidArgument("flow must be a FlowField")
    if flow_lr.shape != img.shape:
        raise DimensionMismatch(f"flow {flow_lr.shape} does not match image {img.shape}")
    h, w = img.shape
    H, W = geom.hr_shape(img.shape)
    a = geom.scale
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    tx = a * (xs + flow_lr.u + 0.5) - 0.5
    ty = a * (ys + flow_lr.v + 0.5) - 0.5
    x0 = np.floor(tx)
    y0 = np.floor(ty)
    fx, fy = tx - x0, ty - y0
    x0 = x0.astype(np.int64).ravel()
    y0 = y0.astype(np.int64).ravel()
    fx, fy, vals = fx.ravel(), fy.ravel(), img.ravel()

    acc = np.zeros(H * W)
    wsum = np.zeros(H * W)
    # fixed target order (row-major source, then tap) keeps accumulation deterministic
    for dy, dx, wt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                       (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        xi, yi = x0 + dx, y0 + dy
        inside = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H) & (wt > 0)
        flat = yi[inside] * W + xi[inside]
        np.add.at(acc, flat, wt[inside] * vals[inside])
        np.add.at(wsum, flat, wt[inside])
    acc = acc.reshape(H, W)
    wsum = wsum.reshape(H, W)
    warped = np.divide(acc, wsum, out=np.zeros_like(acc), where=wsum > 0)
    return SpmcOutput(warped, wsum)


def hr_flow_to_lr_forward(flow_hr: FlowField, geom: GridGeometry) -> FlowField:
    """Turn an HR centre->neighbour flow into an LR neighbour->centre flow.

    Block-averages the HR flow, converts to LR pixel units and negates it
    (exact inversion for locally constant motion).
    """
    a = geom.scale
    h, w = geom.lr_shape(flow_hr.shape)
    pool = lambda p: p.reshape(h, a, w, a).mean(axis=(1, 3))
    return FlowField(-pool(flow_hr.u) / a, -pool(flow_hr.v) / a)


def channels_per_frame(mode: str) -> int:
    if mode not in MODES:
        raise InvalidArgument(f"unknown mode {mode!r}; choose from {MODES}")
    return 3 if mode in ("jubw", "jubw-no-dist", "only-center") else 1


def stack_compensated(triplet: FrameTriplet, mode: str, geom: GridGeometry = GridGeometry()) -> np.ndarray:
    """Build the network input ``(C, H, W)`` stack for one LR triplet.

    Layout is ``[prev..., center..., next...]``. JUBW modes give three
    channels per frame (warped, dist_x, dist_y), the centre going through
    JUBW with zero flow; all other modes give one channel per frame.
    ``only-center`` feeds the centre frame three times through JUBW with
    zero flow.
    """
    nc = channels_per_frame(mode)
    hr_shape = geom.hr_shape(triplet.center.shape)
    zero = FlowField.zeros(hr_shape)
    warped_mode = mode in ("backward-warp", "jubw", "jubw-no-dist", "spmc-fw")
    if warped_mode and not triplet.has_flows:
        raise InvalidArgument(f"mode {mode!r} needs flows centre->prev and centre->next")

    if mode == "only-center":
        frames = (triplet.center,) * 3
        flows = (zero,) * 3
    else:
        frames = triplet.frames
        flows = (triplet.flow_prev, zero, triplet.flow_next) if warped_mode else (None,) * 3

    out: list[np.ndarray] = []
    for frame, flow in zip(frames, flows):
        if mode in ("jubw", "jubw-no-dist", "only-center"):
            r = jubw(frame, flow, geom)
            if mode == "jubw-no-dist":
                out += [r.warped, np.zeros(hr_shape), np.zeros(hr_shape)]
            else:
                out += [r.warped, r.dist_x, r.dist_y]
        elif mode == "backward-warp":
            out.append(backward_warp_bilinear(bicubic_upsample(frame, geom.scale), flow)[0])
        elif mode == "spmc-fw":
            out.append(spmc_fw(frame, hr_flow_to_lr_forward(flow, geom), geom).warped)
        else:
            out.append(bicubic_upsample(frame, geom.scale))
    stack = np.stack(out)
    assert stack.shape[0] == 3 * nc
    return stack


def split_frames(stack: np.ndarray, n_frames: int = 3) -> Sequence[np.ndarray]:
    if stack.shape[0] % n_frames:
        raise DimensionMismatch(f"{stack.shape[0]} channels cannot split into {n_frames} frames")
    return np.split(stack, n_frames, axis=0)
