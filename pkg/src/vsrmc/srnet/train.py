"""Momentum SGD with weight decay and the multistep learning-rate policy."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..errors import ConfigError, InvalidArgument, TrainingDiverged
from .losses import mse_loss
from .network import SrNetwork

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Defaults are the image-based settings; see :meth:`published_defaults`."""

    learning_rate: float = 1e-5
    momentum: float = 0.9
    weight_decay: float = 4e-4
    batch_size: int = 2
    lr_policy: str = "multistep"
    gamma: float = 0.5
    step: int = 50_000
    iterations: int = 300_000
    input_mode: str = "image"
    patch_size: int = 36
    log_every: int = 100

    @classmethod
    def published_defaults(cls, input_mode: str = "image") -> "TrainConfig":
        if input_mode == "patch":
            return cls(weight_decay=5e-4, batch_size=240, lr_policy="fixed",
                       iterations=200_000, input_mode="patch")
        if input_mode == "image":
            return cls()
        raise InvalidArgument(f"unknown input mode {input_mode!r}")

    def problems(self) -> List[str]:
        out = []
        if not self.learning_rate >= 0:
            out.append("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            out.append("momentum must lie in [0, 1)")
        if not self.weight_decay >= 0:
            out.append("weight_decay must be >= 0")
        if self.batch_size < 1:
            out.append("batch_size must be >= 1")
        if self.lr_policy not in ("fixed", "multistep"):
            out.append("lr_policy must be 'fixed' or 'multistep'")
        if not 0 < self.gamma <= 1:
            out.append("gamma must lie in (0, 1]")
        if self.step < 1:
            out.append("step must be >= 1")
        if self.iterations < 0:
            out.append("iterations must be >= 0")
        if self.input_mode not in ("patch", "image"):
            out.append("input_mode must be 'patch' or 'image'")
        if self.patch_size < 1:
            out.append("patch_size must be >= 1")
        if self.log_every < 1:
            out.append("log_every must be >= 1")
        return out

    def validate(self) -> "TrainConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def lr_at(self, iteration: int) -> float:
        if self.lr_policy == "fixed":
            return self.learning_rate
        return self.learning_rate * self.gamma ** (iteration // self.step)


class MomentumSGD:
    """``v <- mu v - lr (g + wd p);  p <- p + v``, updating arrays in place."""

    def __init__(self, params: Sequence[np.ndarray], momentum: float, weight_decay: float):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray], lr: float):
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v -= lr * (g + self.weight_decay * p)
            p += v


@dataclass
class Sample:
    """One training pair: HR-sized input stack and the full HR target."""

    stack: np.ndarray
    target: np.ndarray


@dataclass
class TrainResult:
    net: SrNetwork
    trace: List[tuple] = field(default_factory=list)  # (iteration, lr, loss)


def _crop_pair(sample: Sample, shrink: int, cfg: TrainConfig, rng):
    stack, target = sample.stack, sample.target
    if cfg.input_mode == "patch":
        h, w = target.shape
        p = cfg.patch_size
        if p > h or p > w or p <= 2 * shrink:
            raise InvalidArgument(f"patch size {p} does not fit {h}x{w} with shrink {shrink}")
        y = int(rng.integers(0, h - p + 1))
        x = int(rng.integers(0, w - p + 1))
        stack = stack[:, y:y + p, x:x + p]
        target = target[y:y + p, x:x + p]
    h, w = target.shape
    return stack, target[shrink:h - shrink, shrink:w - shrink]


def loss_and_grads(net: SrNetwork, stack, target, border: int = 0):
    res = net.forward(stack)
    loss, g = mse_loss(res.output, target, border)
    grads, _ = net.backward(res, g)
    return loss, grads


def train(net: SrNetwork, dataset: Sequence[Sample], cfg: TrainConfig, seed: int = 0,
          callback=None) -> TrainResult:
    """Train ``net`` in place; sampling order depends only on ``seed``."""
    cfg.validate()
    if len(dataset) == 0:
        raise InvalidArgument("dataset is empty")
    rng = np.random.default_rng(seed)
    opt = MomentumSGD(net.parameters(), cfg.momentum, cfg.weight_decay)
    shrink = net.topology.shrink
    result = TrainResult(net)
    for it in range(cfg.iterations):
        lr = cfg.lr_at(it)
        total = None
        batch_loss = 0.0
        for _ in range(cfg.batch_size):
            sample = dataset[int(rng.integers(len(dataset)))]
            stack, target = _crop_pair(sample, shrink, cfg, rng)
            loss, grads = loss_and_grads(net, stack, target)
            batch_loss += loss
            total = grads if total is None else [a + b for a, b in zip(total, grads)]
        batch_loss /= cfg.batch_size
        if not math.isfinite(batch_loss):
            raise TrainingDiverged(f"non-finite loss {batch_loss} at iteration {it} (lr={lr:g})")
        opt.step([g / cfg.batch_size for g in total], lr)
        if it % cfg.log_every == 0 or it == cfg.iterations - 1:
            result.trace.append((it, lr, batch_loss))
            log.debug("iter %d lr %.3g loss %.6g", it, lr, batch_loss)
            if callback is not None:
                callback(it, lr, batch_loss)
    return result
