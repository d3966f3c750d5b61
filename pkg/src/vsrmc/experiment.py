"""Experiment configs and the train/evaluate pipeline behind the CLI.

A config is a YAML mapping with the sections below; every field has a
default, so a file only needs the keys it changes::

    mode: jubw              # one of vsrmc.mcops.MODES
    scale: 4
    seed: 0                 # the only source of randomness
    manifest: null          # triplet manifest; null -> synthetic benchmark
    output_dir: runs/jubw
    input_offset: 0.5       # subtracted from image channels, added back to the output
    eval_crop: 12
    net: {frame_layer: {out_channels: 16, kernel: 9, relu: true},
          layers: [{out_channels: 16, kernel: 5, relu: true},
                   {out_channels: 1, kernel: 5, relu: false}],
          shared_first: false}
    train: {...}            # TrainConfig fields
    synth: {n_train: 60, n_test: 20, hr_size: 64, noise: 0.01,
            shift_min: 2, shift_max: 6}
"""
from __future__ import annotations

import csv
import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .core import FrameTriplet, GridGeometry
from .dataio import read_flo, read_image, read_manifest
from .errors import ConfigError, MissingInput
from .mcops import MODES, channels_per_frame, stack_compensated
from .metrics import luma, psnr_y
from .resample import bicubic_upsample
from .srnet import LayerSpec, Sample, SrNetwork, Topology, TrainConfig, train
from .synth import make_benchmark


@dataclass
class NetConfig:
    frame_layer: Optional[LayerSpec] = LayerSpec(16, 9, True)
    layers: Tuple[LayerSpec, ...] = (LayerSpec(16, 5, True), LayerSpec(1, 5, False))
    shared_first: bool = False
    init_std: Optional[float] = None  # None -> He scaling

    def topology(self, mode: str) -> Topology:
        return Topology(3, channels_per_frame(mode), self.frame_layer, tuple(self.layers), self.shared_first)


@dataclass
class SynthConfig:
    n_train: int = 60
    n_test: int = 20
    hr_size: int = 64
    noise: float = 0.01
    shift_min: float = 2.0
    shift_max: float = 6.0


def _desk_train() -> TrainConfig:
    return TrainConfig(learning_rate=3e-3, momentum=0.9, weight_decay=0.0, batch_size=2,
                       lr_policy="multistep", gamma=0.5, step=6667, iterations=20_000,
                       input_mode="patch", patch_size=36, log_every=100)


@dataclass
class ExperimentConfig:
    mode: str = "jubw"
    scale: int = 4
    seed: int = 0
    manifest: Optional[str] = None
    output_dir: str = "runs/experiment"
    input_offset: float = 0.5
    eval_crop: int = 12
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=_desk_train)
    synth: SynthConfig = field(default_factory=SynthConfig)

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.scale)

    @property
    def topology(self) -> Topology:
        return self.net.topology(self.mode)

    def problems(self) -> List[str]:
        out = []
        if self.mode not in MODES:
            out.append(f"mode must be one of {', '.join(MODES)}")
        if isinstance(self.scale, bool) or not isinstance(self.scale, int) or self.scale < 1:
            out.append("scale must be a positive integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            out.append("seed must be a non-negative integer")
        if self.eval_crop < 0:
            out.append("eval_crop must be >= 0")
        if self.net.layers and self.net.layers[-1].out_channels != 1:
            out.append("net.layers: the last layer must produce one channel")
        if not self.net.layers:
            out.append("net.layers must not be empty")
        out += [f"train.{p}" for p in self.train.problems()]
        s = self.synth
        if s.n_train < 1 or s.n_test < 1:
            out.append("synth.n_train and synth.n_test must be >= 1")
        if isinstance(self.scale, int) and self.scale >= 1 and s.hr_size % self.scale:
            out.append("synth.hr_size must be divisible by scale")
        if not self.manifest and s.hr_size <= 2 * self.eval_crop:
            out.append("synth.hr_size must exceed twice eval_crop")
        if not s.noise >= 0:
            out.append("synth.noise must be >= 0")
        if not 0 <= s.shift_min <= s.shift_max:
            out.append("synth.shift_min/shift_max must satisfy 0 <= min <= max")
        return out

    def validate(self) -> "ExperimentConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    # serialization

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["net"]["layers"] = [dataclasses.asdict(l) for l in self.net.layers]
        return d

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        problems = []
        ctors = {"net": NetConfig, "train": TrainConfig, "synth": SynthConfig}
        top = {f.name for f in dataclasses.fields(cls)}
        problems += [f"unknown key {k!r}" for k in d if k not in top]
        kw = {k: v for k, v in d.items() if k in top and k not in ctors}
        for name, ctor in ctors.items():
            sub = d.get(name) or {}
            if not isinstance(sub, dict):
                problems.append(f"{name} must be a mapping")
                continue
            names = {f.name for f in dataclasses.fields(ctor)}
            problems += [f"unknown key {name}.{k!r}" for k in sub if k not in names]
            sub = {k: v for k, v in sub.items() if k in names}
            if name == "net":
                try:
                    sub = _parse_net(sub)
                except (TypeError, ValueError) as exc:
                    problems.append(f"net: {exc}")
                    continue
            kw[name] = ctor(**sub)
        if problems:
            raise ConfigError(problems)
        cfg = cls(**kw)
        try:
            return cfg.validate()
        except TypeError as exc:
            raise ConfigError(f"field has the wrong type: {exc}") from None

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise MissingInput(f"no such config file: {path}")
        return cls.loads(path.read_text())


def _parse_net(d: dict) -> dict:
    d = dict(d)
    if "frame_layer" in d and d["frame_layer"] is not None:
        d["frame_layer"] = LayerSpec(**d["frame_layer"])
    if "layers" in d:
        d["layers"] = tuple(LayerSpec(**l) for l in d["layers"])
    return d


# data


@dataclass
class Item:
    name: str
    triplet: FrameTriplet
    target: np.ndarray


def _child_seeds(seed: int, n: int = 4) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def synthetic_items(cfg: ExperimentConfig, split: str) -> List[Item]:
    """Deterministic synthetic train or test split derived from ``cfg.seed``."""
    s = cfg.synth
    train_seed, test_seed = _child_seeds(cfg.seed)[:2]
    n, seed = (s.n_train, train_seed) if split == "train" else (s.n_test, test_seed)
    sets = make_benchmark(n, (s.hr_size, s.hr_size), cfg.scale, s.noise, (s.shift_min, s.shift_max), seed)
    return [Item(f"{split}_{i:03d}", t.triplet, t.target) for i, t in enumerate(sets)]


def manifest_items(path) -> List[Item]:
    """Triplets listed in a manifest; colour images are reduced to luma."""
    out = []
    for e in read_manifest(path):
        frames = [luma(read_image(p)) for p in (e.prev, e.center, e.next)]
        trip = FrameTriplet(*frames, read_flo(e.flow_prev), read_flo(e.flow_next))
        out.append(Item(Path(e.center).stem, trip, luma(read_image(e.target))))
    return out


def load_items(cfg: ExperimentConfig, split: str, manifest=None) -> List[Item]:
    manifest = manifest or cfg.manifest
    return manifest_items(manifest) if manifest else synthetic_items(cfg, split)


def network_input(cfg: ExperimentConfig, triplet: FrameTriplet) -> np.ndarray:
    stack = stack_compensated(triplet, cfg.mode, cfg.geometry)
    stack[::channels_per_frame(cfg.mode)] -= cfg.input_offset
    return stack


def build_samples(cfg: ExperimentConfig, items: Sequence[Item]) -> List[Sample]:
    return [Sample(network_input(cfg, it.triplet), it.target - cfg.input_offset) for it in items]


# pipeline


def init_network(cfg: ExperimentConfig) -> SrNetwork:
    seed = _child_seeds(cfg.seed)[2]
    return SrNetwork.init(cfg.topology, seed=seed, std=cfg.net.init_std)


def run_training(cfg: ExperimentConfig, items: Sequence[Item], net: Optional[SrNetwork] = None,
                 callback=None):
    """Train from ``cfg``; returns ``(net, trace)`` with trace rows ``(iteration, lr, loss)``."""
    net = net or init_network(cfg)
    result = train(net, build_samples(cfg, items), cfg.train, seed=_child_seeds(cfg.seed)[3], callback=callback)
    return net, result.trace


def predict(cfg: ExperimentConfig, net: SrNetwork, triplet: FrameTriplet) -> np.ndarray:
    """Full-size HR estimate.

    Valid convolutions lose ``shrink`` pixels per side; that ring is filled
    with the bicubic upsampled centre so the estimate keeps the target size.
    """
    out = bicubic_upsample(triplet.center, cfg.scale)
    b = net.topology.shrink
    h, w = out.shape
    out[b:h - b, b:w - b] = net(network_input(cfg, triplet)).astype(np.float64) + cfg.input_offset
    return out


def evaluate(cfg: ExperimentConfig, net: SrNetwork, items: Sequence[Item]) -> List[Tuple[str, float]]:
    return [(it.name, psnr_y(predict(cfg, net, it.triplet), it.target, cfg.eval_crop)) for it in items]


def write_trace(trace, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "lr", "loss"])
        for it, lr, loss in trace:
            w.writerow([it, repr(float(lr)), repr(float(loss))])


@dataclass
class AblationRow:
    mode: str
    mean_psnr: float
    per_item: List[Tuple[str, float]]
    seconds: float


def run_ablation(cfg: ExperimentConfig, modes: Sequence[str], test_manifest=None,
                 callback=None) -> List[AblationRow]:
    """Train and evaluate one network per mode on the same train and test sets.

    Training data comes from ``cfg.manifest`` when set; test data from
    ``test_manifest``, else the synthetic test split.
    """
    train_items = load_items(cfg, "train")
    test_items = manifest_items(test_manifest) if test_manifest else synthetic_items(cfg, "test")
    rows = []
    for mode in modes:
        c = dataclasses.replace(cfg, mode=mode).validate()
        t0 = time.perf_counter()
        net, _ = run_training(c, train_items)
        per_item = evaluate(c, net, test_items)
        row = AblationRow(mode, float(np.mean([v for _, v in per_item])), per_item, time.perf_counter() - t0)
        rows.append(row)
        if callback is not None:
            callback(row)
    return rows
