"""``vsrmc`` command line.

Exit codes:

    0  success
    1  other package error
    2  bad command-line usage
    3  missing input file
    4  malformed file (bad magic, truncated payload, bad dimensions, maxval)
    5  dimension mismatch between inputs
    6  invalid argument or config
    7  training diverged
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .core import GridGeometry, as_image
from .errors import ConfigError, DimensionMismatch, VsrError
from .experiment import (ExperimentConfig, evaluate, init_network, load_items, predict, run_training,
                         synthetic_items, write_trace)
from .mcops import jubw, spmc_fw
from .metrics import format_db, psnr_y
from .resample import backward_warp_bilinear, bicubic_upsample
from .srnet import load_checkpoint, save_checkpoint


def _channels(img):
    """Split a plane or colour image into planes; returns a re-assembler too."""
    if img.ndim == 2:
        return [img], lambda planes: planes[0]
    return list(as_image(img)), np.stack


def _check_flow(flow, shape, what):
    if flow.shape != tuple(shape):
        raise DimensionMismatch(f"flow is {flow.shape[1]}x{flow.shape[0]}, {what} is {shape[1]}x{shape[0]}")


def _stats(name, arr):
    print(f"{name}: min {arr.min():.6g} max {arr.max():.6g} mean {arr.mean():.6g}")


def _write_distance(plane, path):
    # distances lie in [-0.5, 0.5]; stored shifted by 0.5 at 16 bits
    dataio.write_image(plane + 0.5, path, 65535)


def cmd_warp(args):
    img = dataio.read_image(args.image)
    flow = dataio.read_flo(args.flow)
    planes, join = _channels(img)
    if args.scale > 1:
        planes = [bicubic_upsample(p, args.scale) for p in planes]
    _check_flow(flow, planes[0].shape, "image")
    outs = [backward_warp_bilinear(p, flow) for p in planes]
    valid = outs[0][1]
    dataio.write_image(join([o[0] for o in outs]), args.out, args.maxval)
    if args.valid:
        dataio.write_image(valid.astype(np.float64), args.valid)
    print(f"invalid pixels: {int((~valid).sum())} of {valid.size}")


def cmd_jubw(args):
    img = dataio.read_image(args.image)
    flow = dataio.read_flo(args.flow)
    geom = GridGeometry(args.scale)
    planes, join = _channels(img)
    _check_flow(flow, geom.hr_shape(planes[0].shape), f"{args.scale}x image")
    outs = [jubw(p, flow, geom) for p in planes]
    first = outs[0]
    dataio.write_image(join([o.warped for o in outs]), args.out, args.maxval)
    if args.dist_x:
        _write_distance(first.dist_x, args.dist_x)
    if args.dist_y:
        _write_distance(first.dist_y, args.dist_y)
    if args.valid:
        dataio.write_image(first.valid, args.valid)
    _stats("dist_x", first.dist_x)
    _stats("dist_y", first.dist_y)
    print(f"invalid pixels: {int((first.valid == 0).sum())} of {first.valid.size}")


def cmd_spmcfw(args):
    img = dataio.read_image(args.image)
    flow = dataio.read_flo(args.flow)
    geom = GridGeometry(args.scale)
    planes, join = _channels(img)
    _check_flow(flow, planes[0].shape, "image")
    outs = [spmc_fw(p, flow, geom) for p in planes]
    weight = outs[0].weight
    dataio.write_image(join([o.warped for o in outs]), args.out, args.maxval)
    if args.weight:
        # normalised by the largest accumulated weight
        top = weight.max()
        dataio.write_image(weight / top if top > 0 else weight, args.weight, 65535)
    _stats("weight", weight)
    print(f"holes: {int((weight == 0).sum())} of {weight.size}")


def cmd_psnr(args):
    est = dataio.read_image(args.estimate)
    ref = dataio.read_image(args.reference)
    print(format_db(psnr_y(est, ref, args.crop)))


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    d = cfg.to_dict()
    for key in ("mode", "seed"):
        if getattr(args, key, None) is not None:
            d[key] = getattr(args, key)
    if getattr(args, "iterations", None) is not None:
        d["train"]["iterations"] = args.iterations
    return ExperimentConfig.from_dict(d)


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_config(args):
    cfg = _load_config(args)
    if args.out:
        cfg.save(args.out)
    else:
        sys.stdout.write(cfg.dumps())


def cmd_synth(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    for split in ("train", "test"):
        entries = []
        for item in synthetic_items(cfg, split):
            t = item.triplet
            paths = [out / f"{item.name}_{n}" for n in ("prev.pgm", "center.pgm", "next.pgm", "cp.flo", "cn.flo",
                                                          "hr.pgm")]
            for frame, p in zip(t.frames, paths[:3]):
                dataio.write_image(frame, p, 65535)
            dataio.write_flo(t.flow_prev, paths[3])
            dataio.write_flo(t.flow_next, paths[4])
            dataio.write_image(item.target, paths[5], 65535)
            entries.append(dataio.ManifestEntry(*paths))
        dataio.write_manifest(entries, out / f"{split}.txt")
        print(f"{split}: {len(entries)} triplets -> {out / (split + '.txt')}")


def cmd_train(args):
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    items = load_items(cfg, "train", args.manifest)
    cb = None
    if args.verbose:
        cb = lambda it, lr, loss: print(f"iter {it} lr {lr:.3g} loss {loss:.6g}", flush=True)
    net, trace = run_training(cfg, items, callback=cb)
    save_checkpoint(net, out / "model.vsrn")
    write_trace(trace, out / "loss.csv")
    cfg.save(out / "config.yaml")
    print(f"checkpoint -> {out / 'model.vsrn'}")
    if trace:
        print(f"final loss {trace[-1][2]:.6g}")


def cmd_eval(args):
    cfg = _load_config(args)
    net = load_checkpoint(args.checkpoint) if args.checkpoint else init_network(cfg)
    if net.topology != cfg.topology:
        raise ConfigError("checkpoint topology does not match the config's net and mode")
    items = load_items(cfg, "test", args.manifest)
    rows = evaluate(cfg, net, items)
    if args.save_dir:
        d = Path(args.save_dir)
        d.mkdir(parents=True, exist_ok=True)
        for it in items:
            dataio.write_image(predict(cfg, net, it.triplet), d / f"{it.name}_sr.pgm", 65535)
    for name, value in rows:
        print(f"{name}\t{format_db(value)}")
    mean = float(np.mean([v for _, v in rows]))
    print(f"mean[{cfg.mode}]\t{format_db(mean)}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vsrmc", description="Motion-compensated video SR toolkit.")
    p.add_argument("--threads", type=int, default=None, help="pin the BLAS thread count")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def op(name, fn, help, image_flow=True):
        s = sub.add_parser(name, help=help)
        if image_flow:
            s.add_argument("image")
            s.add_argument("flow")
            s.add_argument("--out", "-o", required=True)
            s.add_argument("--maxval", type=int, default=255, choices=dataio.SUPPORTED_MAXVAL)
        s.set_defaults(fn=fn)
        return s

    s = op("warp", cmd_warp, "bilinear backward warp (optionally after bicubic upsampling)")
    s.add_argument("--scale", type=int, default=1)
    s.add_argument("--valid")
    s = op("jubw", cmd_jubw, "joint upsampling and backward warping")
    s.add_argument("--scale", type=int, default=4)
    s.add_argument("--dist-x")
    s.add_argument("--dist-y")
    s.add_argument("--valid")
    s = op("spmcfw", cmd_spmcfw, "joint upsampling and forward splatting")
    s.add_argument("--scale", type=int, default=4)
    s.add_argument("--weight")

    s = op("psnr", cmd_psnr, "Y-channel PSNR between two images", image_flow=False)
    s.add_argument("estimate")
    s.add_argument("reference")
    s.add_argument("--crop", type=int, default=0)

    for name, fn, help in (("config", cmd_config, "print or write a config"),
                           ("synth", cmd_synth, "write a synthetic dataset and manifests"),
                           ("train", cmd_train, "train a network"),
                           ("eval", cmd_eval, "per-item and mean PSNR over a test set")):
        s = op(name, fn, help, image_flow=False)
        s.add_argument("--config", "-c")
        s.add_argument("--mode")
        s.add_argument("--seed", type=int)
        if name != "eval":
            s.add_argument("--out", "-o")
        if name in ("train", "eval"):
            s.add_argument("--manifest")
        if name in ("train", "config"):
            s.add_argument("--iterations", type=int)
    sub.choices["eval"].add_argument("--checkpoint")
    sub.choices["eval"].add_argument("--save-dir")
    return p


def _thread_limit(n):
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        with _thread_limit(args.threads):
            args.fn(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return exc.exit_code
    except VsrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
