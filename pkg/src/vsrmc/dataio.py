"""Middlebury ``.flo`` flows, binary PGM/PPM images and triplet manifests."""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

from .core import FlowField
from .errors import BadDimensions, BadMagic, FormatError, MissingInput, TruncatedPayload, UnsupportedMaxval

FLO_MAGIC = b"PIEH"
UNKNOWN_FLOW = 1e9
SUPPORTED_MAXVAL = (255, 65535)


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise MissingInput(f"no such file: {path}")
    return path.read_bytes()


def read_flo(path, return_unknown: bool = False):
    """Read a ``.flo`` file; unknown-flow sentinels (> 1e9) become 0.

    With ``return_unknown`` the number of replaced vectors is returned too.
    """
    buf = _read_bytes(path)
    if len(buf) < 4 or buf[:4] != FLO_MAGIC:
        raise BadMagic(f"{path}: bad .flo magic {buf[:4]!r}")
    if len(buf) < 12:
        raise TruncatedPayload(f"{path}: header truncated")
    w, h = np.frombuffer(buf, dtype="<i4", count=2, offset=4)
    if w <= 0 or h <= 0:
        raise BadDimensions(f"{path}: non-positive dimensions {w}x{h}")
    n = int(w) * int(h) * 2
    if len(buf) < 12 + 4 * n:
        raise TruncatedPayload(f"{path}: expected {n} floats, file holds {(len(buf) - 12) // 4}")
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=12).astype(np.float64).reshape(h, w, 2)
    unknown = ~(np.abs(data) <= UNKNOWN_FLOW).all(axis=2)
    n_unknown = int(unknown.sum())
    if n_unknown:
        data = data.copy()
        data[unknown] = 0.0
        warnings.warn(f"{path}: {n_unknown} unknown flow vectors set to 0")
    flow = FlowField(data[..., 0], data[..., 1])
    return (flow, n_unknown) if return_unknown else flow


def write_flo(flow: FlowField, path) -> None:
    h, w = flow.shape
    payload = np.stack([flow.u, flow.v], axis=-1).astype("<f4")
    with open(path, "wb") as f:
        f.write(FLO_MAGIC)
        f.write(np.array([w, h], dtype="<i4").tobytes())
        f.write(payload.tobytes())


_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def _parse_pnm_header(buf: bytes):
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(buf, pos)
        if not m:
            raise FormatError("malformed PNM header")
        tokens.append(m.group(1))
        pos = m.end()
    if pos >= len(buf) or buf[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise FormatError("malformed PNM header")
    magic = tokens[0]
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("malformed PNM header") from None
    return magic, w, h, maxval, pos + 1


def read_image(path) -> np.ndarray:
    """Read binary PGM (P5 -> (H, W)) or PPM (P6 -> (3, H, W)) scaled to [0, 1]."""
    buf = _read_bytes(path)
    magic, w, h, maxval, offset = _parse_pnm_header(buf)
    if magic not in (b"P5", b"P6"):
        raise BadMagic(f"{path}: unsupported PNM type {magic!r}")
    if w <= 0 or h <= 0:
        raise BadDimensions(f"{path}: non-positive dimensions {w}x{h}")
    if maxval not in SUPPORTED_MAXVAL:
        raise UnsupportedMaxval(f"{path}: maxval {maxval} not in {SUPPORTED_MAXVAL}")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    count = w * h * channels
    if len(buf) - offset < count * dtype.itemsize:
        raise TruncatedPayload(f"{path}: pixel data truncated")
    raw = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).astype(np.float64) / maxval
    if channels == 1:
        return raw.reshape(h, w)
    return raw.reshape(h, w, 3).transpose(2, 0, 1).copy()


def write_image(img, path, maxval: int = 255) -> None:
    """Write a (H, W) plane as P5 or a (3, H, W) image as P6; values clipped to [0, 1]."""
    if maxval not in SUPPORTED_MAXVAL:
        raise UnsupportedMaxval(f"maxval {maxval} not in {SUPPORTED_MAXVAL}")
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim == 2:
        magic, h, w = b"P5", *arr.shape
        pixels = arr
    elif arr.ndim == 3 and arr.shape[0] == 3:
        magic, h, w = b"P6", arr.shape[1], arr.shape[2]
        pixels = arr.transpose(1, 2, 0)
    else:
        raise FormatError(f"cannot write image of shape {arr.shape}")
    q = np.rint(np.clip(pixels, 0.0, 1.0) * maxval)
    data = q.astype(">u2" if maxval == 65535 else "u1").tobytes()
    with open(path, "wb") as f:
        f.write(b"%s\n%d %d\n%d\n" % (magic, w, h, maxval))
        f.write(data)


@dataclass(frozen=True)
class ManifestEntry:
    prev: Path
    center: Path
    next: Path
    flow_prev: Path
    flow_next: Path
    target: Path


MANIFEST_FIELDS = ("prev", "center", "next", "flow_prev", "flow_next", "target")


def read_manifest(path) -> List[ManifestEntry]:
    """One triplet per line: ``prev center next flow_cp flow_cn target``.

    Relative paths resolve against the manifest's directory; ``#`` starts
    a comment.
    """
    path = Path(path)
    text = _read_bytes(path).decode("utf-8")
    root = path.parent
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != len(MANIFEST_FIELDS):
            raise FormatError(f"{path}:{lineno}: expected {len(MANIFEST_FIELDS)} paths, got {len(parts)}")
        entries.append(ManifestEntry(*[root / p for p in parts]))
    return entries


def write_manifest(entries, path) -> None:
    path = Path(path)
    root = path.parent
    lines = ["# prev center next flow_cp flow_cn target"]
    for e in entries:
        cols = []
        for name in MANIFEST_FIELDS:
            p = Path(getattr(e, name))
            try:
                p = p.relative_to(root)
            except ValueError:
                pass
            cols.append(str(p))
        lines.append(" ".join(cols))
    path.write_text("\n".join(lines) + "\n")
