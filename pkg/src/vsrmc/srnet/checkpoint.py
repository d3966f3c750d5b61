"""Binary checkpoint format.

Layout (all little-endian)::

    b"VSRN"                magic
    uint32  version        (1)
    uint32  n_frames
    uint32  channels_per_frame
    uint8   shared_first
    uint8   has_frame_layer
    [uint32 out, uint32 kernel, uint8 relu]   frame layer, if present
    uint32  n_layers
    n_layers x [uint32 out, uint32 kernel, uint8 relu]
    float32 parameters in SrNetwork.parameters() order

Saving a float64 network rounds its parameters to float32.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagic, FormatError, MissingInput, TruncatedPayload
from .network import LayerSpec, SrNetwork, Topology

MAGIC = b"VSRN"
VERSION = 1
_LAYER = struct.Struct("<IIB")


def _pack_layer(spec: LayerSpec) -> bytes:
    return _LAYER.pack(spec.out_channels, spec.kernel, int(spec.relu))


def encode(net: SrNetwork) -> bytes:
    t = net.topology
    parts = [MAGIC, struct.pack("<IIIBB", VERSION, t.n_frames, t.channels_per_frame,
                                int(t.shared_first), int(t.frame_layer is not None))]
    if t.frame_layer is not None:
        parts.append(_pack_layer(t.frame_layer))
    parts.append(struct.pack("<I", len(t.layers)))
    parts += [_pack_layer(s) for s in t.layers]
    parts += [np.ascontiguousarray(p, dtype="<f4").tobytes() for p in net.parameters()]
    return b"".join(parts)


def decode(buf: bytes) -> SrNetwork:
    if buf[:4] != MAGIC:
        raise BadMagic(f"not a checkpoint (magic {buf[:4]!r})")
    pos = 4

    def take(fmt):
        nonlocal pos
        s = struct.Struct(fmt)
        if pos + s.size > len(buf):
            raise TruncatedPayload("checkpoint header truncated")
        vals = s.unpack_from(buf, pos)
        pos += s.size
        return vals

    version, n_frames, cpf, shared, has_frame = take("<IIIBB")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    unpack_spec = lambda v: LayerSpec(v[0], v[1], bool(v[2]))
    frame_layer = unpack_spec(take("<IIB")) if has_frame else None
    (n_layers,) = take("<I")
    layers = tuple(unpack_spec(take("<IIB")) for _ in range(n_layers))
    topo = Topology(n_frames, cpf, frame_layer, layers, bool(shared))
    net = SrNetwork.init(topo, seed=0, std=0.0, dtype=np.float32)
    for p in net.parameters():
        nbytes = p.size * 4
        if pos + nbytes > len(buf):
            raise TruncatedPayload("checkpoint parameters truncated")
        p[...] = np.frombuffer(buf, dtype="<f4", count=p.size, offset=pos).reshape(p.shape)
        pos += nbytes
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes in checkpoint")
    return net


def save_checkpoint(net: SrNetwork, path) -> None:
    Path(path).write_bytes(encode(net))


def load_checkpoint(path) -> SrNetwork:
    path = Path(path)
    if not path.exists():
        raise MissingInput(f"checkpoint not found: {path}")
    return decode(path.read_bytes())
