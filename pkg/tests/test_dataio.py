import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from vsrmc.core import FlowField
from vsrmc.dataio import (ManifestEntry, read_flo, read_image, read_manifest, write_flo, write_image,
                          write_manifest)
from vsrmc.errors import BadDimensions, BadMagic, FormatError, MissingInput, TruncatedPayload, UnsupportedMaxval

f32 = st.floats(-1e6, 1e6, width=32, allow_nan=False)


@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(2)), elements=f32))
def test_flo_roundtrip_is_bit_exact(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("flo") / "f.flo"
    flow = FlowField(data[..., 0].astype(np.float64), data[..., 1].astype(np.float64))
    write_flo(flow, path)
    back = read_flo(path)
    assert back.u.astype(np.float32).tobytes() == data[..., 0].tobytes()
    assert back.v.astype(np.float32).tobytes() == data[..., 1].tobytes()
    write_flo(back, path.with_suffix(".2.flo"))
    assert path.read_bytes() == path.with_suffix(".2.flo").read_bytes()


def test_flo_layout_for_2x1(tmp_path):
    path = tmp_path / "a.flo"
    write_flo(FlowField(np.array([[1.0, 3.0]]), np.array([[2.0, 4.0]])), path)
    buf = path.read_bytes()
    assert len(buf) == 28
    assert buf == b"PIEH" + struct.pack("<ii", 2, 1) + struct.pack("<4f", 1, 2, 3, 4)


def test_flo_errors(tmp_path):
    good = b"PIEH" + struct.pack("<ii", 2, 1) + struct.pack("<4f", 1, 2, 3, 4)
    cases = {"magic.flo": (b"PIEX" + good[4:], BadMagic), "short.flo": (good[:-1], TruncatedPayload),
             "head.flo": (good[:9], TruncatedPayload),
             "dims.flo": (b"PIEH" + struct.pack("<ii", 0, 1), BadDimensions),
             "neg.flo": (b"PIEH" + struct.pack("<ii", 2, -1), BadDimensions)}
    for name, (buf, err) in cases.items():
        (tmp_path / name).write_bytes(buf)
        with pytest.raises(err):
            read_flo(tmp_path / name)
    with pytest.raises(MissingInput):
        read_flo(tmp_path / "none.flo")


def test_flo_unknown_sentinel_becomes_zero(tmp_path):
    path = tmp_path / "s.flo"
    path.write_bytes(b"PIEH" + struct.pack("<ii", 2, 1) + struct.pack("<4f", 1e10, 0.5, 3, 4))
    with pytest.warns(UserWarning):
        flow, n = read_flo(path, return_unknown=True)
    assert n == 1
    np.testing.assert_array_equal(flow.u, [[0.0, 3.0]])
    np.testing.assert_array_equal(flow.v, [[0.0, 4.0]])


@pytest.mark.parametrize("maxval", [255, 65535])
@pytest.mark.parametrize("channels", [1, 3])
def test_pnm_roundtrip(tmp_path, rng, maxval, channels):
    shape = (5, 7) if channels == 1 else (3, 5, 7)
    q = rng.integers(0, maxval + 1, size=shape)
    img = q / maxval
    path = tmp_path / "x.pnm"
    write_image(img, path, maxval)
    assert path.read_bytes()[:2] == (b"P5" if channels == 1 else b"P6")
    back = read_image(path)
    assert back.shape == shape
    np.testing.assert_array_equal(np.rint(back * maxval), q)
    write_image(back, tmp_path / "y.pnm", maxval)
    assert path.read_bytes() == (tmp_path / "y.pnm").read_bytes()


def test_pnm_16bit_is_big_endian(tmp_path):
    path = tmp_path / "b.pgm"
    write_image(np.array([[1.0 / 65535, 256.0 / 65535]]), path, 65535)
    assert path.read_bytes().endswith(b"\x00\x01\x01\x00")


def test_pnm_header_with_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    np.testing.assert_array_equal(read_image(path), [[0.0, 1.0]])


def test_pnm_errors(tmp_path):
    cases = {"m.pgm": (b"P2\n1 1\n255\n0", BadMagic), "x.pgm": (b"P5\n1 1\n4095\n\x00\x00", UnsupportedMaxval),
             "t.pgm": (b"P5\n2 2\n255\n\x00", TruncatedPayload), "h.pgm": (b"P5\n2", FormatError),
             "d.pgm": (b"P5\n0 2\n255\n", BadDimensions)}
    for name, (buf, err) in cases.items():
        (tmp_path / name).write_bytes(buf)
        with pytest.raises(err):
            read_image(tmp_path / name)
    with pytest.raises(UnsupportedMaxval):
        write_image(np.zeros((2, 2)), tmp_path / "w.pgm", 4095)
    with pytest.raises(MissingInput):
        read_image(tmp_path / "nothing.pgm")


def test_manifest_roundtrip(tmp_path):
    names = ["p.pgm", "c.pgm", "n.pgm", "cp.flo", "cn.flo", "t.pgm"]
    entries = [ManifestEntry(*[tmp_path / f"{i}_{n}" for n in names]) for i in range(3)]
    path = tmp_path / "set.txt"
    write_manifest(entries, path)
    assert "/" not in path.read_text().splitlines()[1]
    assert read_manifest(path) == entries


def test_manifest_comments_and_errors(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("# header\n\na b c d e f  # trailing\n")
    (entry,) = read_manifest(path)
    assert entry.target == tmp_path / "f"
    path.write_text("a b c\n")
    with pytest.raises(FormatError):
        read_manifest(path)
