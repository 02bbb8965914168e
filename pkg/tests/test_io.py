import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxfrac import io
from voxfrac.grid import TriMesh, box_mesh


@pytest.mark.parametrize("kind,dtype", [(io.KIND_SCALAR, np.float32), (io.KIND_LABELS, np.uint32),
                                        (io.KIND_OCCUPANCY, np.uint8)])
def test_gsf_roundtrip(tmp_path, kind, dtype):
    a = (np.random.default_rng(0).random((4, 4, 4)) * 10).astype(dtype)
    io.write_gsf(tmp_path / "a.gsf", a, kind, "cube")
    k, r, b = io.read_gsf(tmp_path / "a.gsf")
    assert (k, r) == (kind, 4)
    assert np.array_equal(a, b)
    side = io.read_sidecar(tmp_path / "a.gsf")
    assert side["target"] == "cube" and side["resolution"] == 4 and len(side["transform"]) == 12


def test_gsf_layout_x_fastest():
    a = np.zeros((2, 2, 2), np.float32)
    a[1, 0, 0] = 1.0
    a[0, 1, 0] = 2.0
    data = io.encode_gsf(a, io.KIND_SCALAR)
    assert data[:4] == bytes([0x47, 0x53, 0x46, 0x31])
    assert struct.unpack("<IB", data[4:9]) == (2, 0)
    vals = np.frombuffer(data[9:], "<f4")
    assert vals[1] == 1.0 and vals[2] == 2.0


def test_gsf_errors():
    good = io.encode_gsf(np.zeros((2, 2, 2)), io.KIND_SCALAR)
    with pytest.raises(io.FormatError, match="bad magic"):
        io.decode_gsf(b"XXXX" + good[4:])
    with pytest.raises(io.FormatError, match="corrupt payload"):
        io.decode_gsf(good[:-1])
    with pytest.raises(ValueError):
        io.encode_gsf(np.zeros((2, 3, 2)), io.KIND_SCALAR)


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=12),
                       st.lists(st.integers(1, 4), min_size=0, max_size=3), max_size=5),
       st.integers(0, 1000))
def test_checkpoint_roundtrip(shapes, seed):
    rng = np.random.default_rng(seed)
    tensors = {k: rng.standard_normal(s).astype(np.float32) for k, s in shapes.items()}
    back = io.decode_checkpoint(io.encode_checkpoint(tensors))
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        assert np.array_equal(back[k], tensors[k])


def test_checkpoint_truncated():
    data = io.encode_checkpoint({"w": np.ones((3, 3), np.float32)})
    with pytest.raises(io.FormatError):
        io.decode_checkpoint(data[:-2])
    with pytest.raises(io.FormatError):
        io.decode_checkpoint(data + b"\0")
    with pytest.raises(io.FormatError, match="bad magic"):
        io.decode_checkpoint(b"NOPE" + data[4:])


def test_obj_single_triangle(tmp_path):
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    io.write_obj(m, tmp_path / "t.obj")
    lines = (tmp_path / "t.obj").read_text().splitlines()
    assert sum(ln.startswith("v ") for ln in lines) == 3
    assert lines[-1] == "f 1 2 3"


def test_obj_roundtrip(tmp_path):
    m = box_mesh((-0.3, 0.1, 0.2), (0.7, 0.9, 1.1))
    io.write_obj(m, tmp_path / "b.obj")
    back = io.read_obj(tmp_path / "b.obj")
    assert np.abs(back.vertices - m.vertices).max() < 1e-6
    assert np.array_equal(back.triangles, m.triangles)


def test_obj_empty_mesh(tmp_path):
    with pytest.raises(ValueError):
        io.write_obj(TriMesh(np.zeros((0, 3)), np.zeros((0, 3))), tmp_path / "e.obj")
    assert not list(tmp_path.iterdir())


def test_atomic_write_leaves_no_tmp(tmp_path):
    io.atomic_write_text(tmp_path / "x.json", io.dump_json({"b": 1, "a": 2}))
    assert [p.name for p in tmp_path.iterdir()] == ["x.json"]
    assert (tmp_path / "x.json").read_text().index('"a"') < (tmp_path / "x.json").read_text().index('"b"')
