"""On-disk formats.

GSF1 voxel files::

    b"GSF1" | u32 R | u8 kind | payload

kind 0 = f32 scalar, 1 = u32 labels, 2 = u8 occupancy. Everything is
little-endian and the payload is x-fastest. A JSON sidecar ``<name>.meta.json``
records the target name, resolution and the 3x4 normalization transform.

GCK1 checkpoints::

    b"GCK1" | u32 count | count * (u16 len | name | u8 rank | rank * u32 | f32 data)
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

GSF_MAGIC = b"GSF1"
GCK_MAGIC = b"GCK1"

KIND_SCALAR, KIND_LABELS, KIND_OCCUPANCY = 0, 1, 2
_KIND_DTYPE = {KIND_SCALAR: np.dtype("<f4"), KIND_LABELS: np.dtype("<u4"), KIND_OCCUPANCY: np.dtype("u1")}


class FormatError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# GSF1


def encode_gsf(array, kind: int) -> bytes:
    array = np.asarray(array)
    if array.ndim != 3 or len(set(array.shape)) != 1:
        raise ValueError(f"expected a cubic 3D array, got shape {array.shape}")
    if kind not in _KIND_DTYPE:
        raise ValueError(f"unknown GSF kind {kind}")
    payload = np.asarray(array, dtype=_KIND_DTYPE[kind]).ravel(order="F").tobytes()
    return GSF_MAGIC + struct.pack("<IB", array.shape[0], kind) + payload


def decode_gsf(data: bytes):
    if len(data) < 9 or data[:4] != GSF_MAGIC:
        raise FormatError("bad magic")
    r, kind = struct.unpack("<IB", data[4:9])
    if kind not in _KIND_DTYPE:
        raise FormatError(f"unknown kind {kind}")
    dt = _KIND_DTYPE[kind]
    n = r * r * r
    if len(data) - 9 != n * dt.itemsize:
        raise FormatError("corrupt payload")
    arr = np.frombuffer(data, dtype=dt, offset=9, count=n).reshape((r, r, r), order="F")
    return kind, int(r), np.ascontiguousarray(arr)


def sidecar_path(path) -> Path:
    path = Path(path)
    stem = path.name[:-4] if path.name.endswith(".gsf") else path.name
    return path.with_name(stem + ".meta.json")


def write_gsf(path, array, kind: int, target: str = "", transform=None):
    path = Path(path)
    atomic_write_bytes(path, encode_gsf(array, kind))
    if transform is None:
        transform = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]
    meta = {"target": target, "resolution": int(np.asarray(array).shape[0]),
            "transform": [float(x) for x in transform]}
    atomic_write_text(sidecar_path(path), dump_json(meta))


def read_gsf(path):
    """Returns ``(kind, resolution, array)``."""
    return decode_gsf(Path(path).read_bytes())


def read_sidecar(path):
    p = sidecar_path(path)
    return json.loads(p.read_text()) if p.exists() else None


# ---------------------------------------------------------------------------
# GCK1


def encode_checkpoint(tensors: dict) -> bytes:
    out = [GCK_MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        out.append(struct.pack("<H", len(nb)) + nb)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def decode_checkpoint(data: bytes) -> dict:
    if data[:4] != GCK_MAGIC:
        raise FormatError("bad magic")
    try:
        (count,) = struct.unpack_from("<I", data, 4)
        pos = 8
        tensors = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + ln].decode("utf-8")
            pos += ln
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            if pos + 4 * n > len(data):
                raise FormatError("corrupt payload")
            tensors[name] = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(dims).copy()
            pos += 4 * n
    except struct.error as exc:
        raise FormatError("corrupt payload") from exc
    if pos != len(data):
        raise FormatError("trailing bytes after last tensor")
    return tensors


def write_checkpoint(path, tensors: dict):
    atomic_write_bytes(path, encode_checkpoint(tensors))


def read_checkpoint(path) -> dict:
    return decode_checkpoint(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# OBJ


def write_obj(mesh, path):
    if mesh.is_empty:
        raise ValueError("refusing to write an empty mesh")
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_obj(path):
    from .grid import TriMesh

    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
