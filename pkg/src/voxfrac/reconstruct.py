"""Fragment meshes from label grids, and their rigid-body attributes.

Each label is meshed as the 0.5 iso-surface of its binary indicator. The case
table is generated from the cube faces rather than typed in: on every face the
crossing points are joined into oriented segments, the segments of a cube chain
into closed loops, and each loop is triangulated. Because a face is decided
from its own four corners only, the two cubes sharing it always agree and the
surface has no cracks.

For a binary field the bilinear saddle of an ambiguous face sits exactly on the
iso-value. That tie is resolved by separating the two inside corners, which is
the same as treating the solid as 6-connected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grid import LabelGrid, Similarity, TriMesh
from .io import atomic_write_text, dump_json, write_obj

# corners are numbered x + 2y + 4z
EDGES = [(a, a | (1 << k), k) for k in range(3) for a in range(8) if not a >> k & 1]


def _faces():
    """(axis, side, corners in counter-clockwise order seen from outside)."""
    out = []
    for k in range(3):
        u, v = (k + 1) % 3, (k + 2) % 3
        for side in (0, 1):
            ring = []
            for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                ring.append((side << k) | (du << u) | (dv << v))
            if side == 0:
                ring.reverse()
            out.append((k, side, ring))
    return out


FACES = _faces()
_EDGE_ID = {frozenset((a, b)): i for i, (a, b, _) in enumerate(EDGES)}
_EDGE_FACES = [
    {(m, a >> m & 1) for m in range(3) if m != k} for a, _, k in EDGES
]


def _shares_face(e1, e2):
    return bool(_EDGE_FACES[e1] & _EDGE_FACES[e2])


def _triangulate(poly):
    """Triangulate a loop so no new edge lies in a cube face (such an edge could
    coincide with a boundary segment of the neighbouring cube)."""
    n = len(poly)
    if n == 3:
        return [tuple(poly)]
    for k in range(1, n - 1):
        if k > 1 and _shares_face(poly[0], poly[k]):
            continue
        if k < n - 2 and _shares_face(poly[k], poly[-1]):
            continue
        left = _triangulate(poly[:k + 1]) if k > 1 else []
        right = _triangulate(poly[k:]) if k < n - 2 else []
        if left is None or right is None:
            continue
        return left + [(poly[0], poly[k], poly[-1])] + right
    return None


def _case_triangles(case):
    inside = [bool(case >> c & 1) for c in range(8)]
    nxt = {}
    for _, _, ring in FACES:
        cross = []  # (edge id, entering?) in ring order
        for i in range(4):
            a, b = ring[i], ring[(i + 1) % 4]
            if inside[a] != inside[b]:
                cross.append((_EDGE_ID[frozenset((a, b))], inside[b]))
        # cut off each inside corner: an in->out crossing joins the out->in
        # crossing just before it
        for i, (e, entering) in enumerate(cross):
            if not entering:
                prev = cross[i - 1]
                nxt[e] = prev[0]
    tris = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        e = nxt[start]
        while e != start:
            loop.append(e)
            seen.add(e)
            e = nxt[e]
        t = _triangulate(loop)
        if t is None:
            raise RuntimeError(f"no admissible triangulation for case {case}")
        tris += t
    return tris


def _build_table():
    table = [_case_triangles(c) for c in range(256)]
    # fix the global winding so a lone inside corner gets outward normals
    tri = table[1][0]
    mid = np.array([[(EDGES[e][0] >> m & 1) + 0.5 * (m == EDGES[e][2]) for m in range(3)] for e in tri])
    normal = np.cross(mid[1] - mid[0], mid[2] - mid[0])
    if normal @ (mid.mean(axis=0) - 0.0) < 0:
        table = [[(a, c, b) for a, b, c in t] for t in table]
    return table


CASE_TABLE = _build_table()
_MAX_TRI = max(len(t) for t in CASE_TABLE)
_TABLE = np.full((256, _MAX_TRI, 3), -1, dtype=np.int64)
for _c, _t in enumerate(CASE_TABLE):
    if _t:
        _TABLE[_c, :len(_t)] = _t
_NTRI = np.array([len(t) for t in CASE_TABLE])
_EDGE_CORNER = np.array([[a >> m & 1 for m in range(3)] for a, _, _ in EDGES])
_EDGE_AXIS = np.array([k for _, _, k in EDGES])


def marching_cubes(labels: LabelGrid, r: int) -> TriMesh:
    """Closed surface of label ``r`` (iso 0.5 of its indicator), world coordinates."""
    if not 1 <= r <= labels.n_regions:
        raise ValueError(f"label {r} not present")
    box = ndimage.find_objects(labels.labels, max_label=r)[r - 1]
    if box is None:
        raise ValueError(f"label {r} not present")
    return _mesh_box(labels, r, box)


def _mesh_box(labels, r, box):
    origin = np.array([sl.start for sl in box], dtype=np.float64)
    return mesh_indicator(labels.labels[box] == r, labels.meta, origin)


def mesh_indicator(bits, meta, origin=(0.0, 0.0, 0.0)) -> TriMesh:
    """Mesh a boolean block whose first voxel sits at grid index ``origin``."""
    ind = np.pad(bits.astype(np.uint8), 1)
    n = np.array(ind.shape) - 1  # cubes per axis
    case = np.zeros(tuple(n), dtype=np.int64)
    for c in range(8):
        dx, dy, dz = c & 1, c >> 1 & 1, c >> 2 & 1
        case |= ind[dx:dx + n[0], dy:dy + n[1], dz:dz + n[2]].astype(np.int64) << c
    cubes = np.argwhere((case > 0) & (case < 255))
    cc = case[tuple(cubes.T)]
    rep = _NTRI[cc]
    cube_of = np.repeat(np.arange(len(cubes)), rep)
    slot = np.arange(len(cube_of)) - np.repeat(np.cumsum(rep) - rep, rep)
    tri_edges = _TABLE[cc[cube_of], slot]  # (T, 3) local edge ids

    # global edge key: lower corner in padded coordinates and axis
    corner = cubes[cube_of][:, None, :] + _EDGE_CORNER[tri_edges]
    axis = _EDGE_AXIS[tri_edges]
    my, mz = n[1] + 1, n[2] + 1
    key = ((corner[..., 0] * my + corner[..., 1]) * mz + corner[..., 2]) * 3 + axis
    uniq, inv = np.unique(key.ravel(), return_inverse=True)
    ax = uniq % 3
    flat = uniq // 3
    ijk = np.stack([flat // (my * mz), flat // mz % my, flat % mz], axis=1).astype(np.float64)
    ijk[np.arange(len(ax)), ax] += 0.5
    # padded index i is voxel origin + i - 1 of the grid
    verts = meta.voxel_center(ijk - 1.0 + np.asarray(origin, dtype=np.float64))
    return TriMesh(verts, inv.reshape(-1, 3))


@dataclass(frozen=True)
class SourceState:
    m_origin: float
    v_origin: tuple

    def __post_init__(self):
        if not self.m_origin > 0:
            raise ValueError("m_origin must be positive")
        object.__setattr__(self, "v_origin", tuple(float(x) for x in self.v_origin))


@dataclass
class FragmentBody:
    mesh: TriMesh
    mass: float
    velocity: np.ndarray
    label: int = 0
    voxel_count: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("fragment mass must be positive")
        self.velocity = np.asarray(self.velocity, dtype=np.float64)


def assign_rigid_attrs(fragments, src: SourceState):
    """fragments: iterable of (mesh, voxel_count) or (mesh, voxel_count, label)."""
    fragments = list(fragments)
    counts = np.array([f[1] for f in fragments], dtype=np.float64)
    total = counts.sum() if len(counts) else 0.0
    if total <= 0:
        raise ValueError("fragments hold no voxels")
    out = []
    for i, f in enumerate(fragments):
        label = f[2] if len(f) > 2 else i + 1
        out.append(FragmentBody(f[0], src.m_origin * counts[i] / total, np.array(src.v_origin),
                                label=int(label), voxel_count=int(f[1])))
    return out


def reconstruct_fragments(labels: LabelGrid, src: SourceState, transform: Similarity = None):
    """Mesh every label and attach mass and velocity. ``transform`` maps the
    normalized domain back to world space."""
    counts = labels.counts()
    frags = []
    for r, box in enumerate(ndimage.find_objects(labels.labels), start=1):
        if box is None:
            continue
        mesh = _mesh_box(labels, r, box)
        if transform is not None:
            mesh = mesh.transformed(transform.scale, transform.translation)
        frags.append((mesh, int(counts[r]), r))
    return assign_rigid_attrs(frags, src)


def export_obj(mesh: TriMesh, path):
    return write_obj(mesh, path)


def write_body_manifest(bodies, out_dir, stem="fragment"):
    """One OBJ per body plus bodies.json; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, b in enumerate(bodies):
        name = f"{stem}_{i:03d}.obj"
        export_obj(b.mesh, out_dir / name)
        entries.append({"mesh": name, "mass": float(b.mass), "velocity": [float(x) for x in b.velocity],
                        "label": int(b.label), "voxels": int(b.voxel_count)})
    path = out_dir / "bodies.json"
    atomic_write_text(path, dump_json(entries))
    return path


def read_body_manifest(path):
    return json.loads(Path(path).read_text())
