"""Voxel grids over the normalized domain [-1, 1]^3.

World point ``-1`` maps to voxel coordinate ``0`` and ``+1`` to ``R``; voxel
``i`` owns the cell ``[i, i+1)`` and is sampled at its centre. Arrays are
indexed ``[x, y, z]``; on disk they are written x-fastest (see :mod:`voxfrac.io`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class GridMeta:
    resolution: int

    def __post_init__(self):
        if int(self.resolution) != self.resolution or self.resolution < 1:
            raise ValueError(f"resolution must be a positive integer, got {self.resolution!r}")

    @property
    def spacing(self) -> float:
        return 2.0 / self.resolution

    @property
    def shape(self):
        r = self.resolution
        return (r, r, r)

    def voxel_to_world(self, ijk):
        return -1.0 + np.asarray(ijk, dtype=np.float64) * self.spacing

    def world_to_voxel(self, xyz):
        return (np.asarray(xyz, dtype=np.float64) + 1.0) / self.spacing

    def voxel_center(self, ijk):
        return self.voxel_to_world(np.asarray(ijk, dtype=np.float64) + 0.5)

    def world_to_index(self, xyz):
        """Index of the voxel containing ``xyz`` (not clipped to the grid)."""
        return np.floor(self.world_to_voxel(xyz)).astype(np.int64)

    def axis_centers(self):
        return self.voxel_center(np.arange(self.resolution))

    def to_dict(self):
        return {"resolution": self.resolution, "voxel_spacing": self.spacing}


def _check_shape(meta, arr, what):
    if arr.shape != meta.shape:
        raise ValueError(f"{what} shape {arr.shape} does not match grid {meta.shape}")


@dataclass(frozen=True)
class ScalarField:
    meta: GridMeta
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        _check_shape(self.meta, v, "field")
        if not np.isfinite(v).all():
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class OccupancyGrid:
    meta: GridMeta
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        _check_shape(self.meta, b, "occupancy")
        object.__setattr__(self, "bits", b)

    @property
    def count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class LabelGrid:
    """Per-voxel fragment ids; 0 is background, fragments are 1..n_regions."""

    meta: GridMeta
    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.dtype.kind not in "iu" or (lab.size and lab.min() < 0):
            raise ValueError("labels must be non-negative integers")
        lab = lab.astype(np.uint32)
        _check_shape(self.meta, lab, "labels")
        ids = np.unique(lab)
        ids = ids[ids > 0]
        if ids.size and (ids[0] != 1 or ids[-1] != ids.size):
            raise ValueError("label ids must be contiguous 1..N")
        object.__setattr__(self, "labels", lab)

    @property
    def n_regions(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    def counts(self):
        """Voxel count per label, index 0 = background."""
        return np.bincount(self.labels.ravel(), minlength=self.n_regions + 1)


def relabel_by_size(labels):
    """Renumber positive labels 1..N by descending voxel count (ties: old id)."""
    labels = np.asarray(labels)
    ids, counts = np.unique(labels[labels > 0], return_counts=True)
    order = np.lexsort((ids, -counts))
    lut = np.zeros(int(labels.max()) + 1 if labels.size else 1, dtype=np.uint32)
    lut[ids[order]] = np.arange(1, ids.size + 1, dtype=np.uint32)
    return lut[labels]


# ---------------------------------------------------------------------------
# meshes


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def edge_counts(self):
        """Unique undirected edges and how many triangles use each."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def is_watertight(self) -> bool:
        if self.is_empty:
            return True
        _, counts = self.edge_counts()
        return bool(np.all(counts == 2))

    def euler_characteristic(self) -> int:
        edges, _ = self.edge_counts()
        used = np.unique(self.triangles)
        return int(len(used) - len(edges) + len(self.triangles))

    def triangle_areas(self):
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def volume(self) -> float:
        """Signed enclosed volume (divergence theorem); positive for outward winding."""
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, scale, translation):
        return TriMesh(self.vertices * scale + np.asarray(translation), self.triangles)


@dataclass(frozen=True)
class Similarity:
    """``x -> scale * x + translation``."""

    scale: float
    translation: tuple

    def apply(self, pts):
        return np.asarray(pts, dtype=np.float64) * self.scale + np.asarray(self.translation)

    def as_list(self):
        """Row-major 3x4 matrix as 12 floats."""
        s, t = self.scale, self.translation
        return [s, 0.0, 0.0, t[0], 0.0, s, 0.0, t[1], 0.0, 0.0, s, t[2]]

    def inverse(self):
        s = 1.0 / self.scale
        return Similarity(s, tuple(-s * float(t) for t in self.translation))

    @classmethod
    def identity(cls):
        return cls(1.0, (0.0, 0.0, 0.0))


def normalize_shape(mesh: TriMesh):
    """Scale and centre a mesh so its bounding box is centred at the origin with
    longest edge 2. Returns ``(mesh, Similarity)``."""
    if len(mesh.vertices) == 0:
        raise ValueError("degenerate shape: no vertices")
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise ValueError("degenerate shape")
    scale = 2.0 / extent
    center = 0.5 * (lo + hi)
    tr = Similarity(scale, tuple(float(x) for x in -center * scale))
    return TriMesh(tr.apply(mesh.vertices), mesh.triangles), tr


# ---------------------------------------------------------------------------
# inside tests

# Rays are cast along +z from slightly nudged xy positions so they never pass
# exactly through a mesh edge or vertex of an axis-aligned or diagonal layout.
_NUDGE = np.array([3.17e-9, 1.73e-9])


def _xy_crossings(mesh, px, py):
    """z of every triangle crossing for each query column (px[i], py[i]).

    Returns (column_index, z) arrays.
    """
    tri = mesh.vertices[mesh.triangles]  # (T, 3, 3)
    ax, ay = tri[:, 0, 0], tri[:, 0, 1]
    bx, by = tri[:, 1, 0], tri[:, 1, 1]
    cx, cy = tri[:, 2, 0], tri[:, 2, 1]
    det = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay)
    keep = np.abs(det) > 1e-14
    tri, det = tri[keep], det[keep]
    if len(tri) == 0:
        return np.zeros(0, np.int64), np.zeros(0)
    lo = tri[:, :, :2].min(axis=1)
    hi = tri[:, :, :2].max(axis=1)
    cols, zs = [], []
    px = px + _NUDGE[0]
    py = py + _NUDGE[1]
    chunk = max(1, (1 << 22) // max(len(px), 1))
    for s in range(0, len(tri), chunk):
        t = tri[s:s + chunk]
        d = det[s:s + chunk]
        inb = ((px[None, :] >= lo[s:s + chunk, None, 0]) & (px[None, :] <= hi[s:s + chunk, None, 0])
               & (py[None, :] >= lo[s:s + chunk, None, 1]) & (py[None, :] <= hi[s:s + chunk, None, 1]))
        ti, ci = np.nonzero(inb)
        if ti.size == 0:
            continue
        a, b, c = t[ti, 0], t[ti, 1], t[ti, 2]
        qx, qy = px[ci], py[ci]
        u = ((b[:, 0] - qx) * (c[:, 1] - qy) - (c[:, 0] - qx) * (b[:, 1] - qy)) / d[ti]
        v = ((c[:, 0] - qx) * (a[:, 1] - qy) - (a[:, 0] - qx) * (c[:, 1] - qy)) / d[ti]
        w = 1.0 - u - v
        hit = (u > 0) & (v > 0) & (w > 0)
        cols.append(ci[hit])
        zs.append(u[hit] * a[hit, 2] + v[hit] * b[hit, 2] + w[hit] * c[hit, 2])
    if not cols:
        return np.zeros(0, np.int64), np.zeros(0)
    return np.concatenate(cols), np.concatenate(zs)


def points_inside(mesh: TriMesh, pts):
    """Ray-parity inside test for arbitrary points against a closed mesh."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if mesh.is_empty or len(pts) == 0:
        return np.zeros(len(pts), dtype=bool)
    col, z = _xy_crossings(mesh, pts[:, 0], pts[:, 1])
    above = z > pts[col, 2]
    hits = np.bincount(col[above], minlength=len(pts))
    return hits % 2 == 1


def voxelize(mesh: TriMesh, meta: GridMeta) -> OccupancyGrid:
    """Occupancy of voxel centres inside a watertight mesh."""
    if not mesh.is_watertight():
        raise ValueError("open surface")
    r = meta.resolution
    bits = np.zeros(meta.shape, dtype=bool)
    if mesh.is_empty:
        return OccupancyGrid(meta, bits)
    c = meta.axis_centers()
    gx, gy = np.meshgrid(c, c, indexing="ij")
    col, z = _xy_crossings(mesh, gx.ravel(), gy.ravel())
    # each crossing toggles every centre below it
    k = np.clip(np.ceil(meta.world_to_voxel(z) - 0.5).astype(np.int64), 0, r)
    diff = np.zeros((r * r, r + 1), dtype=np.int64)
    np.add.at(diff, (col, np.zeros_like(col)), 1)
    np.add.at(diff, (col, k), -1)
    parity = np.cumsum(diff[:, :r], axis=1) % 2
    bits[:] = parity.reshape(r, r, r).astype(bool)
    return OccupancyGrid(meta, bits)


def distance_transform(occ: OccupancyGrid, region: str = "inside") -> ScalarField:
    """Exact Euclidean distance (world units) from each voxel of ``region`` to the
    nearest voxel centre of the complementary region; 0 elsewhere.

    When the complementary region is empty the domain boundary stands in for it:
    the grid is padded by one layer of complementary voxels.
    """
    if region not in ("inside", "outside"):
        raise ValueError("region must be 'inside' or 'outside'")
    sel = occ.bits if region == "inside" else ~occ.bits
    feature = ~sel
    if not feature.any():
        feature = np.pad(feature, 1, constant_values=True)
        d2 = kernels.edt_sq(feature)[1:-1, 1:-1, 1:-1]
    else:
        d2 = kernels.edt_sq(feature)
    d = np.sqrt(d2) * occ.meta.spacing
    d[~sel] = 0.0
    return ScalarField(occ.meta, d.astype(np.float32))


# ---------------------------------------------------------------------------
# procedural shapes


def box_mesh(lo=(-0.5, -0.5, -0.5), hi=(0.5, 0.5, 0.5)) -> TriMesh:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    v = np.array([[(hi if (i >> a) & 1 else lo)[a] for a in range(3)] for i in range(8)])
    # corners indexed x + 2y + 4z; outward winding
    f = [
        (0, 2, 3), (0, 3, 1),  # z-
        (4, 5, 7), (4, 7, 6),  # z+
        (0, 1, 5), (0, 5, 4),  # y-
        (2, 6, 7), (2, 7, 3),  # y+
        (0, 4, 6), (0, 6, 2),  # x-
        (1, 3, 7), (1, 7, 5),  # x+
    ]
    return TriMesh(v, np.array(f))


def icosphere(radius=1.0, subdivisions=2, center=(0.0, 0.0, 0.0)) -> TriMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nf
    return TriMesh(np.array(verts) * radius + np.asarray(center), np.array(faces))


def cylinder_mesh(radius=0.5, height=1.0, segments=32) -> TriMesh:
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    h = height / 2.0
    bot = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    verts = np.vstack([bot, top, [[0, 0, -h], [0, 0, h]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [(i, j, segments + j), (i, segments + j, segments + i)]
        tris += [(cb, j, i), (ct, segments + i, segments + j)]
    return TriMesh(verts, np.array(tris))


SHAPES = {
    "cube": lambda: box_mesh(),
    "sphere": lambda: icosphere(1.0, 3),
    "cylinder": lambda: cylinder_mesh(0.5, 1.0, 48),
}


def shape_mesh(name: str) -> TriMesh:
    try:
        return SHAPES[name]()
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}") from None
