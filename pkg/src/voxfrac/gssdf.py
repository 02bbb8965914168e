"""Geometrically segmented signed distance fields.

Inside the shape the field is the distance to the nearest crack or outer
surface (the boundary of the voxel's own fragment); outside it is minus the
distance to the shape. Fields are kept in world units; the network sees them
clamped to [-1, 1] (interior distances never exceed the half-extent 1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import LabelGrid, OccupancyGrid, ScalarField

NETWORK_SCALE = 1.0


@dataclass(frozen=True)
class GssdfField:
    field: ScalarField

    @property
    def meta(self):
        return self.field.meta

    @property
    def values(self):
        return self.field.values

    @classmethod
    def from_array(cls, meta, values):
        return cls(ScalarField(meta, values))


def encode_gssdf(parts: LabelGrid) -> GssdfField:
    lab = parts.labels
    n = parts.n_regions
    if n == 0:
        raise ValueError("label grid has no fragments")
    s = parts.meta.spacing
    # voxels beyond the grid count as exterior
    padded = np.pad(lab, 1, constant_values=0)
    out_p = np.zeros(padded.shape, dtype=np.float64)
    for r in range(1, n + 1):
        idx = np.argwhere(padded == r)
        # the bounding box grown by one voxel always contains a non-r voxel
        lo = idx.min(axis=0) - 1
        hi = idx.max(axis=0) + 2
        box = (slice(lo[0], hi[0]), slice(lo[1], hi[1]), slice(lo[2], hi[2]))
        inside = padded[box] == r
        d = np.sqrt(kernels.edt_sq(~inside)) * s
        out_p[box][inside] = d[inside]
    out = out_p[1:-1, 1:-1, 1:-1]

    solid = lab > 0
    if (~solid).any():
        d_out = np.sqrt(kernels.edt_sq(solid)) * s
        out[~solid] = -d_out[~solid]
    return GssdfField.from_array(parts.meta, out.astype(np.float32))


def extract_mask(g: GssdfField) -> OccupancyGrid:
    return OccupancyGrid(g.meta, g.values >= 0)


def extract_usdf(g: GssdfField) -> ScalarField:
    return ScalarField(g.meta, np.abs(g.values))


def to_network(values):
    return np.clip(np.asarray(values, dtype=np.float32) * NETWORK_SCALE, -1.0, 1.0)


def from_network(values):
    return np.asarray(values, dtype=np.float32) / NETWORK_SCALE
