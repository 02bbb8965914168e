"""Morphological watershed on unsigned distance fields.

Fragment interiors are distance maxima, so basins are flooded from the top of
the field downward (equivalently, from the minima of the negated field). The
field is quantized into ``step``-wide levels and flooded one level at a time.
Maxima shallower than ``min_depth`` are merged into their neighbours through an
h-maxima reconstruction, which keeps prediction noise from seeding extra
fragments.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import kernels
from .grid import LabelGrid, OccupancyGrid, ScalarField, relabel_by_size

DEFAULT_STEP = 0.04


@dataclass(frozen=True)
class WatershedConfig:
    step: float = DEFAULT_STEP
    connectivity: int = 6
    min_depth: float = None  # defaults to 2 * step

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.connectivity not in (6, 26):
            raise ValueError("connectivity must be 6 or 26")
        if self.min_depth is None:
            object.__setattr__(self, "min_depth", 2.0 * self.step)
        if self.min_depth < 0:
            raise ValueError("min_depth must be >= 0")

    @property
    def depth_levels(self) -> int:
        return int(np.ceil(self.min_depth / self.step - 1e-9))


def _structure(connectivity):
    return ndimage.generate_binary_structure(3, 1 if connectivity == 6 else 3)


def find_markers(levels, cfg: WatershedConfig):
    """Labelled seed regions: one per maximum deeper than ``min_depth``, and at
    least one per connected foreground component."""
    fg = levels >= 1
    offs = kernels.neighbor_offsets(tuple(s + 2 for s in levels.shape), cfg.connectivity)
    q = kernels.pad_flat(levels.astype(np.int32), kernels.PAD)
    # reconstruction from f - h keeps maxima deeper than h; a basin exactly
    # min_depth deep should still seed, hence h - 1
    h = max(cfg.depth_levels - 1, 0)
    marker = kernels.pad_flat(np.maximum(levels - h, 0).astype(np.int32), kernels.PAD)
    rec = kernels.reconstruct(marker, q, offs)
    peaks = kernels.unpad(kernels.regional_maxima(rec, offs), levels.shape)
    peaks &= kernels.unpad(rec, levels.shape) >= 1
    struct = _structure(cfg.connectivity)
    markers, n = ndimage.label(peaks, structure=struct)

    comps, n_comp = ndimage.label(fg, structure=struct)
    if n_comp:
        has = np.zeros(n_comp + 1, dtype=bool)
        has[np.unique(comps[markers > 0])] = True
        for c in np.flatnonzero(~has[1:]) + 1:
            idx = np.flatnonzero(comps.ravel() == c)
            top = idx[np.argmax(levels.ravel()[idx])]
            n += 1
            markers.ravel()[top] = n
    return markers.astype(np.int32)


def watershed_segment(usdf: ScalarField, cfg: WatershedConfig = WatershedConfig()) -> LabelGrid:
    vals = usdf.values
    if vals.min(initial=0) < 0:
        raise ValueError("unsigned distance field has negative values")
    levels = np.floor(vals.astype(np.float64) / cfg.step).astype(np.int32)
    if not (levels >= 1).any():
        return LabelGrid(usdf.meta, np.zeros(usdf.meta.shape, np.uint32))
    markers = find_markers(levels, cfg)
    offs = kernels.neighbor_offsets(tuple(s + 2 for s in levels.shape), cfg.connectivity)
    flat = kernels.flood(kernels.pad_flat(levels, kernels.PAD), kernels.pad_flat(markers, 0), offs)
    lab = kernels.unpad(flat, levels.shape)
    return LabelGrid(usdf.meta, relabel_by_size(lab))


def filter_labels(labels: LabelGrid, mask: OccupancyGrid) -> LabelGrid:
    """Keep labels with more than half of their voxels inside ``mask``, clipped to it.

    Masked voxels left without a label are absorbed by the nearest surviving
    label (geodesically, inside the mask); masked components no survivor can
    reach become labels of their own. Every masked voxel ends up labelled.
    """
    if labels.meta != mask.meta or labels.labels.shape != mask.bits.shape:
        raise ValueError("label grid and mask have different shapes")
    lab = labels.labels.astype(np.int64)
    m = mask.bits
    n = labels.n_regions
    total = np.bincount(lab.ravel(), minlength=n + 1)
    inside = np.bincount(lab[m], minlength=n + 1)
    keep = 2 * inside > total
    keep[0] = False
    out = np.where(m & keep[lab], lab, 0).astype(np.int32)

    if m.any() and (out[m] == 0).any():
        offs = kernels.neighbor_offsets(tuple(s + 2 for s in m.shape), 6)
        lv = kernels.pad_flat(np.where(m, 1, kernels.PAD).astype(np.int32), kernels.PAD)
        if out.any():
            out = kernels.unpad(kernels.flood(lv, kernels.pad_flat(out, 0), offs), m.shape).copy()
        orphan = m & (out == 0)
        if orphan.any():
            extra, _ = ndimage.label(orphan, structure=_structure(6))
            out[orphan] = extra[orphan] + out.max()
    return LabelGrid(labels.meta, relabel_by_size(out))


def region_report(labels: LabelGrid, path):
    """CSV of label, voxel count and world-space centroid."""
    rows = []
    for r in range(1, labels.n_regions + 1):
        idx = np.argwhere(labels.labels == r)
        c = labels.meta.voxel_center(idx).mean(axis=0)
        rows.append([r, len(idx), *(f"{x:.6f}" for x in c)])
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "voxels", "cx", "cy", "cz"])
        w.writerows(rows)
    return path
