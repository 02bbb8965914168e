"""Deterministic Voronoi stand-in for a brittle-fracture solver.

Stronger impacts produce more seeds, and seeds cluster around the impact
point, so fragments there come out smaller. This is a synthetic rule chosen
to be monotone and reproducible, not a physical model.
"""
import numpy as np

from ..grid import LabelGrid, OccupancyGrid
from ..impulse import DEFAULT_I_MAX, ImpulseRaw

SIGMA = 0.35
MIN_SEEDS, MAX_SEEDS = 2, 24


def seed_count(I, i_max=DEFAULT_I_MAX):
    return int(np.clip(2 + np.floor(8.0 * I / i_max), MIN_SEEDS, MAX_SEEDS))


def synthetic_fracture_oracle(occ: OccupancyGrid, impulse: ImpulseRaw, seed, i_max=DEFAULT_I_MAX,
                              sigma=SIGMA) -> LabelGrid:
    idx = np.argwhere(occ.bits)
    if len(idx) == 0:
        raise ValueError("empty shape")
    n = min(seed_count(impulse.I, i_max), len(idx))
    pts = occ.meta.voxel_center(idx)
    d2 = ((pts - np.asarray(impulse.p)) ** 2).sum(axis=1)
    w = np.exp(-d2 / sigma ** 2)
    if not w.sum() > 0:
        w = np.ones_like(w)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(idx), size=n, replace=False, p=w / w.sum())
    seeds = pts[chosen]
    dist = ((pts[:, None, :] - seeds[None, :, :]) ** 2).sum(axis=2)
    labels = np.zeros(occ.meta.shape, dtype=np.uint32)
    labels[tuple(idx.T)] = dist.argmin(axis=1) + 1
    return LabelGrid(occ.meta, labels)
