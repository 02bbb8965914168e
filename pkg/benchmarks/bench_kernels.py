"""Time the numba and numpy paths of the voxel kernels on a segmentation-sized grid.

    python3 benchmarks/bench_kernels.py --resolution 32 --repeat 3
"""
import argparse
import time

import numpy as np

from voxfrac import kernels
from voxfrac.grid import GridMeta, LabelGrid
from voxfrac.gssdf import encode_gssdf


def sample_levels(r, seed):
    m = GridMeta(r)
    rng = np.random.default_rng(seed)
    idx = np.argwhere(np.ones(m.shape, bool))
    c = m.voxel_center(idx)
    solid = np.linalg.norm(c, axis=1) < 0.9
    seeds = c[solid][rng.choice(solid.sum(), 6, replace=False)]
    lab = np.zeros(m.shape, np.uint32)
    lab[tuple(idx[solid].T)] = ((c[solid, None] - seeds[None]) ** 2).sum(-1).argmin(1) + 1
    f = np.abs(encode_gssdf(LabelGrid(m, lab)).values)
    return lab > 0, np.floor(f / 0.04).astype(np.int32)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    solid, levels = sample_levels(args.resolution, args.seed)
    shape = levels.shape
    offs = kernels.neighbor_offsets(tuple(s + 2 for s in shape), 6)
    q = kernels.pad_flat(levels, kernels.PAD)
    marker = kernels.pad_flat(np.maximum(levels - 1, 0).astype(np.int32), kernels.PAD)
    rec = kernels.reconstruct(marker.copy(), q, offs, False)
    seeds = kernels.pad_flat(np.where(kernels.unpad(kernels.regional_maxima(rec, offs, False), shape),
                                      np.arange(levels.size).reshape(shape) + 1, 0).astype(np.int32), 0)

    cases = {
        "edt": lambda nb: kernels.edt_sq(solid, nb),
        "reconstruct": lambda nb: kernels.reconstruct(marker.copy(), q, offs, nb),
        "regional_maxima": lambda nb: kernels.regional_maxima(rec, offs, nb),
        "flood": lambda nb: kernels.flood(q, seeds.copy(), offs, nb),
    }
    print(f"R={args.resolution}, best of {args.repeat}")
    print(f"{'kernel':<16}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, fn in cases.items():
        t_np = best_of(lambda: fn(False), args.repeat)
        if kernels.HAVE_NUMBA:
            fn(True)  # compile outside the timing
            t_nb = best_of(lambda: fn(True), args.repeat)
            print(f"{name:<16}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<16}{t_np:>10.4f}{'-':>10}{'-':>9}")


if __name__ == "__main__":
    main()
