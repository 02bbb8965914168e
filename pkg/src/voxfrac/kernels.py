"""Hot voxel kernels, each with a numba path and a pure-numpy path.

All flood-style kernels work on *flattened, padded* C-order arrays: the
caller pads the 3D grid by one voxel on every side with a sentinel and passes
linear neighbour offsets (see :func:`neighbor_offsets`). Interior voxels can
then address all neighbours without bounds checks.

Both paths of every kernel produce identical results; the test-suite checks
that, and ``benchmarks/bench_kernels.py`` times them against each other.
"""
import numpy as np

from ._jit import HAVE_NUMBA, njit

EDT_INF = 1e20
PAD = np.int32(-(2**30))


def neighbor_offsets(padded_shape, connectivity=6):
    """Linear offsets of the 6- or 26-neighbourhood in a C-order array."""
    if connectivity not in (6, 26):
        raise ValueError("connectivity must be 6 or 26")
    sy = padded_shape[1] * padded_shape[2]
    sz = padded_shape[2]
    offs = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                n = abs(dx) + abs(dy) + abs(dz)
                if n == 0 or (connectivity == 6 and n != 1):
                    continue
                offs.append(dx * sy + dy * sz + dz)
    return np.array(sorted(offs), dtype=np.int64)


def pad_flat(a, fill):
    """Pad a 3D array by one voxel with ``fill`` and flatten (C order)."""
    return np.pad(a, 1, mode="constant", constant_values=fill).ravel()


def unpad(flat, shape):
    padded = tuple(s + 2 for s in shape)
    return flat.reshape(padded)[1:-1, 1:-1, 1:-1]


# ---------------------------------------------------------------------------
# exact squared Euclidean distance transform, one axis at a time


@njit
def _edt_lines_nb(f):
    m, n = f.shape
    out = np.empty_like(f)
    v = np.empty(n, np.int64)
    z = np.empty(n + 1, np.float64)
    for line in range(m):
        row = f[line]
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for q in range(1, n):
            fq = row[q] + q * q
            vk = v[k]
            s = (fq - (row[vk] + vk * vk)) / (2.0 * (q - vk))
            # z[0] is -inf, so this stops at k == 0
            while s <= z[k]:
                k -= 1
                vk = v[k]
                s = (fq - (row[vk] + vk * vk)) / (2.0 * (q - vk))
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for i in range(n):
            while z[k + 1] < i:
                k += 1
            d = i - v[k]
            out[line, i] = d * d + row[v[k]]
    return out


def _edt_lines_np(f, chunk_elems=1 << 23):
    m, n = f.shape
    idx = np.arange(n, dtype=np.float64)
    sq = (idx[:, None] - idx[None, :]) ** 2  # [i, j]
    out = np.empty_like(f)
    step = max(1, chunk_elems // (n * n))
    for a in range(0, m, step):
        blk = f[a:a + step]
        out[a:a + step] = (blk[:, None, :] + sq[None, :, :]).min(axis=2)
    return out


def edt_sq_lines(f, use_numba=None):
    """Lower envelope ``out[l, i] = min_j f[l, j] + (i - j)**2`` along the last axis."""
    f = np.ascontiguousarray(f, dtype=np.float64)
    if use_numba is None:
        use_numba = HAVE_NUMBA
    return _edt_lines_nb(f) if use_numba else _edt_lines_np(f)


def edt_sq(feature, use_numba=None):
    """Squared distance (in voxels) from every voxel to the nearest ``feature`` voxel."""
    d = np.where(feature, 0.0, EDT_INF)
    for axis in range(d.ndim):
        moved = np.moveaxis(d, axis, -1)
        shape = moved.shape
        res = edt_sq_lines(moved.reshape(-1, shape[-1]), use_numba)
        d = np.moveaxis(res.reshape(shape), -1, axis)
    return np.ascontiguousarray(d)


# ---------------------------------------------------------------------------
# morphological reconstruction by dilation (integer images)


@njit
def _reconstruct_nb(marker, mask, offsets):
    n = mask.size
    rec = np.minimum(marker, mask)
    neg = offsets[offsets < 0]
    pos = offsets[offsets > 0]
    for p in range(n):
        if mask[p] == PAD:
            continue
        m = rec[p]
        for o in neg:
            if rec[p + o] > m:
                m = rec[p + o]
        rec[p] = min(m, mask[p])
    queue = np.empty(n + 1, np.int64)
    inq = np.zeros(n, np.bool_)
    head = 0
    tail = 0
    for p in range(n - 1, -1, -1):
        if mask[p] == PAD:
            continue
        m = rec[p]
        for o in pos:
            if rec[p + o] > m:
                m = rec[p + o]
        rec[p] = min(m, mask[p])
        for o in pos:
            q = p + o
            if rec[q] < rec[p] and rec[q] < mask[q]:
                queue[tail] = p
                tail = (tail + 1) % (n + 1)
                inq[p] = True
                break
    while head != tail:
        p = queue[head]
        head = (head + 1) % (n + 1)
        inq[p] = False
        for o in offsets:
            q = p + o
            if rec[q] < rec[p] and rec[q] != mask[q]:
                rec[q] = min(rec[p], mask[q])
                if not inq[q]:
                    inq[q] = True
                    queue[tail] = q
                    tail = (tail + 1) % (n + 1)
    return rec


def _reconstruct_np(marker, mask, offsets):
    rec = np.minimum(marker, mask)
    inner = np.flatnonzero(mask != PAD)
    lim = mask[inner]
    while True:
        cur = rec[inner]
        d = cur.copy()
        for o in offsets:
            np.maximum(d, rec[inner + o], out=d)
        np.minimum(d, lim, out=d)
        if np.array_equal(d, cur):
            return rec
        rec[inner] = d


def reconstruct(marker, mask, offsets, use_numba=None):
    """Grayscale reconstruction by dilation of ``marker`` under ``mask``.

    Flat padded int32 arrays; padding voxels must hold :data:`PAD` in both.
    """
    if use_numba is None:
        use_numba = HAVE_NUMBA
    marker = np.ascontiguousarray(marker, dtype=np.int32)
    mask = np.ascontiguousarray(mask, dtype=np.int32)
    fn = _reconstruct_nb if use_numba else _reconstruct_np
    return fn(marker, mask, offsets)


# ---------------------------------------------------------------------------
# regional maxima


@njit
def _regional_max_nb(values, offsets):
    n = values.size
    nonmax = np.zeros(n, np.bool_)
    stack = np.empty(n, np.int64)
    top = 0
    for p in range(n):
        if values[p] == PAD:
            nonmax[p] = True
            continue
        for o in offsets:
            q = p + o
            if 0 <= q < n and values[q] > values[p]:
                nonmax[p] = True
                stack[top] = p
                top += 1
                break
    while top > 0:
        top -= 1
        p = stack[top]
        for o in offsets:
            q = p + o
            if 0 <= q < n and not nonmax[q] and values[q] == values[p]:
                nonmax[q] = True
                stack[top] = q
                top += 1
    return ~nonmax


def _regional_max_np(values, offsets):
    inner = np.flatnonzero(values != PAD)
    v = values[inner]
    nonmax = np.ones(values.size, dtype=bool)
    nm = np.zeros(inner.size, dtype=bool)
    for o in offsets:
        nm |= values[inner + o] > v
    nonmax[inner] = nm
    while True:
        grow = nm.copy()
        for o in offsets:
            grow |= nonmax[inner + o] & (values[inner + o] == v)
        if np.array_equal(grow, nm):
            return ~nonmax
        nm = grow
        nonmax[inner] = nm


def regional_maxima(values, offsets, use_numba=None):
    """Boolean flat mask of regional-maximum plateaus of a padded int32 image."""
    if use_numba is None:
        use_numba = HAVE_NUMBA
    values = np.ascontiguousarray(values, dtype=np.int32)
    fn = _regional_max_nb if use_numba else _regional_max_np
    return fn(values, offsets)


# ---------------------------------------------------------------------------
# level-by-level flooding


@njit
def _flood_nb(levels, labels, offsets):
    n = levels.size
    lab = labels.copy()
    stamp = np.zeros(n, np.int64)
    mark = np.zeros(n, np.int64)
    cand = np.empty(n, np.int64)
    big = np.iinfo(np.int32).max
    ring = 0
    for level in range(levels.max(), 0, -1):
        front = np.nonzero(lab > 0)[0]
        nf = front.size
        while nf > 0:
            ring += 1
            nc = 0
            for a in range(nf):
                v = front[a]
                for o in offsets:
                    u = v + o
                    if lab[u] == 0 and levels[u] >= level and mark[u] != ring:
                        mark[u] = ring
                        cand[nc] = u
                        nc += 1
            for c in range(nc):
                u = cand[c]
                best = big
                for o in offsets:
                    w = u + o
                    lw = lab[w]
                    if lw > 0 and stamp[w] != ring and lw < best:
                        best = lw
                lab[u] = best
                stamp[u] = ring
            front = cand[:nc].copy()
            nf = nc
    return lab


def _flood_np(levels, labels, offsets):
    lab = labels.copy()
    inner = np.flatnonzero(levels >= 0)
    big = np.iinfo(np.int32).max
    for level in range(int(levels.max()), 0, -1):
        elig = inner[levels[inner] >= level]
        while True:
            unl = elig[lab[elig] == 0]
            if unl.size == 0:
                break
            best = np.full(unl.size, big, dtype=np.int64)
            for o in offsets:
                nb = lab[unl + o]
                np.minimum(best, np.where(nb > 0, nb, big), out=best)
            hit = best < big
            if not hit.any():
                break
            lab[unl[hit]] = best[hit]
    return lab


def flood(levels, markers, offsets, use_numba=None):
    """Grow ``markers`` over voxels with ``levels >= 1``, highest level first.

    At each level L (descending) labels spread ring by ring through the
    unlabelled voxels whose level is at least L; a voxel reached in a ring takes
    the smallest label among neighbours labelled before that ring.
    """
    if use_numba is None:
        use_numba = HAVE_NUMBA
    levels = np.ascontiguousarray(levels, dtype=np.int32)
    markers = np.ascontiguousarray(markers, dtype=np.int32)
    fn = _flood_nb if use_numba else _flood_np
    return fn(levels, markers, offsets)
