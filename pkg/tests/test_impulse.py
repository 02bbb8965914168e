import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxfrac.impulse import (ImpulseRaw, SirenParams, accumulate_impulses, assemble_latent, init_siren,
                             normalize_impulse, sample_normal_code, siren_encode, siren_jacobian)

X = (1.0, 0.0, 0.0)


def test_impulse_validation():
    with pytest.raises(ValueError):
        ImpulseRaw((0, 0, 0), (1, 1, 0), 1.0)
    with pytest.raises(ValueError):
        ImpulseRaw((0, 0, 0), X, -1.0)
    imp = ImpulseRaw((0, 0.5, 0), (0, 0, 1), 3.0)
    assert ImpulseRaw.from_json(imp.to_json()) == imp
    with pytest.raises(ValueError, match="malformed"):
        ImpulseRaw.from_json({"p": [0, 0, 0]})


def test_accumulate_trigger():
    a = ImpulseRaw((0.1, 0, 0), X, 3.0)
    b = ImpulseRaw((0.2, 0, 0), (0, 1, 0), 7.0)
    out = accumulate_impulses([a, b], 10.0, 0.004)
    assert out.I == 10.0
    assert out.p == b.p and out.d == b.d


def test_accumulate_below_threshold():
    a = ImpulseRaw((0, 0, 0), X, 4.0)
    b = ImpulseRaw((0, 0, 0), X, 5.0)
    assert accumulate_impulses([a, b], 10.0, 0.004) is None
    assert accumulate_impulses([], 10.0, 0.004) is None


def test_accumulate_single_and_rescaled():
    c = ImpulseRaw((0, 0, 0), X, 12.0)
    assert accumulate_impulses([c], 10.0, 0.004) == c
    # 6 N*s over 2 ms is 12 per 4 ms
    assert accumulate_impulses([ImpulseRaw((0, 0, 0), X, 6.0)], 10.0, 0.002) is not None
    assert accumulate_impulses([ImpulseRaw((0, 0, 0), X, 12.0)], 10.0, 0.008) is None


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 20), min_size=1, max_size=6), st.randoms(use_true_random=False))
def test_accumulate_permutation_invariant(mags, rnd):
    rng = np.random.default_rng(len(mags))
    cs = []
    for m in mags:
        d = rng.standard_normal(3)
        cs.append(ImpulseRaw(rng.uniform(-1, 1, 3), d / np.linalg.norm(d), m))
    shuffled = cs[:]
    rnd.shuffle(shuffled)
    assert accumulate_impulses(cs, 10.0) == accumulate_impulses(shuffled, 10.0)


def test_normalize_examples():
    v = normalize_impulse(ImpulseRaw((0, 0, 0), X, 50.0), 100.0)
    assert v == pytest.approx([0, 0, 0, 1, 0, 0, 0])
    assert normalize_impulse(ImpulseRaw((0, 0, 0), X, 100.0), 100.0)[6] == 1.0
    assert normalize_impulse(ImpulseRaw((0, 0, 0), X, 0.0), 100.0)[6] == -1.0
    assert normalize_impulse(ImpulseRaw((0, 0, 0), X, 200.0), 100.0)[6] == 1.0
    with pytest.raises(ValueError):
        normalize_impulse(ImpulseRaw((0, 0, 0), X, 1.0), 0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 300), st.floats(0, 300))
def test_normalize_monotone_in_range(a, b):
    va = normalize_impulse(ImpulseRaw((0, 0, 0), X, a))
    vb = normalize_impulse(ImpulseRaw((0, 0, 0), X, b))
    assert (va[6] <= vb[6]) == (a <= b) or va[6] == vb[6]
    assert np.all(np.abs(va) <= 1)


def test_siren_examples():
    p = SirenParams(np.zeros((128, 7)), np.zeros(128))
    assert not siren_encode(np.ones(7), p).any()
    one = SirenParams(np.array([[0.1]]), np.zeros(1), 30.0)
    assert siren_encode(np.array([1.0]), one)[0] == pytest.approx(np.sin(3.0), abs=1e-5)
    p = init_siren(np.random.default_rng(0))
    assert p.W.shape == (128, 7) and np.abs(p.W).max() <= 1 / 7
    assert np.abs(siren_encode(np.random.default_rng(1).uniform(-1, 1, 7), p)).max() <= 1


def test_siren_jacobian_fd():
    rng = np.random.default_rng(3)
    p = init_siren(rng, dtype=np.float64)
    v = rng.uniform(-1, 1, 7)
    h = 1e-5
    fd = np.stack([(siren_encode(v + h * e, p) - siren_encode(v - h * e, p)) / (2 * h) for e in np.eye(7)], 1)
    J = siren_jacobian(v, p)
    assert np.linalg.norm(J - fd) / np.linalg.norm(J) < 1e-6


def test_normal_code():
    assert np.array_equal(sample_normal_code(5), sample_normal_code(5))
    z = np.stack([sample_normal_code(s, 8) for s in range(10000)])
    assert np.all(np.abs(z.mean(0)) < 0.05)
    assert np.all((z.var(0) > 0.9) & (z.var(0) < 1.1))
    with pytest.raises(ValueError):
        sample_normal_code(0, 0)


def test_assemble_latent():
    v = np.arange(128.0)
    out = assemble_latent(v, np.zeros(8), dz=8)
    assert out.shape == (136,)
    assert np.array_equal(out[:128], v)
    assert not out[128:].any()
    with pytest.raises(ValueError):
        assemble_latent(v[:10], np.zeros(8))
    with pytest.raises(ValueError):
        assemble_latent(v, np.zeros(4), dz=8)
