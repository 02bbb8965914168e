"""Impulse conditioning: raw contact impulse -> normalized 7-vector -> sine
encoding -> concatenation with the per-pattern normal code."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LATENT_DIM = 128
IMPULSE_DIM = 7
REFERENCE_DT = 0.004  # the fracture threshold is quoted per 4 ms
DEFAULT_THRESHOLD = 10.0
DEFAULT_I_MAX = 100.0
DEFAULT_OMEGA0 = 30.0


@dataclass(frozen=True)
class ImpulseRaw:
    """Single contact impulse: position ``p`` (normalized shape frame), unit
    direction ``d`` of the impulse acting on the shape, magnitude ``I`` in N*s."""

    p: tuple
    d: tuple
    I: float

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        d = np.asarray(self.d, dtype=np.float64)
        if len(p) != 3 or d.shape != (3,):
            raise ValueError("p and d must be 3-vectors")
        if abs(np.linalg.norm(d) - 1.0) > 1e-5:
            raise ValueError(f"impulse direction must be unit length, got |d|={np.linalg.norm(d):.6g}")
        if not self.I >= 0:
            raise ValueError("impulse magnitude must be non-negative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "d", tuple(float(x) for x in d))
        object.__setattr__(self, "I", float(self.I))

    def to_json(self):
        return {"p": list(self.p), "d": list(self.d), "I": self.I}

    @classmethod
    def from_json(cls, rec):
        try:
            return cls(rec["p"], rec["d"], rec["I"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed impulse record: {exc}") from exc

    def as_vector(self):
        return np.array([*self.p, *self.d, self.I])


def accumulate_impulses(contacts, threshold=DEFAULT_THRESHOLD, frame_dt=REFERENCE_DT):
    """Reduce one frame's contacts to a single triggering impulse, or ``None``.

    The summed magnitude is rescaled to the 4 ms reference window and compared
    against ``threshold``; on trigger, the strongest contact is returned carrying
    the cumulative magnitude.
    """
    if not frame_dt > 0:
        raise ValueError("frame_dt must be positive")
    contacts = list(contacts)
    if not contacts:
        return None
    total = math.fsum(c.I for c in contacts)  # exact, so contact order cannot matter
    if total * (REFERENCE_DT / frame_dt) < threshold:
        return None
    # ties on I resolved on (p, d) so the result ignores contact order
    top = max(contacts, key=lambda c: (c.I, c.p, c.d))
    return ImpulseRaw(top.p, top.d, total)


def normalize_impulse(raw: ImpulseRaw, i_max=DEFAULT_I_MAX):
    if not i_max > 0:
        raise ValueError("i_max must be positive")
    v = np.empty(IMPULSE_DIM, dtype=np.float64)
    v[:3] = np.clip(raw.p, -1.0, 1.0)
    v[3:6] = raw.d
    v[6] = np.clip(2.0 * raw.I / i_max - 1.0, -1.0, 1.0)
    return v


@dataclass
class SirenParams:
    W: np.ndarray
    b: np.ndarray
    omega0: float = DEFAULT_OMEGA0


def init_siren(rng, n_out=LATENT_DIM, n_in=IMPULSE_DIM, omega0=DEFAULT_OMEGA0, dtype=np.float32):
    bound = 1.0 / n_in
    W = rng.uniform(-bound, bound, size=(n_out, n_in)).astype(dtype)
    b = rng.uniform(-bound, bound, size=n_out).astype(dtype)
    return SirenParams(W, b, float(omega0))


def siren_encode(v, params: SirenParams):
    v = np.asarray(v)
    return np.sin(params.omega0 * (params.W @ v + params.b))


def siren_jacobian(v, params: SirenParams):
    """d(siren_encode)/dv, shape (n_out, n_in)."""
    pre = params.omega0 * (params.W @ np.asarray(v) + params.b)
    return params.omega0 * np.cos(pre)[:, None] * params.W


def sample_normal_code(seed, dz=8, dtype=np.float32):
    if dz < 1:
        raise ValueError("dz must be >= 1")
    return np.random.default_rng(seed).standard_normal(dz).astype(dtype)


def assemble_latent(v_latent, z, latent_dim=LATENT_DIM, dz=None):
    v_latent = np.asarray(v_latent)
    z = np.asarray(z)
    if v_latent.shape != (latent_dim,):
        raise ValueError(f"latent code must have {latent_dim} entries, got {v_latent.shape}")
    if z.ndim != 1 or (dz is not None and z.shape[0] != dz):
        raise ValueError(f"normal code must have {dz} entries, got {z.shape}")
    return np.concatenate([v_latent, z])
