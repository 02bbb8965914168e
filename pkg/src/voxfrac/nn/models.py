"""Sine encoder, condition-to-voxel generator and voxel critic."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..impulse import DEFAULT_OMEGA0, IMPULSE_DIM, LATENT_DIM, SirenParams
from .autograd import Tensor, concat, leaky_relu, linear, mul, relu, reshape, sin, tanh
from .conv import conv3d, conv_transpose3d

N_LAYERS = 5
BASE = 4  # spatial size of the projected feature block
LEAK = 0.2


@dataclass(frozen=True)
class ModelConfig:
    resolution: int = 32
    stages: int = 3
    c0: int = 64
    dz: int = 8
    omega0: float = DEFAULT_OMEGA0

    def __post_init__(self):
        if not 1 <= self.stages <= N_LAYERS:
            raise ValueError(f"stages must be in 1..{N_LAYERS}")
        if self.resolution != BASE * 2 ** self.stages:
            raise ValueError(f"resolution {self.resolution} needs stages={stages_for(self.resolution)}, "
                             f"got {self.stages}")
        if self.c0 < 16 or self.c0 % 16:
            raise ValueError("c0 must be a positive multiple of 16")
        if self.dz < 1:
            raise ValueError("dz must be >= 1")

    @classmethod
    def for_resolution(cls, resolution, **kw):
        return cls(resolution=resolution, stages=stages_for(resolution), **kw)

    @property
    def cond_dim(self):
        return LATENT_DIM + self.dz

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        unknown = set(d) - {"resolution", "stages", "c0", "dz", "omega0"}
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def stages_for(resolution):
    s = math.log2(resolution / BASE)
    if s != int(s) or not 1 <= s <= N_LAYERS:
        raise ValueError(f"resolution must be 4 * 2**k with k in 1..5, got {resolution}")
    return int(s)


def _layer_geometry(stages):
    """(kernel, stride, padding) of the five generator layers.

    Upsampling layers come first; the size-preserving ones refine at full
    resolution, where they add far more fitting capacity than at 4^3.
    """
    return [(4, 2, 1)] * stages + [(3, 1, 1)] * (N_LAYERS - stages)


class Module:
    """Ordered bag of named parameter tensors."""

    def __init__(self):
        self.params = {}

    def _param(self, name, data):
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state(self, prefix):
        return {f"{prefix}.{k}": v.data for k, v in self.params.items()}

    def load_state(self, prefix, tensors):
        for k, p in self.params.items():
            arr = tensors[f"{prefix}.{k}"]
            if arr.shape != p.shape:
                raise ValueError(f"{prefix}.{k}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype).copy()


class SineEncoder(Module):
    def __init__(self, rng, omega0=DEFAULT_OMEGA0, dtype=np.float32):
        super().__init__()
        self.omega0 = float(omega0)
        bound = 1.0 / IMPULSE_DIM
        self.W = self._param("W", rng.uniform(-bound, bound, (LATENT_DIM, IMPULSE_DIM)).astype(dtype))
        self.b = self._param("b", rng.uniform(-bound, bound, LATENT_DIM).astype(dtype))

    def __call__(self, v):
        """v: (batch, 7) tensor -> (batch, 128)."""
        return sin(mul(linear(v, self.W, self.b), self.omega0))

    def as_params(self):
        return SirenParams(self.W.data, self.b.data, self.omega0)


class Generator(Module):
    def __init__(self, cfg: ModelConfig, rng, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        c0 = cfg.c0
        self.channels = [c0, c0 // 2, c0 // 4, c0 // 8, c0 // 16, 1]
        self.geometry = _layer_geometry(cfg.stages)
        fan = cfg.cond_dim
        self._param("proj.W", rng.normal(0, math.sqrt(2.0 / fan), (c0 * BASE ** 3, fan)).astype(dtype))
        self._param("proj.b", np.zeros(c0 * BASE ** 3, dtype))
        for i, (k, s, _) in enumerate(self.geometry):
            cin, cout = self.channels[i], self.channels[i + 1]
            gain = 2.0 if i < N_LAYERS - 1 else 1.0
            std = math.sqrt(gain / (cin * (k / s) ** 3))
            self._param(f"up{i}.W", rng.normal(0, std, (cin, cout, k, k, k)).astype(dtype))
            self._param(f"up{i}.b", np.zeros(cout, dtype))

    def __call__(self, cond):
        """cond: (batch, 128 + dz) -> (batch, 1, R, R, R) in (-1, 1)."""
        if cond.shape[-1] != self.cfg.cond_dim:
            raise ValueError(f"condition has {cond.shape[-1]} entries, model expects {self.cfg.cond_dim}")
        p = self.params
        h = relu(linear(cond, p["proj.W"], p["proj.b"]))
        h = reshape(h, (cond.shape[0], self.cfg.c0, BASE, BASE, BASE))
        for i, (k, s, pad) in enumerate(self.geometry):
            h = conv_transpose3d(h, p[f"up{i}.W"], p[f"up{i}.b"], stride=s, padding=pad)
            h = relu(h) if i < N_LAYERS - 1 else tanh(h)
        return h


class Critic(Module):
    def __init__(self, cfg: ModelConfig, rng, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        c0 = cfg.c0
        self.channels = [1, c0 // 16, c0 // 8, c0 // 4, c0 // 2, c0]
        self.geometry = _layer_geometry(cfg.stages)[::-1]
        for i, (k, _, _) in enumerate(self.geometry):
            cin, cout = self.channels[i], self.channels[i + 1]
            self._param(f"down{i}.W", rng.normal(0, 0.02, (cout, cin, k, k, k)).astype(dtype))
            self._param(f"down{i}.b", np.zeros(cout, dtype))
        self._param("out.W", rng.normal(0, 0.02, (1, c0 * BASE ** 3)).astype(dtype))
        self._param("out.b", np.zeros(1, dtype))

    def __call__(self, field):
        """field: (batch, 1, R, R, R) -> (batch, 1) scores."""
        r = self.cfg.resolution
        if field.shape[1:] != (1, r, r, r):
            raise ValueError(f"critic expects (batch, 1, {r}, {r}, {r}), got {field.shape}")
        p = self.params
        h = field
        for i, (k, s, pad) in enumerate(self.geometry):
            h = leaky_relu(conv3d(h, p[f"down{i}.W"], p[f"down{i}.b"], stride=s, padding=pad), LEAK)
        h = reshape(h, (field.shape[0], -1))
        return linear(h, p["out.W"], p["out.b"])

    def clip_(self, c):
        for t in self.params.values():
            np.clip(t.data, -c, c, out=t.data)

    def max_abs_weight(self):
        return max(float(np.abs(t.data).max()) for t in self.params.values())


def condition(v_latent, z):
    """Concatenate (batch, 128) latent codes with (batch, dz) normal codes."""
    return concat([v_latent, z], axis=-1)
