"""Training-pair generation: fire balls at a frozen target in zero gravity,
record the contact impulse and fracture the voxelized target with the oracle."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..grid import GridMeta, TriMesh, normalize_shape, shape_mesh, voxelize
from ..gssdf import encode_gssdf
from ..impulse import (DEFAULT_I_MAX, DEFAULT_THRESHOLD, REFERENCE_DT, accumulate_impulses,
                       normalize_impulse, sample_normal_code)
from ..training import Dataset
from .oracle import synthetic_fracture_oracle
from .physics import World, contact_impulse

log = logging.getLogger(__name__)

MAX_JITTER_DEG = 10.0


@dataclass
class SceneConfig:
    target: str = "sphere"
    resolution: int = 32
    dz: int = 8
    gravity: tuple = (0.0, 0.0, 0.0)
    spawn_radius: float = 3.0
    speed_range: tuple = (5.0, 60.0)
    ball_radius: float = 0.1
    ball_mass: float = 1.0
    restitution: float = 0.5
    frame_dt: float = REFERENCE_DT
    threshold: float = DEFAULT_THRESHOLD
    i_max: float = DEFAULT_I_MAX
    max_frames: int = 1000
    seed: int = 0
    # run-time scene only
    target_mass: float = 10.0
    frames: int = 100

    def __post_init__(self):
        self.gravity = tuple(float(g) for g in self.gravity)
        self.speed_range = tuple(float(s) for s in self.speed_range)
        if len(self.gravity) != 3:
            raise ValueError("gravity must be a 3-vector")
        if not self.frame_dt > 0:
            raise ValueError("frame_dt must be positive")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if not self.i_max > 0:
            raise ValueError("i_max must be positive")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ValueError("speed_range must satisfy 0 < lo <= hi")
        if min(self.spawn_radius, self.ball_radius, self.ball_mass, self.target_mass) <= 0:
            raise ValueError("radii and masses must be positive")
        if self.max_frames < 1 or self.frames < 0:
            raise ValueError("frame counts must be positive")
        if self.dz < 1:
            raise ValueError("dz must be >= 1")

    @classmethod
    def from_json(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scene config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self):
        d = asdict(self)
        d["gravity"] = list(self.gravity)
        d["speed_range"] = list(self.speed_range)
        return d


def random_shot(rng, cfg: SceneConfig):
    """Spawn point on the spawn sphere and a velocity aimed at the origin with
    at most ``MAX_JITTER_DEG`` of angular error."""
    u = rng.standard_normal(3)
    u /= np.linalg.norm(u)
    pos = cfg.spawn_radius * u
    aim = -u
    # rotate aim by a random angle around a random perpendicular axis
    axis = np.cross(aim, rng.standard_normal(3))
    axis /= np.linalg.norm(axis)
    ang = np.deg2rad(MAX_JITTER_DEG) * np.sqrt(rng.uniform())
    aim = aim * np.cos(ang) + np.cross(axis, aim) * np.sin(ang)
    speed = rng.uniform(*cfg.speed_range)
    return pos, speed * aim


def shoot(target: TriMesh, frame, cfg: SceneConfig, pos, vel, static_target=True):
    """Simulate one ball against the target until a frame with contact.

    Returns (ImpulseRaw or None, list of ball speeds per frame before contact).
    """
    world = World(cfg.frame_dt, cfg.gravity, cfg.restitution)
    tb = world.add(kind="mesh", mass=np.inf if static_target else cfg.target_mass, position=np.zeros(3),
                   velocity=np.zeros(3), mesh=target, breakable=True, shape_frame=frame)
    ball = world.add(kind="sphere", mass=cfg.ball_mass, position=pos, velocity=vel, radius=cfg.ball_radius)
    speeds = []
    for _ in range(cfg.max_frames):
        speeds.append(float(np.linalg.norm(ball.velocity)))
        contacts = [contact_impulse(tb, c) for c in world.step() if c.body == tb.id]
        if contacts:
            # every hit is recorded, whatever its strength
            return accumulate_impulses(contacts, threshold=0.0, frame_dt=cfg.frame_dt), speeds
    return None, speeds


def target_mesh(cfg: SceneConfig):
    return shape_mesh(cfg.target)


def generate_dataset(target: TriMesh, n_samples, cfg: SceneConfig, name=None) -> Dataset:
    if not target.is_watertight():
        raise ValueError("open surface")
    meta = GridMeta(cfg.resolution)
    normed, frame = normalize_shape(target)
    occ = voxelize(normed, meta)
    if occ.count == 0:
        raise ValueError("target voxelizes to nothing at this resolution")
    v, f, z, raw = [], [], [], []
    children = np.random.SeedSequence(cfg.seed).spawn(n_samples)
    for i, ss in enumerate(children):
        shot_seed, oracle_seed, code_seed = ss.generate_state(3)
        pos, vel = random_shot(np.random.default_rng(shot_seed), cfg)
        imp, _ = shoot(target, frame, cfg, pos, vel)
        if imp is None:
            log.warning("sample %d: no contact within %d frames, skipped", i, cfg.max_frames)
            continue
        parts = synthetic_fracture_oracle(occ, imp, int(oracle_seed), cfg.i_max)
        f.append(encode_gssdf(parts).values)
        v.append(normalize_impulse(imp, cfg.i_max))
        z.append(sample_normal_code(int(code_seed), cfg.dz))
        raw.append(imp)
    if not v:
        raise RuntimeError("no sample produced a contact")
    return Dataset(meta, cfg.i_max, np.array(v), np.stack(f), np.array(z), raw,
                   name or cfg.target, frame.as_list())


def load_scene(path):
    with open(path) as fh:
        return SceneConfig.from_json(json.load(fh))
