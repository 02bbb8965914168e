"""Run-time loop: step the world, and when a breakable body takes a strong
enough hit, predict its fracture and swap it for fragment bodies."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..grid import normalize_shape
from ..gssdf import extract_mask, extract_usdf
from ..impulse import ImpulseRaw, accumulate_impulses, normalize_impulse
from ..reconstruct import SourceState, reconstruct_fragments
from ..segmentation import WatershedConfig, filter_labels, watershed_segment
from ..training import NumericalError, predict
from .datagen import SceneConfig, random_shot
from .physics import World, contact_impulse

log = logging.getLogger(__name__)


@dataclass
class FractureResult:
    impulse: ImpulseRaw
    prediction: object = None
    labels: object = None
    bodies: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def fracture_pipeline(model, impulse: ImpulseRaw, i_max, src: SourceState, seed, frame=None,
                      ws: WatershedConfig = WatershedConfig()):
    """predict -> mask/usdf -> watershed -> filter -> mesh -> rigid attributes.

    ``frame`` maps the body's local coordinates to the normalized shape frame;
    fragment meshes come back in local coordinates.
    """
    t0 = time.perf_counter()
    field_ = predict(model, normalize_impulse(impulse, i_max), seed=seed)
    if not np.isfinite(field_.values).all():
        raise NumericalError("prediction contains non-finite values")
    t1 = time.perf_counter()
    labels = filter_labels(watershed_segment(extract_usdf(field_), ws), extract_mask(field_))
    bodies = []
    if labels.n_regions:
        bodies = reconstruct_fragments(labels, src, None if frame is None else frame.inverse())
    t2 = time.perf_counter()
    return FractureResult(impulse, field_, labels, bodies, {"pred": t1 - t0, "recon": t2 - t1})


def replace_with_fragments(world: World, body_id, fragments):
    body = world.get(body_id)
    if not body.breakable:
        raise ValueError(f"body {body_id} is not breakable")
    world.remove(body_id)
    ids = []
    for frag in fragments:
        b = world.add(kind="mesh", mass=frag.mass, position=body.position, velocity=frag.velocity,
                      mesh=frag.mesh, breakable=False, label=frag.label)
        ids.append(b.id)
    return ids


@dataclass
class FrameEvent:
    frame: int
    event: str  # "none", "contact", "fracture" or "fracture_failed"
    bodies: list
    detail: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    results: list = field(default_factory=list)  # FractureResult per triggered body

    def record(self):
        rec = {"frame": self.frame, "event": self.event, "bodies": self.bodies}
        if self.detail:
            rec["detail"] = self.detail
        return rec


def runtime_step(world: World, model, cfg: SceneConfig, seed=0):
    """Integrate one frame and handle at most one fracture per breakable body."""
    frame_no = world.frame
    contacts = world.step()
    event, detail, timings, results = ("contact" if contacts else "none"), {}, {}, []
    for bid in sorted({c.body for c in contacts}):
        body = world.bodies.get(bid)
        if body is None or not body.breakable:
            continue
        hits = [contact_impulse(body, c) for c in contacts if c.body == bid]
        trig = accumulate_impulses(hits, cfg.threshold, cfg.frame_dt)
        if trig is None:
            continue
        src = SourceState(body.mass, tuple(body.velocity))
        pred_seed = int(np.random.SeedSequence([seed, frame_no, bid]).generate_state(1)[0])
        res = fracture_pipeline(model, trig, cfg.i_max, src, pred_seed, body.shape_frame)
        timings = res.timings
        results.append(res)
        detail = {"body": bid, "impulse": trig.to_json(), "fragments": len(res.bodies),
                  "m_origin": src.m_origin, "v_origin": list(src.v_origin)}
        if not res.bodies:
            log.warning("frame %d: prediction for body %d left no fragments; body kept intact", frame_no, bid)
            event = "fracture_failed"
            continue
        detail["ids"] = replace_with_fragments(world, bid, res.bodies)
        detail["masses"] = [b.mass for b in res.bodies]
        event = "fracture"
    bodies = [world.bodies[k].summary() for k in sorted(world.bodies)]
    return FrameEvent(frame_no, event, bodies, detail, timings, results)


def build_scene(target, cfg: SceneConfig, seed=None):
    """Dynamic breakable target at the origin and one ball fired at it."""
    seed = cfg.seed if seed is None else seed
    world = World(cfg.frame_dt, cfg.gravity, cfg.restitution)
    _, frame = normalize_shape(target)
    world.add(kind="mesh", mass=cfg.target_mass, position=np.zeros(3), velocity=np.zeros(3),
              mesh=target, breakable=True, shape_frame=frame)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    pos, vel = random_shot(rng, cfg)
    # start the ball close so the hit lands within a short run
    gap = cfg.spawn_radius - 1.5 * float(np.abs(target.vertices).max())
    if gap > 0:
        pos = pos + vel / np.linalg.norm(vel) * gap
    world.add(kind="sphere", mass=cfg.ball_mass, position=pos, velocity=vel, radius=cfg.ball_radius)
    return world


def run_simulation(world: World, model, cfg: SceneConfig, frames=None, seed=0, log_fh=None):
    """Step ``frames`` frames and return their events, optionally logging JSONL."""
    frames = cfg.frames if frames is None else frames
    events = []
    for _ in range(frames):
        ev = runtime_step(world, model, cfg, seed)
        events.append(ev)
        if log_fh is not None:
            log_fh.write(json.dumps(ev.record(), sort_keys=True) + "\n")
    return events
