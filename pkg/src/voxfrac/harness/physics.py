"""A very small rigid-body world: spheres against triangle meshes.

Bodies translate only (no rotation). Integration is semi-implicit Euler and a
frame is split into substeps so no sphere travels more than half its radius
per substep. Contacts are resolved with a single restitution impulse along
the normal from the mesh's closest point to the sphere centre.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..grid import Similarity, TriMesh
from ..impulse import ImpulseRaw

MAX_SUBSTEPS = 4096


@dataclass
class RigidBody:
    id: int
    kind: str  # "sphere" or "mesh"
    mass: float  # inf for static bodies
    position: np.ndarray
    velocity: np.ndarray
    radius: float = 0.0
    mesh: TriMesh = None  # local coordinates, world = local + position
    breakable: bool = False
    shape_frame: Similarity = None  # local -> normalized shape frame
    orientation: tuple = (1.0, 0.0, 0.0, 0.0)  # fixed; bodies do not rotate
    label: int = 0

    def __post_init__(self):
        if self.kind not in ("sphere", "mesh"):
            raise ValueError(f"unknown body kind {self.kind!r}")
        if not self.mass > 0:
            raise ValueError("body mass must be positive")
        self.position = np.asarray(self.position, dtype=np.float64).copy()
        self.velocity = np.asarray(self.velocity, dtype=np.float64).copy()
        if self.kind == "sphere" and not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        if self.kind == "mesh":
            if self.mesh is None or self.mesh.is_empty:
                raise ValueError("mesh body needs a non-empty mesh")
            self._lo, self._hi = self.mesh.bounds()
        if self.breakable and self.shape_frame is None:
            raise ValueError("breakable bodies need a shape frame")

    @property
    def static(self):
        return math.isinf(self.mass)

    @property
    def inv_mass(self):
        return 0.0 if self.static else 1.0 / self.mass

    @property
    def momentum(self):
        return self.mass * self.velocity

    def kinetic_energy(self):
        return 0.5 * self.mass * float(self.velocity @ self.velocity)

    def world_bounds(self):
        if self.kind == "sphere":
            return self.position - self.radius, self.position + self.radius
        return self._lo + self.position, self._hi + self.position

    def summary(self):
        return {"id": self.id, "kind": self.kind, "mass": None if self.static else self.mass,
                "position": [float(x) for x in self.position],
                "velocity": [float(x) for x in self.velocity], "breakable": self.breakable}


def closest_points_on_triangles(p, a, b, c):
    """Closest point to ``p`` on each triangle (a[i], b[i], c[i]); (T, 3)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = (ab * ap).sum(1)
    d2 = (ac * ap).sum(1)
    bp = p - b
    d3 = (ab * bp).sum(1)
    d4 = (ac * bp).sum(1)
    cp = p - c
    d5 = (ab * cp).sum(1)
    d6 = (ac * cp).sum(1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    def put(mask, val):
        m = mask & ~done
        out[m] = val[m] if val.ndim == 2 else val
        done[:] |= m

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), a)
        put((d3 >= 0) & (d4 <= d3), b)
        put((d6 >= 0) & (d5 <= d6), c)
        t = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + t[:, None] * ab)
        t = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + t[:, None] * ac)
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + t[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v = (vb * denom)[:, None]
        w = (vc * denom)[:, None]
        put(np.ones(len(a), bool), a + v * ab + w * ac)
    return out


def closest_point_on_mesh(mesh: TriMesh, p):
    tri = mesh.vertices[mesh.triangles]
    q = closest_points_on_triangles(np.asarray(p, dtype=np.float64), tri[:, 0], tri[:, 1], tri[:, 2])
    d2 = ((q - p) ** 2).sum(1)
    i = int(np.argmin(d2))
    return q[i], math.sqrt(d2[i])


@dataclass
class Contact:
    body: int  # the mesh body
    other: int
    point: np.ndarray  # world
    normal: np.ndarray  # from the mesh towards the sphere
    impulse: float


@dataclass
class World:
    frame_dt: float = 0.004
    gravity: tuple = (0.0, 0.0, 0.0)
    restitution: float = 0.5
    bodies: dict = field(default_factory=dict)
    frame: int = 0
    next_id: int = 0

    def __post_init__(self):
        if not self.frame_dt > 0:
            raise ValueError("frame_dt must be positive")
        if not 0 <= self.restitution <= 1:
            raise ValueError("restitution must be in [0, 1]")

    def add(self, **kw):
        body = RigidBody(id=self.next_id, **kw)
        self.bodies[body.id] = body
        self.next_id += 1
        return body

    def remove(self, body_id):
        try:
            return self.bodies.pop(body_id)
        except KeyError:
            raise KeyError(f"unknown body id {body_id}") from None

    def get(self, body_id):
        try:
            return self.bodies[body_id]
        except KeyError:
            raise KeyError(f"unknown body id {body_id}") from None

    def total_mass(self, dynamic_only=True):
        return sum(b.mass for b in self.bodies.values() if not (dynamic_only and b.static))

    def total_momentum(self):
        return sum((b.momentum for b in self.bodies.values() if not b.static), np.zeros(3))

    def substeps(self):
        spheres = [b for b in self.bodies.values() if b.kind == "sphere"]
        if not spheres:
            return 1
        vmax = max(float(np.linalg.norm(b.velocity)) for b in self.bodies.values() if not b.static) \
            if any(not b.static for b in self.bodies.values()) else 0.0
        g = float(np.linalg.norm(self.gravity)) * self.frame_dt
        rmin = min(b.radius for b in spheres)
        # relative speed between two bodies is at most twice the fastest one
        n = math.ceil(2.0 * (vmax + g) * self.frame_dt / (0.5 * rmin))
        return int(min(max(n, 1), MAX_SUBSTEPS))

    def step(self):
        """Advance one frame; returns the contacts resolved during it."""
        n = self.substeps()
        h = self.frame_dt / n
        g = np.asarray(self.gravity, dtype=np.float64)
        contacts = []
        for _ in range(n):
            for b in self.bodies.values():
                if not b.static:
                    b.velocity = b.velocity + h * g
                    b.position = b.position + h * b.velocity
            contacts += self._collide()
        self.frame += 1
        return contacts

    def _collide(self):
        out = []
        spheres = [b for b in self.bodies.values() if b.kind == "sphere"]
        meshes = [b for b in self.bodies.values() if b.kind == "mesh"]
        for s in spheres:
            slo, shi = s.world_bounds()
            for m in meshes:
                mlo, mhi = m.world_bounds()
                if np.any(slo > mhi) or np.any(shi < mlo):
                    continue
                c = s.position - m.position
                q, dist = closest_point_on_mesh(m.mesh, c)
                if dist >= s.radius or dist == 0.0:
                    continue
                nrm = (c - q) / dist
                vn = float((s.velocity - m.velocity) @ nrm)
                w = s.inv_mass + m.inv_mass
                if w == 0.0:
                    continue
                # push the pair apart in proportion to inverse mass
                depth = s.radius - dist
                s.position = s.position + nrm * depth * s.inv_mass / w
                m.position = m.position - nrm * depth * m.inv_mass / w
                if vn >= 0.0:
                    continue
                j = -(1.0 + self.restitution) * vn / w
                s.velocity = s.velocity + j * s.inv_mass * nrm
                m.velocity = m.velocity - j * m.inv_mass * nrm
                out.append(Contact(m.id, s.id, q + m.position, nrm, j))
        return out


def contact_impulse(body: RigidBody, contact: Contact) -> ImpulseRaw:
    """The contact as seen by the mesh body, in its normalized shape frame."""
    local = contact.point - body.position
    p = body.shape_frame.apply(local)
    d = -contact.normal
    return ImpulseRaw(p, d / np.linalg.norm(d), contact.impulse)
