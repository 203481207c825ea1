"""Deterministic kinematic tabletop world and a noisy entity detector.

The effector is a vertical disk (radius ``SimParams.effector_radius``) with a
parallel gripper.  Objects are upright cylinders resting on the table or on
each other.  Contact is quasi-static: an object touched by the effector (or by
another moving object) is displaced along the contact normal by the
penetration depth, with its yaw unchanged.
"""
from __future__ import annotations

import copy
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .trace import HAND, OBJECT, POINT, EntityRecord, TraceFrame


@dataclass(frozen=True)
class Gains:
    """Raw policy action times gain gives the commanded displacement."""

    xyz: float = 0.001
    rot: float = 0.02


@dataclass(frozen=True)
class SimParams:
    effector_radius: float = 0.02
    grasp_radius: float = 0.02
    grasp_vertical_tol: float = 0.015
    step_clip: float = 0.05  # m per axis per step
    yaw_clip: float = 0.3  # rad per step
    gap_open: float = 0.08
    gap_closed: float = 0.01
    z_min: float = 0.0
    z_max: float = 0.5


def rot_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class Effector:
    position: np.ndarray
    yaw: float = 0.0
    gripper_gap: float = 0.08


@dataclass
class ObjectState:
    id: str
    position: np.ndarray  # base center; z is the support height
    yaw: float = 0.0
    radius: float = 0.03
    height: float = 0.04
    solid: bool = True
    attached: bool = False
    # (offset in effector frame, yaw offset); meaningful only while attached
    attach_offset: tuple = field(default_factory=lambda: (np.zeros(3), 0.0))

    @property
    def top(self) -> float:
        return float(self.position[2] + self.height)


@dataclass
class WorldState:
    effector: Effector
    objects: list
    table_height: float = 0.0

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def obj(self, object_id: str) -> ObjectState:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    def attached(self) -> ObjectState | None:
        for o in self.objects:
            if o.attached:
                return o
        return None


@dataclass(frozen=True)
class Action:
    du: tuple  # raw [dx, dy, dz, dyaw]
    grip_close: bool = False


# --------------------------------------------------------------------------- scene loading


def world_from_scene(scene: dict) -> WorldState:
    """Build a world from a JSON scene description.

    ``{"effector": {"position", "yaw", "gripper_gap"}, "objects": [{"id",
    "position", "yaw", "radius", "height", "solid"}], "attached": id|null}``
    """
    e = scene["effector"]
    eff = Effector(np.array(e["position"], dtype=float), float(e.get("yaw", 0.0)),
                   float(e.get("gripper_gap", SimParams.gap_open)))
    objs = []
    for o in scene["objects"]:
        objs.append(ObjectState(
            id=o["id"], position=np.array(o["position"], dtype=float), yaw=float(o.get("yaw", 0.0)),
            radius=float(o["radius"]), height=float(o["height"]), solid=bool(o.get("solid", True))))
    objs.sort(key=lambda o: o.id)
    world = WorldState(eff, objs, float(scene.get("table_height", 0.0)))
    held = scene.get("attached")
    if held:
        attach(world, world.obj(held))
    return world


def attach(world: WorldState, o: ObjectState) -> None:
    eff = world.effector
    off = rot_z(-eff.yaw) @ (o.position - eff.position)
    o.attached = True
    o.attach_offset = (off, o.yaw - eff.yaw)


# --------------------------------------------------------------------------- dynamics


def _hdist(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def support_height(world: WorldState, o: ObjectState) -> float:
    z = world.table_height
    for other in world.objects:
        if other is o or not other.solid:
            continue
        if _hdist(other.position, o.position) < other.radius and other.top <= o.position[2] + 1e-9:
            z = max(z, other.top)
    return z


def _vertical_overlap(a: ObjectState, b: ObjectState) -> bool:
    return min(a.top, b.top) - max(a.position[2], b.position[2]) > 1e-9


def _push_out(mover_xy: np.ndarray, o: ObjectState, reach: float, fallback: np.ndarray) -> None:
    d = o.position[:2] - mover_xy
    n = np.linalg.norm(d)
    if n < 1e-12:
        n_vec = fallback[:2] / (np.linalg.norm(fallback[:2]) + 1e-300)
        if not np.all(np.isfinite(n_vec)) or np.linalg.norm(n_vec) < 0.5:
            n_vec = np.array([1.0, 0.0])
        o.position[:2] = mover_xy + reach * n_vec
    else:
        o.position[:2] = mover_xy + reach * d / n


def resolve_contacts(world: WorldState, moved: set, passes: int = 50) -> None:
    """Separate interpenetrating solid footprints; movers push the others."""
    objs = [o for o in world.objects if o.solid]
    for _ in range(passes):
        changed = False
        for i in range(len(objs)):
            for j in range(i + 1, len(objs)):
                a, b = objs[i], objs[j]
                if not _vertical_overlap(a, b):
                    continue
                reach = a.radius + b.radius
                if _hdist(a.position, b.position) >= reach - 1e-12:
                    continue
                if a.attached and b.attached:
                    continue
                a_drives = a.attached or (a.id in moved and b.id not in moved and not b.attached)
                b_drives = b.attached or (b.id in moved and a.id not in moved and not a.attached)
                if a_drives:
                    _push_out(a.position[:2], b, reach, b.position - a.position)
                    moved.add(b.id)
                elif b_drives:
                    _push_out(b.position[:2], a, reach, a.position - b.position)
                    moved.add(a.id)
                else:
                    mid = 0.5 * (a.position[:2] + b.position[:2])
                    d = b.position[:2] - a.position[:2]
                    n = np.linalg.norm(d)
                    u = d / n if n > 1e-12 else np.array([1.0, 0.0])
                    a.position[:2] = mid - 0.5 * reach * u
                    b.position[:2] = mid + 0.5 * reach * u
                    moved.update((a.id, b.id))
                changed = True
        if not changed:
            return


def step(state: WorldState, action: Action, gains: Gains = Gains(), params: SimParams = SimParams()) -> WorldState:
    """Advance the world by one control step; returns a new state."""
    s = state.copy()
    eff = s.effector
    prev = eff.position.copy()
    du = np.asarray(action.du, dtype=float)

    held = s.attached()
    if action.grip_close:
        was_open = eff.gripper_gap > params.gap_closed + 1e-12
        eff.gripper_gap = params.gap_closed
        if was_open and held is None:
            cands = [o for o in s.objects
                     if _hdist(o.position, eff.position) < params.grasp_radius
                     and abs(eff.position[2] - (o.position[2] + 0.5 * o.height)) <= params.grasp_vertical_tol]
            if cands:
                attach(s, min(cands, key=lambda o: (_hdist(o.position, eff.position), o.id)))
    else:
        eff.gripper_gap = params.gap_open
        if held is not None:
            held.attached = False
            held.position[2] = support_height(s, held)

    d = np.clip(du[:3] * gains.xyz, -params.step_clip, params.step_clip)
    dyaw = float(np.clip(du[3] * gains.rot, -params.yaw_clip, params.yaw_clip))
    eff.position = eff.position + d
    eff.position[2] = min(max(eff.position[2], params.z_min), params.z_max)
    eff.yaw = eff.yaw + dyaw

    moved = set()
    R = rot_z(eff.yaw)
    for o in s.objects:
        if o.attached:
            off, yaw_off = o.attach_offset
            o.position = eff.position + R @ off
            o.yaw = eff.yaw + yaw_off
            moved.add(o.id)

    for o in s.objects:
        if o.attached or not o.solid:
            continue
        lo, hi = o.position[2], o.top
        if not (lo <= prev[2] <= hi and lo <= eff.position[2] <= hi):
            continue
        reach = params.effector_radius + o.radius
        # an effector that starts inside the footprint straddles the object and does not push it
        if _hdist(prev, o.position) < reach - 1e-9:
            continue
        if _hdist(eff.position, o.position) < reach:
            _push_out(eff.position[:2], o, reach, eff.position - prev)
            moved.add(o.id)

    if moved:
        resolve_contacts(s, moved)
    return s


def footprint_gaps(world: WorldState) -> list:
    """Pairwise footprint clearance of vertically overlapping solid objects."""
    out = []
    objs = [o for o in world.objects if o.solid]
    for i in range(len(objs)):
        for j in range(i + 1, len(objs)):
            if _vertical_overlap(objs[i], objs[j]):
                out.append(_hdist(objs[i].position, objs[j].position) - objs[i].radius - objs[j].radius)
    return out


# --------------------------------------------------------------------------- detection


@dataclass(frozen=True)
class DetectorConfig:
    sigma: float = 0.002
    p_occlusion: float = 0.0
    points_per_object: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 <= self.p_occlusion < 1:
            raise ValueError("p_occlusion must be in [0, 1)")
        if self.points_per_object < 0:
            raise ValueError("points_per_object must be >= 0")


def _stream(seed: int, key: str) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(key.encode("utf-8"))])


def sample_body_points(world: WorldState, k: int, seed: int = 0) -> dict:
    """Fixed body-frame points per object, uniform over the top face of its footprint."""
    out = {}
    for o in world.objects:
        rng = _stream(seed, "points/" + o.id)
        r = o.radius * np.sqrt(rng.random(k))
        th = 2 * np.pi * rng.random(k)
        out[o.id] = np.column_stack([r * np.cos(th), r * np.sin(th), np.full(k, o.height)])
    return out


def point_id(object_id: str, k: int) -> str:
    return f"{object_id}/p{k}"


class Detector:
    """Simulated entity detector with per-entity noise and occlusion hold.

    Each entity draws its noise from its own seeded stream, so adding or
    removing other entities never changes an entity's readings.
    """

    def __init__(self, cfg: DetectorConfig, body_points: dict, hand_id: str = "hand"):
        self.cfg = cfg
        self.body_points = body_points
        self.hand_id = hand_id
        self._streams: dict = {}
        self._last: dict = {}

    def _read(self, entity_id: str, truth: np.ndarray):
        rng = self._streams.get(entity_id)
        if rng is None:
            rng = self._streams[entity_id] = _stream(self.cfg.seed, entity_id)
        noise = rng.standard_normal(3) * self.cfg.sigma
        u = rng.random()
        last = self._last.get(entity_id)
        if last is not None and u < self.cfg.p_occlusion:
            return last, True
        pos = tuple(float(v) for v in truth + noise)
        self._last[entity_id] = pos
        return pos, False

    def detect(self, state: WorldState, t: int) -> TraceFrame:
        ents = []
        eff = state.effector
        pos, occ = self._read(self.hand_id, eff.position)
        ents.append(EntityRecord(self.hand_id, HAND, pos, finger_gap=float(eff.gripper_gap), occluded=occ,
                                 yaw=float(eff.yaw)))
        for o in state.objects:
            pos, occ = self._read(o.id, o.position)
            ents.append(EntityRecord(o.id, OBJECT, pos, occluded=occ))
            pts = self.body_points.get(o.id)
            if pts is None:
                continue
            world_pts = o.position + pts @ rot_z(o.yaw).T
            for k, p in enumerate(world_pts):
                pid = point_id(o.id, k)
                pos, occ = self._read(pid, p)
                ents.append(EntityRecord(pid, POINT, pos, parent=o.id, occluded=occ))
        return TraceFrame(t, tuple(ents))


def perturb_world(world: WorldState, diameter: float, rng: np.random.Generator, params: SimParams = SimParams(),
                  max_tries: int = 100) -> WorldState:
    """Independently displace every free object (in xy) and the effector (in 3D)
    uniformly within a ball of the given diameter.  Held objects move with the
    effector.  Resamples until no footprints interpenetrate."""
    radius = 0.5 * diameter
    for _ in range(max_tries):
        w = world.copy()
        if radius > 0:
            d = _uniform_ball(rng, 3) * radius
            w.effector.position = w.effector.position + d
            w.effector.position[2] = min(max(w.effector.position[2], params.z_min + 0.005), params.z_max)
            for o in w.objects:
                if o.attached:
                    off, _ = o.attach_offset
                    o.position = w.effector.position + rot_z(w.effector.yaw) @ off
                else:
                    o.position[:2] = o.position[:2] + _uniform_ball(rng, 2) * radius
        if all(g >= 0 for g in footprint_gaps(w)) and not _effector_inside(w, params):
            return w
    raise RuntimeError("could not sample a non-penetrating perturbation")


def _effector_inside(w: WorldState, params: SimParams) -> bool:
    e = w.effector.position
    for o in w.objects:
        if o.attached or not o.solid:
            continue
        if o.position[2] <= e[2] <= o.top and _hdist(e, o.position) < params.effector_radius + o.radius:
            return True
    return False


def _uniform_ball(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    return v * rng.random() ** (1.0 / dim)


def with_sigma(cfg: DetectorConfig, sigma: float) -> DetectorConfig:
    return replace(cfg, sigma=sigma)
