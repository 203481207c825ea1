"""Random scene generators shared by unit and acceptance tests."""
from __future__ import annotations

import numpy as np

from veg.trace import EntityRecord, EntityTrace, TraceFrame, TraceMeta, make_trace


def random_frame(rng, n_obj=3, n_pts=4, hand=True, t=0, prefix="o") -> TraceFrame:
    ents = []
    if hand:
        ents.append(EntityRecord("hand", "hand", tuple(rng.uniform(-1, 1, 3)), finger_gap=0.05))
    for i in range(n_obj):
        oid = f"{prefix}{i}"
        ents.append(EntityRecord(oid, "object", tuple(rng.uniform(-1, 1, 3))))
        for k in range(n_pts):
            ents.append(EntityRecord(f"{oid}/p{k}", "point", tuple(rng.uniform(-1, 1, 3)), parent=oid))
    return TraceFrame(t, tuple(ents))


def moved(frame: TraceFrame, fn) -> TraceFrame:
    """Copy of ``frame`` with every position mapped through ``fn``."""
    return TraceFrame(frame.t, tuple(
        EntityRecord(e.id, e.kind, tuple(float(v) for v in fn(np.asarray(e.position))), e.parent, e.finger_gap)
        for e in frame.entities))


def with_clutter(frame: TraceFrame, rng, n=3) -> TraceFrame:
    extra = []
    for i in range(n):
        extra.append(EntityRecord(f"clutter{i}", "object", tuple(rng.uniform(-1, 1, 3))))
        extra.append(EntityRecord(f"clutter{i}/p0", "point", tuple(rng.uniform(-1, 1, 3)), parent=f"clutter{i}"))
    return TraceFrame(frame.t, frame.entities + tuple(extra))


def static_trace(positions: dict, hand=(0.0, 0.0, 0.0), T=5) -> EntityTrace:
    """Trace whose objects follow ``positions[id]`` (a (T,3) array or a fixed point)."""
    frames = []
    for t in range(T):
        ents = [EntityRecord("hand", "hand", tuple(hand), finger_gap=0.08)]
        for oid, p in sorted(positions.items()):
            p = np.asarray(p, dtype=float)
            ents.append(EntityRecord(oid, "object", tuple(p[t] if p.ndim == 2 else p)))
        frames.append(TraceFrame(t, tuple(ents)))
    return make_trace(TraceMeta(T=T), frames)
