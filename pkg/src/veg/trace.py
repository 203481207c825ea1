"""Entity trajectories and their JSONL on-disk format.

A trace file is UTF-8, newline-delimited JSON.  The first line is the header
(``TraceMeta``), followed by one object per frame::

    {"T": 30, "dt": 0.4, "actor": "demonstrator", "task": "push-straight"}
    {"t": 0, "entities": [{"id": "hand", "kind": "hand", "position": [...], ...}, ...]}

Occluded entities already carry their last-known position; readers never have
to fill gaps.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import IO, Iterable, NamedTuple, Sequence, Union

import numpy as np

from .errors import InvalidMeta, TraceParseError, TraceValidationError

OBJECT = "object"
POINT = "point"
HAND = "hand"
KINDS = (OBJECT, POINT, HAND)
ACTORS = ("demonstrator", "imitator")

SIG_DIGITS = 9


@dataclass(frozen=True)
class EntityRecord:
    id: str
    kind: str
    position: tuple
    parent: str | None = None
    finger_gap: float | None = None
    occluded: bool = False
    # effector yaw (hand only); proprioceptive, carried alongside the detection
    yaw: float | None = None

    @property
    def xyz(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)


@dataclass(frozen=True)
class TraceFrame:
    t: int
    entities: tuple = field(default_factory=tuple)

    @cached_property
    def by_id(self) -> dict:
        return {e.id: e for e in self.entities}

    def __contains__(self, entity_id) -> bool:
        return entity_id in self.by_id

    def __getitem__(self, entity_id) -> EntityRecord:
        return self.by_id[entity_id]

    def ids(self, kind: str | None = None) -> list:
        return [e.id for e in self.entities if kind is None or e.kind == kind]

    def hand(self) -> EntityRecord | None:
        for e in self.entities:
            if e.kind == HAND:
                return e
        return None

    def points_of(self, parent: str) -> list:
        return sorted((e for e in self.entities if e.kind == POINT and e.parent == parent), key=lambda e: e.id)


@dataclass(frozen=True)
class TraceMeta:
    T: int
    dt: float = 0.4
    actor: str = "demonstrator"
    task: str = ""


class EntityTrace(NamedTuple):
    """A validated trace; unpacks as ``(meta, frames)``."""

    meta: TraceMeta
    frames: tuple

    @property
    def T(self) -> int:
        return len(self.frames)

    def ids(self, kind: str | None = None) -> list:
        seen = {}
        for fr in self.frames:
            for e in fr.entities:
                if kind is None or e.kind == kind:
                    seen.setdefault(e.id, None)
        return sorted(seen)

    def positions(self, entity_id: str) -> np.ndarray:
        """(T, 3) positions of one entity; NaN rows where it is absent."""
        out = np.full((len(self.frames), 3), np.nan)
        for i, fr in enumerate(self.frames):
            if entity_id in fr:
                out[i] = fr[entity_id].position
        return out

    def finger_gaps(self) -> np.ndarray | None:
        gaps = []
        for fr in self.frames:
            h = fr.hand()
            if h is None or h.finger_gap is None:
                return None
            gaps.append(h.finger_gap)
        return np.asarray(gaps)


# --------------------------------------------------------------------------- validation


def validate_meta(meta: TraceMeta) -> None:
    if not isinstance(meta.T, (int, np.integer)) or meta.T < 1:
        raise InvalidMeta(f"T must be an integer >= 1, got {meta.T!r}")
    if not (isinstance(meta.dt, (int, float)) and meta.dt > 0 and math.isfinite(meta.dt)):
        raise InvalidMeta(f"dt must be positive, got {meta.dt!r}")
    if meta.actor not in ACTORS:
        raise InvalidMeta(f"actor must be one of {ACTORS}, got {meta.actor!r}")


def validate_frames(meta: TraceMeta, frames: Sequence[TraceFrame]) -> None:
    if len(frames) != meta.T:
        raise TraceValidationError("length", f"header says T={meta.T} but {len(frames)} frames given")
    kinds: dict = {}
    parents: dict = {}
    prev_t = None
    for fr in frames:
        if prev_t is not None and fr.t <= prev_t:
            raise TraceValidationError("monotone_t", f"t={fr.t} follows t={prev_t}")
        prev_t = fr.t
        ids = set()
        for e in fr.entities:
            where = f"t={fr.t} id={e.id!r}"
            if not isinstance(e.id, str) or not e.id:
                raise TraceValidationError("id", f"t={fr.t}: entity id must be a non-empty string")
            if e.id in ids:
                raise TraceValidationError("unique_id", f"{where} appears twice")
            ids.add(e.id)
            if e.kind not in KINDS:
                raise TraceValidationError("kind", f"{where} has unknown kind {e.kind!r}")
            if len(e.position) != 3 or not all(math.isfinite(float(v)) for v in e.position):
                raise TraceValidationError("position", f"{where} position must be 3 finite numbers")
            if e.kind == POINT and not e.parent:
                raise TraceValidationError("point_parent", f"{where} is a point without a parent")
            if e.kind != POINT and e.parent is not None:
                raise TraceValidationError("point_parent", f"{where} is a {e.kind} with a parent")
            if e.finger_gap is not None:
                if e.kind != HAND:
                    raise TraceValidationError("finger_gap", f"{where} carries finger_gap but is not a hand")
                if not (e.finger_gap >= 0 and math.isfinite(e.finger_gap)):
                    raise TraceValidationError("finger_gap", f"{where} finger_gap must be >= 0")
            if kinds.setdefault(e.id, e.kind) != e.kind:
                raise TraceValidationError("kind_consistency", f"{where} changed kind from {kinds[e.id]!r}")
            if parents.setdefault(e.id, e.parent) != e.parent:
                raise TraceValidationError("parent_consistency", f"{where} changed parent")
        for e in fr.entities:
            if e.kind == POINT and e.parent in ids and fr[e.parent].kind != OBJECT:
                raise TraceValidationError("point_parent", f"t={fr.t} id={e.id!r}: parent is not an object")


# --------------------------------------------------------------------------- (de)serialization


def _num(v: float) -> float:
    return float(f"{float(v):.{SIG_DIGITS}g}")


def _record_to_json(e: EntityRecord) -> dict:
    d = {"id": e.id, "kind": e.kind, "position": [_num(v) for v in e.position]}
    if e.parent is not None:
        d["parent"] = e.parent
    if e.finger_gap is not None:
        d["finger_gap"] = _num(e.finger_gap)
    if e.yaw is not None:
        d["yaw"] = _num(e.yaw)
    d["occluded"] = bool(e.occluded)
    return d


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def encode_trace(meta: TraceMeta, frames: Sequence[TraceFrame]) -> bytes:
    validate_meta(meta)
    validate_frames(meta, frames)
    lines = [_dumps({"T": int(meta.T), "dt": _num(meta.dt), "actor": meta.actor, "task": meta.task})]
    for fr in frames:
        lines.append(_dumps({"t": int(fr.t), "entities": [_record_to_json(e) for e in fr.entities]}))
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_trace(meta: TraceMeta, frames: Sequence[TraceFrame], sink: Union[str, Path, IO]) -> int:
    """Write a trace as JSONL; returns the number of bytes written."""
    data = encode_trace(meta, frames)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    elif isinstance(sink, io.TextIOBase):
        sink.write(data.decode("utf-8"))
    else:
        sink.write(data)
    return len(data)


def _record_from_json(d, lineno) -> EntityRecord:
    if not isinstance(d, dict):
        raise TraceParseError(lineno, "entity must be an object")
    try:
        pos = d["position"]
        if not isinstance(pos, list):
            raise TypeError("position must be a list")
        gap = d.get("finger_gap")
        yaw = d.get("yaw")
        return EntityRecord(
            id=d["id"],
            kind=d["kind"],
            position=tuple(float(v) for v in pos),
            parent=d.get("parent"),
            finger_gap=None if gap is None else float(gap),
            occluded=bool(d.get("occluded", False)),
            yaw=None if yaw is None else float(yaw),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceParseError(lineno, f"bad entity record: {exc}") from None


def parse_trace(lines: Iterable[str]) -> EntityTrace:
    meta = None
    frames = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceParseError(lineno, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise TraceParseError(lineno, "expected a JSON object")
        if meta is None:
            if "T" not in obj:
                raise TraceParseError(lineno, "first line must be the header with T")
            try:
                meta = TraceMeta(T=obj["T"], dt=float(obj.get("dt", 0.4)), actor=obj.get("actor", "demonstrator"),
                                 task=obj.get("task", ""))
            except (TypeError, ValueError) as exc:
                raise TraceParseError(lineno, f"bad header: {exc}") from None
            validate_meta(meta)
            continue
        if "t" not in obj or "entities" not in obj or not isinstance(obj["entities"], list):
            raise TraceParseError(lineno, "frame needs 't' and an 'entities' list")
        if not isinstance(obj["t"], int):
            raise TraceParseError(lineno, "'t' must be an integer")
        frames.append(TraceFrame(t=obj["t"], entities=tuple(_record_from_json(e, lineno) for e in obj["entities"])))
    if meta is None:
        raise TraceParseError(1, "empty trace")
    validate_frames(meta, frames)
    return EntityTrace(meta, tuple(frames))


def read_trace(source: Union[str, Path, IO]) -> EntityTrace:
    """Read and validate a JSONL trace from a path or an open stream."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_trace(fh)
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return parse_trace(data.splitlines())


def make_trace(meta: TraceMeta, frames: Sequence[TraceFrame]) -> EntityTrace:
    validate_meta(meta)
    frames = tuple(frames)
    validate_frames(meta, frames)
    return EntityTrace(meta, frames)


# --------------------------------------------------------------------------- correspondence


@dataclass
class CorrespondenceReport:
    errors: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self):
        # truthy when there is anything to report
        return bool(self.errors or self.notes)


def check_correspondence(demo: EntityTrace, imit: EntityTrace) -> CorrespondenceReport:
    """Compare entity id sets of a demonstration and an imitation trace.

    Demo ids missing from the imitation are errors; extra imitation ids are
    clutter and only noted.
    """
    report = CorrespondenceReport()
    if len(demo.frames) != len(imit.frames):
        report.errors.append(f"length mismatch: demo T={len(demo.frames)} imitation T={len(imit.frames)}")
    demo_ids, imit_ids = set(demo.ids()), set(imit.ids())
    for i in sorted(demo_ids - imit_ids):
        report.errors.append(f"demo entity {i!r} has no imitator correspondent")
    for i in sorted(imit_ids - demo_ids):
        report.notes.append(f"imitator entity {i!r} has no demo correspondent (clutter, ignored)")
    return report
