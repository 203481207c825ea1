"""Visual entity graphs, motion-saliency attention and the graph matching cost.

A graph at time ``t`` holds one node per detected entity (objects, points on
objects, and the hand / robot effector) and a set of attended edges rooted at
the *anchor* object.  The cost between a demonstration graph and an imitation
graph sums, over attended edges, the weighted Euclidean norm of the mismatch
between the two relative displacement vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import GraphMismatch, LengthMismatch, MissingEntity, NoObjects
from .trace import HAND, OBJECT, POINT, EntityTrace, TraceFrame

OBJECT_OBJECT = "object-object"
OBJECT_HAND = "object-hand"
OBJECT_POINT = "object-point"
EDGE_KINDS = (OBJECT_OBJECT, OBJECT_HAND, OBJECT_POINT)

_EDGE_KIND_FOR = {OBJECT: OBJECT_OBJECT, HAND: OBJECT_HAND, POINT: OBJECT_POINT}


@dataclass(frozen=True)
class CostConfig:
    """Tied per-edge-type weights plus attention and smoothing parameters."""

    w_object_hand: float = 1.0
    w_object_object: float = 1.0
    w_object_point: float = 0.0
    smoothing_gamma: float = 1e-5
    motion_threshold: float = 0.005  # meters over the trailing window
    motion_window: int = 3  # frames

    def __post_init__(self):
        for name in ("w_object_hand", "w_object_object", "w_object_point"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.smoothing_gamma > 0:
            raise ValueError("smoothing_gamma must be > 0")
        if not self.motion_threshold > 0:
            raise ValueError("motion_threshold must be > 0")
        if int(self.motion_window) < 1:
            raise ValueError("motion_window must be >= 1")

    def weight(self, edge_kind: str) -> float:
        return {
            OBJECT_OBJECT: self.w_object_object,
            OBJECT_HAND: self.w_object_hand,
            OBJECT_POINT: self.w_object_point,
        }[edge_kind]


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    position: tuple
    parent: str | None = None

    def __post_init__(self):
        if (self.kind == POINT) != (self.parent is not None):
            raise ValueError(f"node {self.id!r}: only point nodes carry a parent")
        if not np.all(np.isfinite(self.position)):
            raise ValueError(f"node {self.id!r}: non-finite position")


@dataclass(frozen=True)
class Edge:
    a: str  # always the anchor object
    b: str
    kind: str
    weight: float
    attended: bool = True

    @property
    def key(self) -> tuple:
        return (min(self.a, self.b), max(self.a, self.b), self.kind, self.attended)


@dataclass(frozen=True)
class VisualEntityGraph:
    timestep: int
    nodes: tuple
    edges: tuple = field(default_factory=tuple)

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        known = set(ids)
        seen = set()
        for e in self.edges:
            if e.a == e.b:
                raise ValueError(f"self-loop on {e.a!r}")
            if e.a not in known or e.b not in known:
                raise ValueError(f"edge {e.a!r}-{e.b!r} references a missing node")
            pair = frozenset((e.a, e.b))
            if pair in seen:
                raise ValueError(f"duplicate edge {e.a!r}-{e.b!r}")
            seen.add(pair)

    @cached_property
    def node_map(self) -> dict:
        return {n.id: n for n in self.nodes}

    @cached_property
    def attended_edges(self) -> tuple:
        return tuple(e for e in self.edges if e.attended)

    def position(self, node_id: str) -> np.ndarray:
        return np.asarray(self.node_map[node_id].position, dtype=float)

    def _edge_arrays(self):
        edges = self.attended_edges
        if not edges:
            z = np.zeros((0, 3))
            return z, np.zeros(0)
        nm = self.node_map
        pa = np.array([nm[e.a].position for e in edges], dtype=float)
        pb = np.array([nm[e.b].position for e in edges], dtype=float)
        w = np.array([e.weight for e in edges], dtype=float)
        return pa - pb, w


# --------------------------------------------------------------------------- attention


def _object_tracks(trace: EntityTrace) -> tuple:
    ids = trace.ids(OBJECT)
    if not ids:
        raise NoObjects("trace has no object entities")
    return ids, np.stack([trace.positions(i) for i in ids])  # (N, T, 3)


def motion_displacement(trace: EntityTrace, cfg: CostConfig) -> tuple:
    """Trailing-window displacement of every object: ids and an (N, T) array."""
    ids, P = _object_tracks(trace)
    T = P.shape[1]
    back = np.maximum(np.arange(T) - int(cfg.motion_window), 0)
    disp = np.linalg.norm(P - P[:, back], axis=-1)
    return ids, np.nan_to_num(disp, nan=0.0)


def _pick_mover(ids, disp_t, threshold):
    moving = [(-d, i) for i, d in zip(ids, disp_t) if d > threshold]
    if not moving:
        return None
    # largest displacement wins, lexicographic id breaks ties
    return min(moving)[1]


def anchor_timeline(trace: EntityTrace, cfg: CostConfig) -> list:
    """Anchor object id for every frame of ``trace``.

    The anchor is the object moving at ``t`` (trailing displacement above the
    threshold); otherwise the next object to move in the future; otherwise the
    object nearest the hand.
    """
    ids, disp = motion_displacement(trace, cfg)
    T = disp.shape[1]
    movers = [_pick_mover(ids, disp[:, t], cfg.motion_threshold) for t in range(T)]
    out = []
    for t in range(T):
        a = next((m for m in movers[t:] if m is not None), None)
        if a is None:
            a = _nearest_to_hand(trace.frames[t], ids)
        out.append(a)
    return out


def _nearest_to_hand(frame: TraceFrame, ids) -> str:
    present = [i for i in ids if i in frame]
    if not present:
        raise NoObjects(f"no object present at t={frame.t}")
    hand = frame.hand()
    if hand is None:
        return min(present)
    h = hand.xyz
    return min(present, key=lambda i: (float(np.linalg.norm(frame[i].xyz - h)), i))


def select_anchor(trace: EntityTrace, t: int, cfg: CostConfig) -> str:
    if not 0 <= t < len(trace.frames):
        raise IndexError(f"t={t} outside [0, {len(trace.frames)})")
    return anchor_timeline(trace, cfg)[t]


# --------------------------------------------------------------------------- graph construction


def graph_from_frame(frame: TraceFrame, anchor: str, cfg: CostConfig, keep: Iterable[str] | None = None,
                     timestep: int | None = None) -> VisualEntityGraph:
    """Build the attended graph of one frame.

    ``keep`` restricts nodes to corresponded ids (clutter is dropped entirely).
    """
    keep = None if keep is None else set(keep)
    ents = [e for e in frame.entities if keep is None or e.id in keep]
    if anchor not in {e.id for e in ents}:
        raise MissingEntity(f"anchor {anchor!r} absent at t={frame.t}")
    if frame[anchor].kind != OBJECT:
        raise MissingEntity(f"anchor {anchor!r} is not an object")
    nodes = tuple(Node(e.id, e.kind, tuple(e.position), e.parent) for e in sorted(ents, key=lambda e: e.id))
    edges = []
    for n in nodes:
        if n.id == anchor:
            continue
        if n.kind == POINT and n.parent != anchor:
            continue
        kind = _EDGE_KIND_FOR[n.kind]
        edges.append(Edge(anchor, n.id, kind, cfg.weight(kind)))
    return VisualEntityGraph(frame.t if timestep is None else timestep, nodes, tuple(edges))


def build_graph(trace: EntityTrace, t: int, anchor: str, cfg: CostConfig,
                keep: Iterable[str] | None = None) -> VisualEntityGraph:
    return graph_from_frame(trace.frames[t], anchor, cfg, keep=keep, timestep=t)


# --------------------------------------------------------------------------- costs


def _check_match(g_demo: VisualEntityGraph, g_imit: VisualEntityGraph) -> None:
    if set(g_demo.node_map) != set(g_imit.node_map):
        missing = sorted(set(g_demo.node_map) ^ set(g_imit.node_map))
        raise GraphMismatch(f"node sets differ: {missing}")
    if {e.key for e in g_demo.edges} != {e.key for e in g_imit.edges}:
        raise GraphMismatch("edge sets differ")


def _residuals(g_demo, g_imit):
    _check_match(g_demo, g_imit)
    rel_d, w = g_demo._edge_arrays()
    nm = g_imit.node_map
    edges = g_demo.attended_edges
    if not edges:
        return np.zeros((0, 3)), w, edges
    rel_i = np.array([nm[e.a].position for e in edges], dtype=float) - np.array(
        [nm[e.b].position for e in edges], dtype=float)
    return rel_d - rel_i, w, edges


def _row_norms(r: np.ndarray) -> np.ndarray:
    # scaled so tiny or huge residuals neither underflow nor overflow when squared
    s = np.max(np.abs(r), axis=1)
    safe = np.where(s > 0, s, 1.0)
    return s * np.sqrt(np.einsum("ij,ij->i", r / safe[:, None], r / safe[:, None]))


def graph_cost(g_demo: VisualEntityGraph, g_imit: VisualEntityGraph) -> float:
    r, w, _ = _residuals(g_demo, g_imit)
    if not len(w):
        return 0.0
    return float(np.dot(w, _row_norms(r)))


def smoothed_graph_cost(g_demo: VisualEntityGraph, g_imit: VisualEntityGraph, cfg: CostConfig):
    """Differentiable surrogate ``sum w * sqrt(gamma + |r|^2)``.

    Returns ``(value, grad)`` where ``grad`` maps each imitator node id to the
    gradient of the value with respect to that node's position.
    """
    r, w, edges = _residuals(g_demo, g_imit)
    grad = {nid: np.zeros(3) for nid in g_imit.node_map}
    if not len(w):
        return 0.0, grad
    s = np.sqrt(cfg.smoothing_gamma + np.einsum("ij,ij->i", r, r))
    # r = rel_demo - (x_a - x_b): d/dx_a = -w r / s, d/dx_b = +w r / s
    g = (w / s)[:, None] * r
    for e, ge in zip(edges, g):
        grad[e.a] -= ge
        grad[e.b] += ge
    return float(np.dot(w, s)), grad


def sequence_cost(demo: EntityTrace, imit: EntityTrace, cfg: CostConfig, anchors: list | None = None) -> np.ndarray:
    """Per-timestep graph cost of an imitation against a demonstration.

    Anchors come from the demonstration timeline and map to the imitation by
    id; imitation entities absent from the demonstration frame are ignored.
    """
    if len(demo.frames) != len(imit.frames):
        raise LengthMismatch(f"demo T={len(demo.frames)} vs imitation T={len(imit.frames)}")
    if anchors is None:
        anchors = anchor_timeline(demo, cfg)
    out = np.zeros(len(demo.frames))
    for t, (fd, fi) in enumerate(zip(demo.frames, imit.frames)):
        keep = fd.ids()
        missing = [i for i in keep if i not in fi]
        if missing:
            raise GraphMismatch(f"t={t}: demo entities {missing} absent from imitation")
        gd = graph_from_frame(fd, anchors[t], cfg, timestep=t)
        gi = graph_from_frame(fi, anchors[t], cfg, keep=keep, timestep=t)
        out[t] = graph_cost(gd, gi)
    return out
