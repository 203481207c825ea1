"""Experiment runner behind the ``veg`` command line.

Every command is a plain function taking explicit arguments and writing to
explicit paths, so the same entry points serve the CLI, the tests and the
notebooks.  Outputs are deterministic for a fixed seed: CSV numbers use a
fixed 9-significant-digit format and traces use the canonical JSONL encoding.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .demos import TaskSpec, generate_demo, get_task, play_commands, script_commands, success
from .errors import ConfigError
from .graph import CostConfig, anchor_timeline, sequence_cost
from .policy import LinearGaussianPolicy, OptimizerConfig
from .rollout import TrainConfig, rollout, rollout_config, start_world, train
from .sim import Action, Detector, DetectorConfig, ObjectState, WorldState, sample_body_points, step
from .trace import EntityTrace, TraceFrame, TraceMeta, make_trace, read_trace, write_trace

log = logging.getLogger(__name__)

COST_COLUMNS = ("t", "raw_cost", "normalized_cost")
CURVE_COLUMNS = ("iteration", "mean_cost", "kl_epsilon", "success_rate")
SUMMARY_COLUMNS = ("seed", "solved", "error", "best_iteration", "final_cost")
EVAL_COLUMNS = ("seed", "solved", "error", "total_cost")
SHAPE_VARIANTS = ("correct", "wrong-target", "partially-wrong", "cluttered", "correct_end")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def write_csv(path, columns: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def normalize(raw: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Divide by the max absolute value (or ``scale``); all-zero stays zero."""
    raw = np.asarray(raw, dtype=float)
    m = float(np.max(np.abs(raw))) if scale is None else float(scale)
    return np.zeros_like(raw) if m == 0 else raw / m


# --------------------------------------------------------------------------- configuration


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "push-straight"
    seeds: tuple = (0, 1, 2, 3, 4)
    perturbation: float = 0.06
    cost: dict = field(default_factory=dict)  # overrides of the task's edge weights
    detector: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    out: str = "."

    def __post_init__(self):
        if not self.perturbation >= 0:
            raise ConfigError("perturbation", "must be >= 0")
        try:
            get_task(self.task)
        except KeyError as exc:
            raise ConfigError("task", exc.args[0]) from None
        for name, cls in (("cost", CostConfig), ("detector", DetectorConfig), ("optimizer", OptimizerConfig)):
            _check_keys(name, getattr(self, name), cls)

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown configuration key")
        d = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        if "seeds" in d:
            d["seeds"] = tuple(int(s) for s in d["seeds"])
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError("<root>", str(exc)) from None

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from None
        return cls.from_dict(d, **overrides)

    @property
    def spec(self) -> TaskSpec:
        return get_task(self.task)

    def cost_config(self) -> CostConfig:
        return _build(replace, self.spec.cost, self.cost, "cost")

    def train_config(self) -> TrainConfig:
        task = self.spec
        opt = _build(OptimizerConfig, None,
                     {"rollouts_per_iter": task.rollouts_per_iter, **task.optimizer, **self.optimizer}, "optimizer")
        det = _build(DetectorConfig, None, self.detector, "detector")
        return TrainConfig(optimizer=opt, detector=det, cost=self.cost_config(), perturbation=self.perturbation)

    def to_dict(self) -> dict:
        return {**asdict(self), "seeds": list(self.seeds)}


def _check_keys(section: str, values: dict, cls) -> None:
    if not isinstance(values, dict):
        raise ConfigError(section, "must be a JSON object")
    known = {f.name for f in fields(cls)}
    for k in values:
        if k not in known:
            raise ConfigError(f"{section}.{k}", "unknown configuration key")


def _build(ctor, base, values: dict, section: str):
    vals = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        return ctor(base, **vals) if base is not None else ctor(**vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(section, str(exc)) from None


# --------------------------------------------------------------------------- demo / cost


def cmd_demo(task: str, seed: int, out) -> EntityTrace:
    """Record the scripted demonstration of ``task`` to ``out`` (JSONL)."""
    trace = generate_demo(get_task(task), seed=seed)
    write_trace(trace.meta, trace.frames, out)
    return trace


def cost_curve(demo: EntityTrace, imit: EntityTrace, cfg: CostConfig) -> tuple:
    raw = sequence_cost(demo, imit, cfg)
    return raw, normalize(raw)


def cmd_cost(demo_file, imit_file, config: ExperimentConfig | None, out_csv) -> np.ndarray:
    """Per-frame graph cost of an imitation trace against a demonstration."""
    demo, imit = read_trace(demo_file), read_trace(imit_file)
    cfg = config.cost_config() if config is not None else _task_cost(demo.meta.task)
    raw, norm = cost_curve(demo, imit, cfg)
    write_csv(out_csv, COST_COLUMNS, zip(range(len(raw)), raw, norm))
    return raw


def _task_cost(task_name: str) -> CostConfig:
    try:
        return get_task(task_name).cost
    except KeyError:
        return CostConfig()


# --------------------------------------------------------------------------- train / eval


@dataclass
class SeedSummary:
    seed: int
    solved: bool
    error: float
    best_iteration: int
    final_cost: float

    def row(self):
        return (self.seed, self.solved, self.error, self.best_iteration, self.final_cost)


def cmd_train(config: ExperimentConfig, demo_file=None, out_dir=None, iterations: int | None = None) -> list:
    """Train one policy per seed; writes ``policy_seed<s>.json``,
    ``curve_seed<s>.csv`` and ``summary.csv`` into ``out_dir``."""
    out = Path(out_dir or config.out)
    out.mkdir(parents=True, exist_ok=True)
    task = config.spec
    demo = read_trace(demo_file) if demo_file else generate_demo(task)
    tcfg = config.train_config()
    if iterations is not None:
        tcfg = replace(tcfg, optimizer=replace(tcfg.optimizer, iterations=int(iterations)))
    rows = []
    for seed in config.seeds:
        res = train(task, demo, tcfg, seed=seed)
        log.info("seed %d solved=%s error=%.4g", seed, res.solved, res.error)
        (out / f"policy_seed{seed}.json").write_text(json.dumps(res.result.policy.to_json()) + "\n",
                                                     encoding="utf-8")
        write_csv(out / f"curve_seed{seed}.csv", CURVE_COLUMNS,
                  ((c.iteration, c.mean_cost, c.kl_epsilon, c.success_rate) for c in res.result.curve))
        rows.append(SeedSummary(seed, res.solved, res.error, res.result.best_iteration,
                                float(res.final.costs.sum())))
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, (r.row() for r in rows))
    return rows


def cmd_eval(config: ExperimentConfig, policy_file, demo_file=None, out_csv=None, trials: int | None = None) -> list:
    """Run a saved policy's mean from perturbed starts, one row per seed."""
    task = config.spec
    demo = read_trace(demo_file) if demo_file else generate_demo(task)
    policy = LinearGaussianPolicy.from_json(json.loads(Path(policy_file).read_text(encoding="utf-8")))
    tcfg = config.train_config()
    rcfg = rollout_config(task, tcfg)
    seeds = list(config.seeds) if trials is None else [config.seeds[0] + i for i in range(int(trials))]
    rows = []
    for seed in seeds:
        world = start_world(task, config.perturbation, seed)
        r = rollout(world, policy, demo, rcfg, np.random.default_rng([int(seed), 13]), explore=False)
        ok, err = success(task, r.final)
        rows.append((seed, ok, err, float(r.costs.sum())))
    write_csv(out_csv or Path(config.out) / "eval.csv", EVAL_COLUMNS, rows)
    return rows


# --------------------------------------------------------------------------- cost-shaping comparison


def _scripted_run(task: TaskSpec, world: WorldState, script: Sequence[dict], detector: DetectorConfig):
    t = replace(task, script=tuple(script))
    det = Detector(detector, sample_body_points(world, detector.points_per_object))
    frames, final = play_commands(t, world, script_commands(t, world), det)
    return make_trace(TraceMeta(T=task.T, dt=0.4, actor="imitator", task=task.name), frames), final


def _retarget(script, old_xy, new_xy):
    """Replace waypoints above ``old_xy`` by waypoints above ``new_xy``."""
    out = []
    for seg in script:
        seg = dict(seg)
        if "to" in seg and np.allclose(seg["to"][:2], old_xy):
            seg["to"] = [float(new_xy[0]), float(new_xy[1]), seg["to"][2]]
        out.append(seg)
    return out


def _with_clutter(world: WorldState) -> WorldState:
    w = world.copy()
    w.objects.append(ObjectState("zz_clutter_a", np.array([-0.12, 0.15, 0.0]), radius=0.025, height=0.03))
    w.objects.append(ObjectState("zz_clutter_b", np.array([0.25, -0.15, 0.0]), radius=0.02, height=0.06))
    return w


def _hold_after(trace: EntityTrace, t_hold: int) -> EntityTrace:
    frames = list(trace.frames[:t_hold + 1])
    last = trace.frames[t_hold]
    frames += [TraceFrame(t, last.entities) for t in range(t_hold + 1, len(trace.frames))]
    return make_trace(trace.meta, frames)


def shape_variants(task_name: str = "stack", seed: int = 0, detector: DetectorConfig | None = None) -> dict:
    """Imitation traces for the cost-shaping comparison plus the demo.

    correct: the demonstrated script replayed under detector noise.
    wrong-target: the object is carried to a spot away from the base.
    partially-wrong: it lands near the base but off centre.
    cluttered: the correct run with two unrelated objects in the scene.
    correct_end: the correct run frozen from the frame at which it succeeds.
    """
    task = get_task(task_name)
    if task.target["kind"] != "stack":
        raise ValueError("the shaping comparison is defined for stacking tasks")
    demo = generate_demo(task, seed=seed)
    det = detector or DetectorConfig(seed=seed)
    world = task.initial_world()
    base = world.obj(task.target["base"]).position[:2]
    runs = {}
    runs["correct"], _ = _scripted_run(task, world, task.script, det)
    runs["wrong-target"], _ = _scripted_run(task, world, _retarget(task.script, base, (-0.15, -0.1)), det)
    runs["partially-wrong"], _ = _scripted_run(task, world, _retarget(task.script, base, base + (0.0, -0.055)),
                                               det)
    runs["cluttered"], _ = _scripted_run(task, _with_clutter(world), task.script, det)
    runs["correct_end"] = _hold_after(runs["correct"], success_frame(task, world, task.script))
    return {"demo": demo, **runs}


def success_frame(task: TaskSpec, world: WorldState, script) -> int:
    """First frame index whose world state satisfies the task's success test."""
    t = replace(task, script=tuple(script))
    g = task.gains
    w = world
    for i, (d, dyaw, grip) in enumerate(script_commands(t, world), start=1):
        w = step(w, Action((d[0] / g.xyz, d[1] / g.xyz, d[2] / g.xyz, dyaw / g.rot), grip), g)
        if success(task, w)[0]:
            return i
    return task.T - 1


def cmd_shape(out_dir, task: str = "stack", seed: int = 0, detector: DetectorConfig | None = None) -> dict:
    """Write ``<variant>.csv`` for the five variants and ``shape.svg``.

    Normalization divides by the largest raw cost over all variants so the
    curves share one scale.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = shape_variants(task, seed, detector)
    demo = runs.pop("demo")
    cfg = get_task(task).cost
    anchors = anchor_timeline(demo, cfg)
    raw = {k: sequence_cost(demo, v, cfg, anchors) for k, v in runs.items()}
    scale = max(float(np.max(np.abs(r))) for r in raw.values())
    curves = {}
    for name in SHAPE_VARIANTS:
        norm = normalize(raw[name], scale)
        curves[name] = norm
        write_csv(out / f"{name}.csv", COST_COLUMNS, zip(range(len(norm)), raw[name], norm))
    (out / "shape.svg").write_text(svg_plot(curves), encoding="utf-8")
    return {k: (raw[k], curves[k]) for k in SHAPE_VARIANTS}


_COLOURS = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02")


def svg_plot(curves: dict, width: int = 640, height: int = 400, title: str = "normalized cost") -> str:
    """Minimal line chart of curves in [0, 1] over frame index."""
    ml, mr, mt, mb = 50, 150, 30, 40
    pw, ph = width - ml - mr, height - mt - mb
    n = max(len(c) for c in curves.values())
    sx = pw / max(n - 1, 1)

    def pt(i, v):
        return f"{ml + i * sx:.2f},{mt + ph * (1.0 - float(v)):.2f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{ml}" y="{mt - 10}">{title}</text>',
             f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
             f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>']
    for v in (0.0, 0.5, 1.0):
        y = mt + ph * (1 - v)
        parts.append(f'<text x="{ml - 8}" y="{y + 4:.2f}" text-anchor="end">{v:g}</text>')
    for i in range(0, n, 5):
        parts.append(f'<text x="{ml + i * sx:.2f}" y="{mt + ph + 16}" text-anchor="middle">{i}</text>')
    parts.append(f'<text x="{ml + pw / 2:.2f}" y="{height - 6}" text-anchor="middle">frame</text>')
    for j, (name, c) in enumerate(curves.items()):
        colour = _COLOURS[j % len(_COLOURS)]
        dash = ' stroke-dasharray="6,4"' if name == "cluttered" else ""
        pts = " ".join(pt(i, v) for i, v in enumerate(c))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="2"{dash} points="{pts}"/>')
        ly = mt + 16 * j + 6
        parts.append(f'<line x1="{ml + pw + 12}" y1="{ly}" x2="{ml + pw + 32}" y2="{ly}" '
                     f'stroke="{colour}" stroke-width="2"{dash}/>')
        parts.append(f'<text x="{ml + pw + 38}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
