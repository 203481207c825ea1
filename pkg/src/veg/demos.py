"""Task catalog, scripted demonstrations, gripper cloning and success checks."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import DemoFailed, MissingHand
from .graph import CostConfig
from .sim import (Action, Detector, DetectorConfig, Gains, SimParams, WorldState, sample_body_points, step,
                  world_from_scene)
from .trace import EntityTrace, TraceMeta, make_trace

TASK_NAMES = ("push-straight", "push-straight-grasped", "push-direction-change", "stack", "simple-stack", "pour")

# demonstrations are recorded with a clean detector unless asked otherwise
DEMO_DETECTOR = DetectorConfig(sigma=0.0, p_occlusion=0.0)


@dataclass(frozen=True)
class GripperCloneConfig:
    theta: float = 0.03  # finger-gap threshold, m

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be > 0")


@dataclass(frozen=True)
class TaskSpec:
    name: str
    scene: dict
    target: dict
    T: int
    gains: Gains = Gains()
    cost: CostConfig = CostConfig()
    rollouts_per_iter: int = 8
    force_grip_closed: bool = False
    script: tuple = field(default_factory=tuple)
    optimizer: dict = field(default_factory=dict)  # per-task learner overrides

    @property
    def tolerance(self) -> float:
        return float(self.target.get("tol", self.target.get("xy_tol", 0.0)) or 0.0)

    def initial_world(self) -> WorldState:
        return world_from_scene(self.scene)


@lru_cache(maxsize=None)
def _catalog_json() -> str:
    return resources.files("veg.data").joinpath("tasks.json").read_text(encoding="utf-8")


def load_catalog() -> dict:
    raw = json.loads(_catalog_json())
    return {name: task_from_dict(name, d) for name, d in raw.items()}


def task_from_dict(name: str, d: dict) -> TaskSpec:
    T = int(d["T"])
    if T < 2:
        raise ValueError("task episode length must be >= 2")
    return TaskSpec(
        name=name,
        scene=d["scene"],
        target=d["target"],
        T=T,
        gains=Gains(**d.get("gains", {})),
        cost=CostConfig(**d.get("cost", {})),
        rollouts_per_iter=int(d.get("rollouts_per_iter", 8)),
        force_grip_closed=bool(d.get("force_grip_closed", False)),
        script=tuple(d.get("script", ())),
        optimizer=dict(d.get("optimizer", {})),
    )


def get_task(name: str) -> TaskSpec:
    cat = load_catalog()
    if name not in cat:
        raise KeyError(f"unknown task {name!r}; available: {', '.join(sorted(cat))}")
    return cat[name]


# --------------------------------------------------------------------------- scripted demonstrator


def trapezoid(n: int) -> np.ndarray:
    """Per-step fractions of a segment under a trapezoidal speed profile (sum to 1)."""
    if n <= 0:
        return np.zeros(0)
    ramp = max(1, n // 4)
    v = np.ones(n)
    for i in range(min(ramp, n)):
        f = (i + 1) / (ramp + 1)
        v[i] = min(v[i], f)
        v[n - 1 - i] = min(v[n - 1 - i], f)
    return v / v.sum()


def script_commands(task: TaskSpec, start: WorldState) -> list:
    """Expand the task's waypoint script into per-step (displacement, dyaw, grip) commands."""
    pos = start.effector.position.copy()
    yaw = float(start.effector.yaw)
    cmds = []
    grip = False
    for seg in task.script:
        grip = bool(seg.get("grip", False))
        if "hold" in seg:
            cmds += [(np.zeros(3), 0.0, grip)] * int(seg["hold"])
            continue
        n = int(seg["steps"])
        goal = np.asarray(seg["to"], dtype=float)
        goal_yaw = float(seg.get("yaw", yaw))
        for f in trapezoid(n):
            cmds.append(((goal - pos) * f, (goal_yaw - yaw) * f, grip))
        pos, yaw = goal, goal_yaw
    n_steps = task.T - 1
    if len(cmds) > n_steps:
        raise DemoFailed(f"{task.name}: script has {len(cmds)} steps, episode allows {n_steps}")
    cmds += [(np.zeros(3), 0.0, grip)] * (n_steps - len(cmds))
    return cmds


def play_commands(task: TaskSpec, world: WorldState, cmds, detector: Detector, params: SimParams = SimParams()):
    """Run absolute-displacement commands in the simulator; returns frames and final world."""
    frames = [detector.detect(world, 0)]
    g = task.gains
    for t, (d, dyaw, grip) in enumerate(cmds, start=1):
        du = (d[0] / g.xyz, d[1] / g.xyz, d[2] / g.xyz, dyaw / g.rot)
        world = step(world, Action(du, grip), g, params)
        frames.append(detector.detect(world, t))
    return frames, world


def generate_demo(task: TaskSpec, seed: int = 0, detector: DetectorConfig = DEMO_DETECTOR,
                  points_per_object: int | None = None, return_world: bool = False):
    """Record a scripted demonstration of ``task``.

    Raises DemoFailed if the script does not meet its own success criterion.
    """
    world = task.initial_world()
    k = detector.points_per_object if points_per_object is None else points_per_object
    det = Detector(DetectorConfig(detector.sigma, detector.p_occlusion, k, seed), sample_body_points(world, k))
    frames, final = play_commands(task, world, script_commands(task, world), det)
    ok, err = success(task, final)
    if not ok:
        raise DemoFailed(f"{task.name}: scripted demo misses its target (error {err:.4g})")
    trace = make_trace(TraceMeta(T=task.T, dt=0.4, actor="demonstrator", task=task.name), frames)
    return (trace, final) if return_world else trace


# --------------------------------------------------------------------------- gripper cloning and success


def clone_gripper(demo: EntityTrace, cfg: GripperCloneConfig = GripperCloneConfig()) -> np.ndarray:
    """Closed-gripper command per frame: demo finger gap below the threshold."""
    gaps = demo.finger_gaps()
    if gaps is None:
        raise MissingHand("demo needs a hand entity with finger_gap in every frame")
    return gaps < cfg.theta


def success(task: TaskSpec, final: WorldState) -> tuple:
    """``(solved, error)`` for the final world of an episode.

    The error is in meters for push and stack (distance to the goal), and for
    pour the larger of the xy error / xy tolerance and yaw error / yaw
    tolerance, so that ``error <= 1`` exactly when solved.
    """
    tg = task.target
    kind = tg["kind"]
    if kind == "push":
        obj, ref = final.obj(tg["object"]), final.obj(tg["reference"])
        goal = ref.position[:2] + np.asarray(tg.get("offset", (0.0, 0.0)))
        err = float(np.linalg.norm(obj.position[:2] - goal))
        return err <= tg["tol"], err
    if kind == "stack":
        obj, base = final.obj(tg["object"]), final.obj(tg["base"])
        err = float(np.linalg.norm(obj.position[:2] - base.position[:2]))
        seated = abs(obj.position[2] - base.top) < 1e-6 and not obj.attached
        return bool(err < base.radius and seated), err
    if kind == "pour":
        obj, cont = final.obj(tg["object"]), final.obj(tg["container"])
        xy = float(np.linalg.norm(obj.position[:2] - cont.position[:2]))
        yaw_err = orientation_error(task, final)
        err = max(xy / tg["xy_tol"], yaw_err / tg["yaw_tol"])
        return bool(xy <= tg["xy_tol"] and yaw_err <= tg["yaw_tol"]), err
    raise ValueError(f"unknown target kind {kind!r}")


def orientation_error(task: TaskSpec, final: WorldState) -> float:
    """|yaw - target yaw| wrapped to [0, pi] for pour tasks."""
    tg = task.target
    start_yaw = next(o.get("yaw", 0.0) for o in task.scene["objects"] if o["id"] == tg["object"])
    d = final.obj(tg["object"]).yaw - (start_yaw + tg["yaw"])
    return float(abs((d + np.pi) % (2 * np.pi) - np.pi))
