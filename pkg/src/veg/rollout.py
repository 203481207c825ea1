"""Closed-loop rollouts in the simulator and the imitation training problem."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .demos import GripperCloneConfig, TaskSpec, clone_gripper, success
from .graph import CostConfig, anchor_timeline, sequence_cost
from .policy import (FeatureSpec, GraphStateCost, LinearGaussianPolicy, OptimizerConfig, QuadraticCost, Sample,
                     StateLayout, TrainResult, average_quadratic, featurize, optimize, quadratize)
from .sim import (Action, Detector, DetectorConfig, Gains, SimParams, WorldState, perturb_world,
                  sample_body_points, step)
from .trace import OBJECT, EntityTrace, TraceMeta, make_trace
from .errors import LengthMismatch


@dataclass(frozen=True)
class RolloutConfig:
    cost: CostConfig = CostConfig()
    detector: DetectorConfig = DetectorConfig()
    gains: Gains = Gains()
    params: SimParams = SimParams()
    gripper: GripperCloneConfig = GripperCloneConfig()
    force_grip_closed: bool = False


@dataclass
class Rollout:
    trace: EntityTrace
    costs: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    grip: np.ndarray
    final: WorldState


def feature_spec_for(demo: EntityTrace) -> FeatureSpec:
    return FeatureSpec(n_total=len(demo.frames[0].ids(OBJECT)))


def rollout(initial: WorldState, policy: LinearGaussianPolicy, demo: EntityTrace, cfg: RolloutConfig,
            rng: np.random.Generator, explore: bool = True, anchors: list | None = None) -> Rollout:
    """Run ``policy`` from ``initial`` for the demo's horizon.

    At each step the detected frame is featurized against the demo frame, an
    action is sampled (or its mean taken when ``explore`` is False), the
    gripper command is cloned from the demo finger gap, and the world steps.
    Returns the imitation trace and its per-step graph cost.
    """
    T = len(demo.frames)
    if policy.T != T:
        raise LengthMismatch(f"policy horizon {policy.T} != demo length {T}")
    if anchors is None:
        anchors = anchor_timeline(demo, cfg.cost)
    spec = feature_spec_for(demo)
    grip = np.ones(T, dtype=bool) if cfg.force_grip_closed else clone_gripper(demo, cfg.gripper)
    world = initial
    if cfg.force_grip_closed:
        world = world.copy()
        world.effector.gripper_gap = cfg.params.gap_closed
    det_cfg = DetectorConfig(cfg.detector.sigma, cfg.detector.p_occlusion, cfg.detector.points_per_object,
                             int(rng.integers(0, 2**31 - 1)))
    det = Detector(det_cfg, sample_body_points(world, det_cfg.points_per_object))
    frames = [det.detect(world, 0)]
    X = np.zeros((T, spec.state_dim))
    U = np.zeros((T, policy.action_dim))
    for t in range(T):
        X[t] = featurize(frames[t], demo.frames[t], anchors[t], spec)
        U[t] = policy.act(t, X[t], rng if explore else None)
        if t < T - 1:
            world = step(world, Action(tuple(U[t]), bool(grip[t + 1])), cfg.gains, cfg.params)
            frames.append(det.detect(world, t + 1))
    trace = make_trace(TraceMeta(T=T, dt=demo.meta.dt, actor="imitator", task=demo.meta.task), frames)
    costs = sequence_cost(demo, trace, cfg.cost, anchors)
    return Rollout(trace, costs, X, U, grip, world)


class ImitationProblem:
    """Imitating one demonstration from one (possibly perturbed) start world."""

    def __init__(self, task: TaskSpec, demo: EntityTrace, world: WorldState, cfg: RolloutConfig):
        self.task, self.demo, self.world, self.cfg = task, demo, world, cfg
        self.anchors = anchor_timeline(demo, cfg.cost)
        self.spec = feature_spec_for(demo)
        self.T = len(demo.frames)
        self.state_dim = self.spec.state_dim
        self.action_dim = 4
        self.objects = sorted(demo.frames[0].ids(OBJECT))

    def run(self, policy: LinearGaussianPolicy, rng: np.random.Generator, explore: bool = True) -> Rollout:
        return rollout(self.world, policy, self.demo, self.cfg, rng, explore=explore, anchors=self.anchors)

    def sample(self, policy: LinearGaussianPolicy, rng: np.random.Generator) -> Sample:
        r = self.run(policy, rng)
        return Sample(r.states, r.actions, r.costs, solved=success(self.task, r.final)[0], info=r)

    def state_costs(self, samples) -> list:
        out = []
        for t in range(self.T):
            a = self.anchors[t]
            fd = self.demo.frames[t]
            nominal = {k: np.mean([s.info.trace.frames[t][k].xyz for s in samples], axis=0) for k in self.objects}
            layout = StateLayout(self.spec, self.objects, [a])
            n_pts = {a: len(fd.points_of(a))}
            out.append(GraphStateCost(layout, fd, nominal, self.cfg.cost, n_pts))
        return out

    def quadratize(self, samples, action_lambda: float) -> QuadraticCost:
        costs = self.state_costs(samples)
        return average_quadratic([quadratize(costs, s.states, s.actions, action_lambda) for s in samples])


def task_optimizer(task: TaskSpec, **overrides) -> OptimizerConfig:
    """Learner settings for ``task``: defaults, then the task's own, then ``overrides``."""
    return OptimizerConfig(**{"rollouts_per_iter": task.rollouts_per_iter, **task.optimizer, **overrides})


@dataclass(frozen=True)
class TrainConfig:
    optimizer: OptimizerConfig | None = None  # None: task_optimizer(task)
    detector: DetectorConfig = DetectorConfig()
    cost: CostConfig | None = None  # None: the task's own weights
    gripper: GripperCloneConfig = GripperCloneConfig()
    perturbation: float = 0.06  # start-perturbation ball diameter, m
    params: SimParams = field(default_factory=SimParams)


def rollout_config(task: TaskSpec, cfg: TrainConfig) -> RolloutConfig:
    return RolloutConfig(cost=cfg.cost or task.cost, detector=cfg.detector, gains=task.gains, params=cfg.params,
                         gripper=cfg.gripper, force_grip_closed=task.force_grip_closed)


@dataclass
class TrainOutcome:
    result: TrainResult
    problem: ImitationProblem
    final: Rollout  # noise-free execution of the returned policy
    solved: bool
    error: float


def start_world(task: TaskSpec, diameter: float, seed: int) -> WorldState:
    rng = np.random.default_rng([int(seed), 7])
    return perturb_world(task.initial_world(), diameter, rng)


def train(task: TaskSpec, demo: EntityTrace, cfg: TrainConfig = TrainConfig(), seed: int = 0,
          world: WorldState | None = None) -> TrainOutcome:
    """Learn a policy imitating ``demo`` from a start perturbed by ``seed``."""
    if world is None:
        world = start_world(task, cfg.perturbation, seed)
    problem = ImitationProblem(task, demo, world, rollout_config(task, cfg))
    opt = cfg.optimizer or task_optimizer(task)
    res = optimize(problem, opt, np.random.default_rng([int(seed), 11]))
    final = problem.run(res.policy, np.random.default_rng([int(seed), 13]), explore=False)
    ok, err = success(task, final.final)
    return TrainOutcome(res, problem, final, ok, err)
