"""Time-varying linear-Gaussian policy search over graph features.

One training iteration samples rollouts from the current policy, fits
time-varying linear dynamics to them, builds a local quadratic model of the
(smoothed) graph cost, solves a KL-constrained LQR problem for a new policy,
and finally nudges the policy offsets towards low-cost rollouts with a
path-integral (PI2) weighting.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import InsufficientData, MissingEntity, NonPSD
from .trace import OBJECT, TraceFrame

log = logging.getLogger(__name__)

EIG_FLOOR = 1e-8


# --------------------------------------------------------------------------- features


@dataclass(frozen=True)
class FeatureSpec:
    n_total: int  # number of objects
    n_joints: int = 1
    n_anchors: int = 1
    dim_phi: int = 1
    n_effector: int = 3

    @property
    def state_dim(self) -> int:
        return self.n_effector + self.n_joints + self.n_anchors * (self.n_total - 1) * 3 + self.n_anchors * self.dim_phi


def point_mismatch(frame: TraceFrame, demo_frame: TraceFrame, anchor: str) -> float:
    """Mean over the anchor's corresponded points of the relative-vector mismatch."""
    pts = [p.id for p in demo_frame.points_of(anchor)]
    if not pts:
        return 0.0
    ia, da = frame[anchor].xyz, demo_frame[anchor].xyz
    try:
        ip = np.array([frame[p].position for p in pts])
    except KeyError as exc:
        raise MissingEntity(f"point {exc.args[0]!r} missing from imitation frame") from None
    dp = np.array([demo_frame[p].position for p in pts])
    return float(np.mean(np.linalg.norm((ia - ip) - (da - dp), axis=1)))


def featurize(frame: TraceFrame, demo_frame: TraceFrame, anchor, spec: FeatureSpec, joints=None) -> np.ndarray:
    """State vector ``[effector xyz, joints, anchor-relative object vectors, point mismatch]``.

    ``anchor`` is one object id or a sequence of them.  Objects are those of
    the demonstration frame, in id order; ``joints`` defaults to the effector
    yaw carried by the hand record.
    """
    anchors = [anchor] if isinstance(anchor, str) else list(anchor)
    hand = frame.hand()
    if hand is None:
        raise MissingEntity("imitation frame has no hand entity")
    if joints is None:
        joints = [hand.yaw if hand.yaw is not None else 0.0]
    joints = np.asarray(joints, dtype=float).ravel()
    if joints.size != spec.n_joints or len(anchors) != spec.n_anchors:
        raise ValueError("joint or anchor count does not match the feature spec")
    objs = sorted(demo_frame.ids(OBJECT))
    if len(objs) != spec.n_total:
        raise ValueError(f"feature spec expects {spec.n_total} objects, demo frame has {len(objs)}")
    for i in objs:
        if i not in frame:
            raise MissingEntity(f"object {i!r} missing from imitation frame")
    parts = [hand.xyz, joints]
    for a in anchors:
        if a not in frame or a not in demo_frame:
            raise MissingEntity(f"anchor {a!r} absent")
        xa = frame[a].xyz
        parts += [xa - frame[k].xyz for k in objs if k != a]
    parts.append(np.array([point_mismatch(frame, demo_frame, a) for a in anchors]))
    x = np.concatenate(parts)
    assert x.size == spec.state_dim
    return x


class StateLayout:
    """Index bookkeeping for one timestep's state vector."""

    def __init__(self, spec: FeatureSpec, objects: Sequence[str], anchors: Sequence[str]):
        self.spec = spec
        self.objects = list(objects)
        self.anchors = list(anchors)
        self.eff = slice(0, 3)
        i = spec.n_effector + spec.n_joints
        self.rel = {}
        for a in self.anchors:
            for k in self.objects:
                if k != a:
                    self.rel[(a, k)] = slice(i, i + 3)
                    i += 3
        self.phi = {}
        for a in self.anchors:
            self.phi[a] = i
            i += spec.dim_phi


# --------------------------------------------------------------------------- policies and models


@dataclass
class LinearGaussianPolicy:
    K: np.ndarray  # (T, m, n)
    k: np.ndarray  # (T, m)
    Sigma: np.ndarray  # (T, m, m)
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def T(self) -> int:
        return self.K.shape[0]

    @property
    def action_dim(self) -> int:
        return self.K.shape[1]

    @property
    def state_dim(self) -> int:
        return self.K.shape[2]

    @classmethod
    def initial(cls, T: int, state_dim: int, explore_std, action_dim: int = 4) -> "LinearGaussianPolicy":
        std = np.broadcast_to(np.asarray(explore_std, dtype=float), (action_dim,))
        return cls(np.zeros((T, action_dim, state_dim)), np.zeros((T, action_dim)),
                   np.tile(np.diag(std ** 2), (T, 1, 1)))

    @property
    def chol(self) -> np.ndarray:
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.Sigma)
        return self._chol

    def mean(self, t: int, x: np.ndarray) -> np.ndarray:
        return self.K[t] @ x + self.k[t]

    def act(self, t: int, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        u = self.mean(t, x)
        if rng is not None:
            u = u + self.chol[t] @ rng.standard_normal(self.action_dim)
        return u

    def copy(self) -> "LinearGaussianPolicy":
        return LinearGaussianPolicy(self.K.copy(), self.k.copy(), self.Sigma.copy())

    def to_json(self) -> dict:
        T, m, n = self.K.shape
        return {
            "T": T, "state_dim": n, "action_dim": m,
            "K": [self.K[t].ravel().tolist() for t in range(T)],
            "k": [self.k[t].tolist() for t in range(T)],
            "Sigma": [self.Sigma[t].ravel().tolist() for t in range(T)],
        }

    @classmethod
    def from_json(cls, d: dict) -> "LinearGaussianPolicy":
        T, n, m = int(d["T"]), int(d["state_dim"]), int(d["action_dim"])
        return cls(np.array(d["K"], dtype=float).reshape(T, m, n), np.array(d["k"], dtype=float).reshape(T, m),
                   np.array(d["Sigma"], dtype=float).reshape(T, m, m))


@dataclass
class DynamicsModel:
    """x_{t+1} ~ N(A_t x_t + B_t u_t + c_t, W_t) for t = 0..T-2, plus the initial-state Gaussian."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    W: np.ndarray
    x0_mean: np.ndarray
    x0_cov: np.ndarray


@dataclass
class QuadraticCost:
    """Per-timestep ``0.5 z'Cz + c'z + e`` with ``z = [x; u]``."""

    C: np.ndarray  # (T, n+m, n+m)
    c: np.ndarray  # (T, n+m)
    e: np.ndarray  # (T,)
    state_dim: int

    def value(self, t: int, x: np.ndarray, u: np.ndarray) -> float:
        z = np.concatenate([x, u])
        return float(0.5 * z @ self.C[t] @ z + self.c[t] @ z + self.e[t])


@dataclass(frozen=True)
class OptimizerConfig:
    rollouts_per_iter: int = 8
    iterations: int = 10
    kl_epsilon: float = 3.0  # nats per timestep
    ridge_lambda: float = 1e-6
    action_cost_lambda: float = 1e-6  # per raw action unit squared
    pi2_temperature: float = 1.0
    pi2_blend: float = 0.5
    fit_window: int = 2
    explore_std: tuple = (5.0, 5.0, 5.0, 2.5)  # raw action units
    kl_shrink: float = 0.5
    kl_grow: float = 1.2
    min_std: float = 5.0  # floor on the exploration std after each update, raw units
    reuse_batches: int = 1  # earlier batches pooled into the dynamics fit

    def __post_init__(self):
        if self.rollouts_per_iter < 2:
            raise ValueError("rollouts_per_iter must be >= 2")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        for name in ("kl_epsilon", "ridge_lambda", "pi2_temperature"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if (self.action_cost_lambda < 0 or not 0 <= self.pi2_blend <= 1 or self.fit_window < 0
                or self.min_std < 0 or self.reuse_batches < 0):
            raise ValueError("invalid optimizer configuration")


# --------------------------------------------------------------------------- dynamics fitting


def fit_dynamics(rollouts: Sequence, window: int = 2, ridge: float = 1e-6) -> DynamicsModel:
    """Per-timestep ridge regression of x_{t+1} on [x_t; u_t; 1].

    ``rollouts`` is a sequence of ``(states (T, n), actions (T, m))`` pairs.
    Samples from timesteps within ``window`` of ``t`` are pooled.
    """
    if len(rollouts) < 2:
        raise InsufficientData("need at least 2 rollouts")
    X = np.stack([np.asarray(r[0], dtype=float) for r in rollouts])
    U = np.stack([np.asarray(r[1], dtype=float) for r in rollouts])
    M, T, n = X.shape
    m = U.shape[2]
    if U.shape[:2] != (M, T):
        raise ValueError("states and actions disagree in shape")
    A = np.zeros((T - 1, n, n))
    B = np.zeros((T - 1, n, m))
    c = np.zeros((T - 1, n))
    W = np.zeros((T - 1, n, n))
    for t in range(T - 1):
        lo, hi = max(0, t - window), min(T - 2, t + window)
        Z = np.concatenate([X[:, lo:hi + 1], U[:, lo:hi + 1]], axis=2).reshape(-1, n + m)
        Y = X[:, lo + 1:hi + 2].reshape(-1, n)
        N = Z.shape[0]
        if N < n + m + 1:
            raise InsufficientData(f"t={t}: {N} pooled samples for {n + m + 1} unknowns")
        zm, ym = Z.mean(0), Y.mean(0)
        Zc, Yc = Z - zm, Y - ym
        G = Zc.T @ Zc + ridge * np.eye(n + m)
        theta = np.linalg.solve(G, Zc.T @ Yc).T  # (n, n+m)
        A[t], B[t] = theta[:, :n], theta[:, n:]
        c[t] = ym - theta @ zm
        R = Yc - Zc @ theta.T
        Wt = R.T @ R / N
        W[t] = 0.5 * (Wt + Wt.T)
    x0 = X[:, 0]
    x0_cov = np.cov(x0.T, bias=True).reshape(n, n) if M > 1 else np.zeros((n, n))
    return DynamicsModel(A, B, c, W, x0.mean(0), 0.5 * (x0_cov + x0_cov.T))


# --------------------------------------------------------------------------- quadratic cost models


def clamp_psd(H: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    if w.min() >= floor:
        return H
    return (V * np.maximum(w, floor)) @ V.T


class StateCost(Protocol):
    def __call__(self, x: np.ndarray) -> tuple:  # (value, gradient, hessian)
        ...


def quadratize(state_costs: Sequence[StateCost], states: np.ndarray, actions: np.ndarray,
               action_lambda: float) -> QuadraticCost:
    """Expand per-timestep state costs around ``states`` and add ``lambda |u|^2``.

    The expansion is re-centred about the origin so models from several
    nominal trajectories can be averaged.
    """
    T, n = states.shape
    m = actions.shape[1]
    C = np.zeros((T, n + m, n + m))
    c = np.zeros((T, n + m))
    e = np.zeros(T)
    for t in range(T):
        x0 = states[t]
        v, g, H = state_costs[t](x0)
        H = clamp_psd(H)
        C[t, :n, :n] = H
        c[t, :n] = g - H @ x0
        e[t] = v - g @ x0 + 0.5 * x0 @ H @ x0
        C[t, n:, n:] = 2.0 * action_lambda * np.eye(m)
    return QuadraticCost(C, c, e, n)


def average_quadratic(models: Sequence[QuadraticCost]) -> QuadraticCost:
    return QuadraticCost(np.mean([q.C for q in models], 0), np.mean([q.c for q in models], 0),
                         np.mean([q.e for q in models], 0), models[0].state_dim)


class GraphStateCost:
    """Smoothed graph cost of one timestep written as a function of the state.

    Object-object residuals read the relative vectors straight from the state.
    The hand edge needs the anchor's absolute position, reconstructed from the
    other objects' nominal positions plus their state-relative vectors (held
    at the nominal anchor position when there are no other objects).  The
    point edges collapse onto the point-mismatch feature, giving
    ``K w_point sqrt(gamma + phi^2)``.

    Curvature is the Gauss-Newton (reweighted least squares) majorizer
    ``w J'J / sqrt(gamma + |r|^2)``, whose minimiser zeroes the residual.
    """

    def __init__(self, layout: StateLayout, demo_frame: TraceFrame, nominal_positions: dict, cost_cfg,
                 n_points: dict):
        self.layout = layout
        self.gamma = cost_cfg.smoothing_gamma
        n = layout.spec.state_dim
        terms = []  # (weight, target b, jacobian J) with r = b + J x
        hand = demo_frame.hand()
        for a in layout.anchors:
            da = demo_frame[a].xyz
            others = [k for k in layout.objects if k != a]
            for k in others:
                J = np.zeros((3, n))
                J[:, layout.rel[(a, k)]] = -np.eye(3)
                terms.append((cost_cfg.w_object_object, da - demo_frame[k].xyz, J))
            if hand is not None:
                J = np.zeros((3, n))
                J[:, layout.eff] = np.eye(3)
                if others:
                    base = np.mean([nominal_positions[k] for k in others], axis=0)
                    for k in others:
                        J[:, layout.rel[(a, k)]] -= np.eye(3) / len(others)
                else:
                    base = nominal_positions[a]
                terms.append((cost_cfg.w_object_hand, (da - hand.xyz) - base, J))
            k_pts = n_points.get(a, 0)
            if k_pts:
                J = np.zeros((1, n))
                J[0, layout.phi[a]] = 1.0
                terms.append((cost_cfg.w_object_point * k_pts, np.zeros(1), J))
        self.terms = [(w, b, J) for w, b, J in terms if w > 0]
        self.n = n

    def __call__(self, x: np.ndarray):
        v = 0.0
        g = np.zeros(self.n)
        H = np.zeros((self.n, self.n))
        for w, b, J in self.terms:
            r = b + J @ x
            s = math.sqrt(self.gamma + float(r @ r))
            v += w * s
            g += (w / s) * (J.T @ r)
            H += (w / s) * (J.T @ J)
        return v, g, H

    def exact(self, x: np.ndarray) -> float:
        """Unsmoothed value (gamma = 0)."""
        return float(sum(w * np.linalg.norm(b + J @ x) for w, b, J in self.terms))


# --------------------------------------------------------------------------- LQR with a KL trust region


def _backward(dyn: DynamicsModel, quad: QuadraticCost, prev: LinearGaussianPolicy, eta: float):
    T = quad.C.shape[0]
    n = quad.state_dim
    m = quad.C.shape[1] - n
    K = np.zeros((T, m, n))
    k = np.zeros((T, m))
    S = np.zeros((T, m, m))
    V = np.zeros((n, n))
    v = np.zeros(n)
    ix, iu = slice(0, n), slice(n, n + m)
    for t in range(T - 1, -1, -1):
        Q = quad.C[t].copy()
        q = quad.c[t].copy()
        if eta > 0:
            P = np.linalg.inv(prev.Sigma[t])
            Kp, kp = prev.K[t], prev.k[t]
            Q[ix, ix] += eta * Kp.T @ P @ Kp
            Q[ix, iu] -= eta * Kp.T @ P
            Q[iu, ix] -= eta * P @ Kp
            Q[iu, iu] += eta * P
            q[ix] += eta * Kp.T @ P @ kp
            q[iu] -= eta * P @ kp
        if t < T - 1:
            F = np.hstack([dyn.A[t], dyn.B[t]])
            Q += F.T @ V @ F
            q += F.T @ (V @ dyn.c[t] + v)
        Q = 0.5 * (Q + Q.T)
        Quu, Qux, qu = Q[iu, iu], Q[iu, ix], q[iu]
        try:
            L = np.linalg.cholesky(Quu)
        except np.linalg.LinAlgError:
            raise NonPSD(f"action Hessian not positive definite at t={t}") from None
        Linv = np.linalg.inv(L)
        Quu_inv = Linv.T @ Linv
        K[t] = -Quu_inv @ Qux
        k[t] = -Quu_inv @ qu
        S[t] = eta * Quu_inv if eta > 0 else Quu_inv
        V = Q[ix, ix] + Q[ix, iu] @ K[t] + K[t].T @ Q[iu, ix] + K[t].T @ Quu @ K[t]
        V = 0.5 * (V + V.T)
        v = q[ix] + Q[ix, iu] @ k[t] + K[t].T @ qu + K[t].T @ Quu @ k[t]
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    return LinearGaussianPolicy(K, k, S)


def state_marginals(dyn: DynamicsModel, policy: LinearGaussianPolicy):
    """Gaussian state means and covariances under ``policy`` and the fitted model."""
    T, m, n = policy.K.shape
    mu = np.zeros((T, n))
    cov = np.zeros((T, n, n))
    mu[0], cov[0] = dyn.x0_mean, dyn.x0_cov
    for t in range(T - 1):
        Kt = policy.K[t]
        mu_u = Kt @ mu[t] + policy.k[t]
        Sxx = cov[t]
        Sxu = Sxx @ Kt.T
        Suu = Kt @ Sxx @ Kt.T + policy.Sigma[t]
        F = np.hstack([dyn.A[t], dyn.B[t]])
        Sz = np.block([[Sxx, Sxu], [Sxu.T, Suu]])
        mu[t + 1] = dyn.A[t] @ mu[t] + dyn.B[t] @ mu_u + dyn.c[t]
        c = F @ Sz @ F.T + dyn.W[t]
        cov[t + 1] = 0.5 * (c + c.T)
    return mu, cov


def policy_kl(new: LinearGaussianPolicy, prev: LinearGaussianPolicy, mu: np.ndarray, cov: np.ndarray) -> float:
    """Expected KL(new || prev) summed over timesteps, states ~ N(mu_t, cov_t)."""
    T, m, _ = new.K.shape
    total = 0.0
    for t in range(T):
        P = np.linalg.inv(prev.Sigma[t])
        dK = prev.K[t] - new.K[t]
        dk = prev.k[t] - new.k[t]
        dm = dK @ mu[t] + dk
        _, ld_prev = np.linalg.slogdet(prev.Sigma[t])
        _, ld_new = np.linalg.slogdet(new.Sigma[t])
        kl = 0.5 * (np.trace(P @ new.Sigma[t]) - m + ld_prev - ld_new + dm @ P @ dm
                    + np.trace(dK.T @ P @ dK @ cov[t]))
        total += max(kl, 0.0)
    return float(total)


@dataclass
class LQRResult:
    policy: LinearGaussianPolicy
    eta: float
    kl: float


ETA_MIN, ETA_MAX = 1e-12, 1e12


def lqr_backward(dyn: DynamicsModel, quad: QuadraticCost, prev: LinearGaussianPolicy, kl_epsilon: float,
                 tol: float = 0.05, max_iter: int = 80) -> LQRResult:
    """KL-constrained LQR update.

    Solves ``min E[cost] s.t. E[KL(new || prev)] <= kl_epsilon * T`` through
    its dual variable ``eta`` (bisection in log space); ``kl_epsilon`` is a
    per-timestep budget.  New covariances are ``eta`` times the inverse
    action Hessian of the KL-augmented problem.
    """
    T = quad.C.shape[0]

    def solve(eta):
        pol = _backward(dyn, quad, prev, eta)
        mu, cov = state_marginals(dyn, pol)
        return pol, policy_kl(pol, prev, mu, cov)

    pol, kl = solve(ETA_MIN)
    if not math.isfinite(kl_epsilon) or kl <= kl_epsilon * T:
        return LQRResult(pol, ETA_MIN, kl)
    target = kl_epsilon * T
    lo, hi = math.log(ETA_MIN), math.log(ETA_MAX)
    best = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        pol, kl = solve(math.exp(mid))
        if kl > target:
            lo = mid
        else:
            hi = mid
            best = LQRResult(pol, math.exp(mid), kl)
            if kl >= (1 - tol) * target:
                break
    if best is None:
        pol, kl = solve(ETA_MAX)
        best = LQRResult(pol, ETA_MAX, kl)
    return best


def floor_covariance(policy: LinearGaussianPolicy, min_std: float) -> LinearGaussianPolicy:
    """Raise every eigenvalue of every Sigma_t to at least ``min_std**2``."""
    out = policy.copy()
    for t in range(out.T):
        out.Sigma[t] = clamp_psd(out.Sigma[t], min_std ** 2)
    return out


# --------------------------------------------------------------------------- path-integral correction


def cost_to_go(costs: np.ndarray) -> np.ndarray:
    """Reverse cumulative sums along time: S[m, t] = sum_{s >= t} costs[m, s]."""
    return np.cumsum(costs[:, ::-1], axis=1)[:, ::-1]


def pi2_weights(S: np.ndarray, temperature: float) -> np.ndarray:
    """Softmin weights over rollouts of one cost-to-go column."""
    S = np.asarray(S, dtype=float)
    w = np.exp(-(S - S.min()) / temperature)
    return w / w.sum()


def pi2_update(policy: LinearGaussianPolicy, states: np.ndarray, actions: np.ndarray, costs: np.ndarray,
               temperature: float = 1.0, blend: float = 0.5) -> LinearGaussianPolicy:
    """Blend offsets towards the cost-weighted feedforward part of sampled actions.

    ``states`` (M, T, n), ``actions`` (M, T, m), ``costs`` (M, T).  Gains and
    covariances are left unchanged.
    """
    if states.shape[0] < 2:
        raise ValueError("PI2 needs at least 2 rollouts")
    S = cost_to_go(np.asarray(costs, dtype=float))
    out = policy.copy()
    for t in range(policy.T):
        w = pi2_weights(S[:, t], temperature)
        ff = actions[:, t] - states[:, t] @ policy.K[t].T
        out.k[t] = (1 - blend) * policy.k[t] + blend * (w @ ff)
    return out


# --------------------------------------------------------------------------- training loop


@dataclass
class Sample:
    states: np.ndarray  # (T, n)
    actions: np.ndarray  # (T, m)
    costs: np.ndarray  # (T,) reported per-step cost
    solved: bool = False
    info: object = None


class Problem(Protocol):
    T: int
    state_dim: int
    action_dim: int

    def sample(self, policy: LinearGaussianPolicy, rng: np.random.Generator | None) -> Sample:
        ...

    def quadratize(self, samples: Sequence[Sample], action_lambda: float) -> QuadraticCost:
        ...


@dataclass
class CurvePoint:
    iteration: int
    mean_cost: float
    kl_epsilon: float
    success_rate: float


@dataclass
class TrainResult:
    policy: LinearGaussianPolicy
    curve: list
    best_iteration: int
    final_policy: LinearGaussianPolicy | None = None


def optimize(problem: Problem, cfg: OptimizerConfig, rng: np.random.Generator,
             policy: LinearGaussianPolicy | None = None,
             callback: Callable | None = None) -> TrainResult:
    """Alternate sampling, model fitting, KL-constrained LQR and PI2.

    The learning curve holds the mean reported cost of every sampled batch:
    ``iterations`` learning batches followed by one evaluation batch of the
    final policy.  The returned policy is the one whose batch scored best.
    """
    if policy is None:
        policy = LinearGaussianPolicy.initial(problem.T, problem.state_dim, cfg.explore_std, problem.action_dim)
    eps = cfg.kl_epsilon
    curve = []
    best = (math.inf, policy, 0, None)
    history = []
    prev_cost = None
    for it in range(cfg.iterations + 1):
        seeds = rng.integers(0, 2**63 - 1, size=cfg.rollouts_per_iter)
        samples = [problem.sample(policy, np.random.default_rng(int(s))) for s in seeds]
        mean_cost = float(np.mean([s.costs.sum() for s in samples]))
        rate = float(np.mean([s.solved for s in samples]))
        curve.append(CurvePoint(it, mean_cost, eps, rate))
        log.info("iter %d mean cost %.5g success %.2f kl_eps %.3g", it, mean_cost, rate, eps)
        if callback is not None:
            callback(it, policy, samples)
        if mean_cost < best[0]:
            best = (mean_cost, policy, it, samples)
        if it == cfg.iterations:
            break
        if prev_cost is not None:
            eps *= cfg.kl_shrink if mean_cost > prev_cost else cfg.kl_grow
        prev_cost = mean_cost
        base, base_samples = policy, samples
        X = np.stack([s.states for s in base_samples])
        U = np.stack([s.actions for s in base_samples])
        history.append(list(zip(X, U)))
        pooled = [r for batch in history[-(cfg.reuse_batches + 1):] for r in batch]
        dyn = fit_dynamics(pooled, cfg.fit_window, cfg.ridge_lambda)
        quad = problem.quadratize(base_samples, cfg.action_cost_lambda)
        new = lqr_backward(dyn, quad, base, eps).policy
        if cfg.min_std > 0:
            new = floor_covariance(new, cfg.min_std)
        if cfg.pi2_blend > 0:
            # PI2 shift of the sampling policy's offsets, carried over to the LQR result
            C = np.stack([s.costs for s in base_samples]) + cfg.action_cost_lambda * np.sum(U ** 2, axis=2)
            shifted = pi2_update(base, X, U, C, cfg.pi2_temperature, cfg.pi2_blend)
            new.k += shifted.k - base.k
        policy = new
    return TrainResult(best[1], curve, best[2], final_policy=policy)
