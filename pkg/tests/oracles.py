"""Reference implementations the tests compare against.

These deliberately share no code with the package: plain loops, textbook
formulas, and a dense least-squares solve instead of a backward recursion.
"""
from __future__ import annotations

import math

import numpy as np


def edge_cost(demo_pos: dict, imit_pos: dict, edges) -> float:
    """sum_w || (d_a - d_b) - (i_a - i_b) || over ``edges = [(a, b, w), ...]``."""
    total = 0.0
    for a, b, w in edges:
        sq = 0.0
        for k in range(3):
            r = (demo_pos[a][k] - demo_pos[b][k]) - (imit_pos[a][k] - imit_pos[b][k])
            sq += r * r
        total += w * math.sqrt(sq)
    return total


def smoothed_edge_cost(demo_pos: dict, imit_pos: dict, edges, gamma: float) -> float:
    total = 0.0
    for a, b, w in edges:
        sq = 0.0
        for k in range(3):
            r = (demo_pos[a][k] - demo_pos[b][k]) - (imit_pos[a][k] - imit_pos[b][k])
            sq += r * r
        total += w * math.sqrt(gamma + sq)
    return total


def yaw_point_mismatch(points, yaw_demo: float, yaw_imit: float) -> float:
    """Mean |R(yaw_i) p - R(yaw_d) p| over body-frame points (xy rotation by hand)."""
    acc = 0.0
    for p in points:
        xd = (math.cos(yaw_demo) * p[0] - math.sin(yaw_demo) * p[1], math.sin(yaw_demo) * p[0] + math.cos(yaw_demo) * p[1])
        xi = (math.cos(yaw_imit) * p[0] - math.sin(yaw_imit) * p[1], math.sin(yaw_imit) * p[0] + math.cos(yaw_imit) * p[1])
        acc += math.hypot(xd[0] - xi[0], xd[1] - xi[1])
    return acc / len(points)


def central_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        e = np.zeros_like(x, dtype=float)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def riccati(A, B, c, Q, R, N, q, r):
    """Finite-horizon LQR by the textbook Riccati recursion.

    Stage cost ``0.5 x'Qx + 0.5 u'Ru + x'Nu + q'x + r'u`` for t = 0..T-1,
    dynamics ``x+ = A x + B u + c`` for t = 0..T-2 (no terminal cost).
    Returns the affine feedback ``u_t = K_t x + k_t``.
    """
    T = len(Q)
    n = Q[0].shape[0]
    P = np.zeros((n, n))
    p = np.zeros(n)
    K = [None] * T
    k = [None] * T
    for t in reversed(range(T)):
        if t == T - 1:
            Hxx, Huu, Hux = Q[t], R[t], N[t].T
            hx, hu = q[t], r[t]
        else:
            Hxx = Q[t] + A[t].T @ P @ A[t]
            Huu = R[t] + B[t].T @ P @ B[t]
            Hux = N[t].T + B[t].T @ P @ A[t]
            hx = q[t] + A[t].T @ (P @ c[t] + p)
            hu = r[t] + B[t].T @ (P @ c[t] + p)
        K[t] = -np.linalg.solve(Huu, Hux)
        k[t] = -np.linalg.solve(Huu, hu)
        P = Hxx + Hux.T @ K[t]
        P = 0.5 * (P + P.T)
        p = hx + Hux.T @ k[t]
    return np.array(K), np.array(k)


def lq_open_loop(A, B, c, Q, R, N, q, r, x0):
    """Optimal action sequence from ``x0`` by one dense quadratic program.

    Stacks every action into one vector, writes the states as affine
    functions of it and solves the normal equations.
    """
    T = len(Q)
    n, m = Q[0].shape[0], R[0].shape[0]
    # x_t = F_t x0 + G_t U + h_t
    F = [np.eye(n)]
    G = [np.zeros((n, T * m))]
    h = [np.zeros(n)]
    for t in range(T - 1):
        Gt = A[t] @ G[t]
        Gt[:, t * m:(t + 1) * m] += B[t]
        F.append(A[t] @ F[t])
        G.append(Gt)
        h.append(A[t] @ h[t] + c[t])
    H = np.zeros((T * m, T * m))
    g = np.zeros(T * m)
    for t in range(T):
        S = np.zeros((m, T * m))
        S[:, t * m:(t + 1) * m] = np.eye(m)
        xa = F[t] @ x0 + h[t]
        H += G[t].T @ Q[t] @ G[t] + S.T @ R[t] @ S + G[t].T @ N[t] @ S + S.T @ N[t].T @ G[t]
        g += G[t].T @ (Q[t] @ xa + q[t]) + S.T @ (N[t].T @ xa + r[t])
    U = np.linalg.solve(H, -g)
    return U.reshape(T, m)
