"""Independent reference computations used by the tests.

Nothing here imports the engines under test: hull distances come from face
enumeration, trajectories from closed forms.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def hull_distance_faces(points: np.ndarray, p: np.ndarray) -> float:
    """Distance from p to conv(points) by projecting onto every face of dimension <= n."""
    P = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(p, dtype=float)
    m, n = P.shape
    best = min(float(np.linalg.norm(v)) for v in P)
    for k in range(2, min(m, n + 1) + 1):
        for S in itertools.combinations(range(m), k):
            Q = P[list(S)]
            D = (Q[1:] - Q[0]).T
            if np.linalg.matrix_rank(D) < k - 1:
                continue
            c = np.linalg.solve(D.T @ D, -D.T @ Q[0])
            mu = np.concatenate([[1.0 - c.sum()], c])
            if np.all(mu >= -1e-12):
                best = min(best, float(np.linalg.norm(mu @ Q)))
    return best


def general_position(rng, N, n, side=2.0, gap=1e-6):
    """Random positions whose pairwise-distance comparisons are all strict (by gap)."""
    while True:
        x = rng.uniform(0.0, side, size=(N, n))
        d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
        vals = np.sort(d[np.triu_indices(N, 1)])
        if N < 3 or np.min(np.diff(vals)) > gap:
            if np.all(np.abs(vals - 1.0) > gap):
                return x


# closed-form solutions of the worked examples (a = 1)


def metric_classical(t: float) -> np.ndarray:
    """From (-1/3, 0, 1): agents 1 and 2 meet, agent 3 stays."""
    e = math.exp(-2 * t)
    return np.array([-1 / 6 - e / 6, -1 / 6 + e / 6, 1.0])


def topological_sliding(t: float) -> np.ndarray:
    return np.array([0.0, -math.exp(-t), math.exp(-t)])


def merging(t: float) -> np.ndarray:
    e = math.exp(-t)
    return np.array([1 - t * e - 2 * e, 1 - e, 1.0, 1.0])


def kappa2_example(t: float) -> np.ndarray:
    x5 = 3 - math.exp(-3 * t)
    return np.array([-9, -9, -9, -x5, x5, 9, 9, 9], dtype=float)


def y_config(y: float) -> np.ndarray:
    return np.array([-1 - y, -1 + y, 0.0, 1 - y, 1 + y])


def kappa1_sliding(t: float, y0: float) -> np.ndarray:
    return y_config(math.exp(-2 * t) * y0)


def metric_nonexistence(t: float) -> np.ndarray:
    """From (-2/3, 0, 2/3) until the outer pair reaches distance 1 at ln(4/3)."""
    a = (2 / 3) * math.exp(-t)
    return np.array([-a, 0.0, a])


def two_agents(t: float, x0: tuple[float, float]) -> np.ndarray:
    m = 0.5 * (x0[0] + x0[1])
    h = 0.5 * (x0[1] - x0[0]) * math.exp(-2 * t)
    return np.array([m - h, m + h])
