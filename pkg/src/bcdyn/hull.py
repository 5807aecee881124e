"""Distance from a point to the convex hull of a finite point set.

Uses Wolfe's minimum-norm-point algorithm on the shifted set {v - p}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class HullConvergenceError(ArithmeticError):
    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


@dataclass(frozen=True)
class HullResult:
    inside: bool
    distance: float
    weights: np.ndarray  # convex weights over the input points
    nearest: np.ndarray


def _affine_minimizer(Q: np.ndarray) -> np.ndarray:
    """Weights mu (sum 1) minimising |mu @ Q| over the affine hull of the rows of Q."""
    k = Q.shape[0]
    if k == 1:
        return np.ones(1)
    # difference form is invariant to the overall scale of Q
    D = (Q[1:] - Q[0]).T
    c, *_ = np.linalg.lstsq(D, -Q[0], rcond=None)
    return np.concatenate([[1.0 - c.sum()], c])


def min_norm_point(P: np.ndarray, rel_tol: float = 1e-14, max_iter: int = 10_000):
    """Minimum-norm point of conv(rows of P).  Returns (point, weights)."""
    P = np.asarray(P, dtype=float)
    m = P.shape[0]
    norms2 = np.einsum("ij,ij->i", P, P)
    zero_tol = 0.0

    s0 = int(np.argmin(norms2))
    S = [s0]
    lam = np.array([1.0])
    x = P[s0].copy()

    for _ in range(max_iter):
        dots = P @ x
        j = int(np.argmin(dots))
        gap = float(x @ x - dots[j])
        # local scale: rounding in x.P_j is bounded by eps * max(|x|^2, |P_j|^2)
        if gap <= rel_tol * max(x @ x, norms2[j]) or j in S:
            w = np.zeros(m)
            w[S] = lam
            return x, w
        S.append(j)
        lam = np.append(lam, 0.0)
        prev = x
        # minor cycles: move toward the affine minimiser while staying in the simplex
        while True:
            mu = _affine_minimizer(P[S])
            if np.all(mu > zero_tol):
                lam = mu
                break
            neg = mu <= zero_tol
            ratios = lam[neg] / np.maximum(lam[neg] - mu[neg], 1e-300)
            theta = float(min(1.0, ratios.min()))
            lam = lam + theta * (mu - lam)
            keep = lam > zero_tol
            if keep.all():
                # numerical safeguard: drop the smallest weight
                keep[int(np.argmin(lam))] = False
            S = [s for s, kflag in zip(S, keep) if kflag]
            lam = lam[keep]
            lam = lam / lam.sum()
            if len(S) == 1:
                break
        x = lam @ P[S]
        if j not in S and x @ x >= prev @ prev:
            # the new vertex was dropped again without progress: rounding-level optimum
            w = np.zeros(m)
            w[S] = lam
            return x, w

    dots = P @ x
    raise HullConvergenceError(
        "minimum-norm-point iteration did not converge",
        gap=float(x @ x - dots.min()),
    )


def hull_membership(points, p, tol: float = 1e-8, max_iter: int = 10_000) -> HullResult:
    """Report whether ``p`` lies within ``tol`` of conv(points)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise ValueError("empty point set")
    if not tol > 0:
        raise ValueError("tol must be positive")
    p = np.asarray(p, dtype=float).reshape(pts.shape[1])
    z, w = min_norm_point(pts - p, max_iter=max_iter)
    dist = float(np.linalg.norm(z))
    return HullResult(inside=dist <= tol, distance=dist, weights=w, nearest=z + p)
