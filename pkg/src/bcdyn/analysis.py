"""Property checks along trajectories: average, support, clusters, Lyapunov monitors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .hull import hull_membership
from .krasovsky import active_manifolds, limit_field_vertices
from .model import (
    Kernel,
    MetricModel,
    Model,
    TopologicalModel,
    adjacency,
    as_positions,
    diameter,
    sq_distances,
    vector_field,
)


@dataclass
class PropertyReport:
    property: str
    passed: bool
    deviation: float
    witness_t: list[float] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "property": self.property,
            "pass": bool(self.passed),
            "deviation": float(self.deviation),
            "witness_t": [float(t) for t in self.witness_t[:20]],
        }
        if self.details:
            out["details"] = self.details
        return out


def _samples(traj) -> tuple[np.ndarray, np.ndarray]:
    return np.asarray(traj.times, dtype=float), np.asarray(traj.states, dtype=float)


def check_average_invariance(traj, tol: float = 1e-6) -> PropertyReport:
    """max_t |mean(x(t)) - mean(x(0))| against tol."""
    times, states = _samples(traj)
    avg = states.mean(axis=1)
    drift = np.linalg.norm(avg - avg[0], axis=1)
    worst = float(drift.max())
    ok = worst <= tol
    witness = [] if ok else [float(times[int(np.argmax(drift))])]
    return PropertyReport("P1", ok, worst, witness, {"final_drift": float(drift[-1])})


def nested_time_pairs(times: np.ndarray, count: int = 10) -> list[tuple[int, int]]:
    """``count`` index pairs (a, b), a < b, spread over the sample range."""
    m = len(times)
    if m < 2:
        return []
    grid = np.unique(np.linspace(0, m - 1, count + 1).round().astype(int))
    pairs = [(int(grid[k]), int(grid[k + 1])) for k in range(len(grid) - 1)]
    if len(pairs) < count and len(grid) > 2:
        pairs += [(int(grid[0]), int(g)) for g in grid[2:]][: count - len(pairs)]
    return pairs[:count]


def check_support_contractivity(
    traj, tol: float = 1e-7, sample_pairs: Sequence[tuple[int, int]] | int = 10
) -> PropertyReport:
    """Every x_i(T2) must lie in conv{x_j(T1)} for T1 < T2.

    ``sample_pairs`` is a list of sample-index pairs or a count of evenly
    spread consecutive pairs.
    """
    times, states = _samples(traj)
    pairs = nested_time_pairs(times, sample_pairs) if isinstance(sample_pairs, int) else list(sample_pairs)
    worst, witness = 0.0, []
    for a, b in pairs:
        if not times[a] < times[b]:
            raise ValueError("time pairs must satisfy T1 < T2")
        pts = states[a]
        for xi in states[b]:
            res = hull_membership(pts, xi, tol)
            worst = max(worst, res.distance)
            if not res.inside:
                witness.append(float(times[b]))
                break
    return PropertyReport("P2", not witness, worst, witness, {"pairs": len(pairs)})


@dataclass
class ClusterPartition:
    blocks: list[list[int]]
    representatives: np.ndarray
    is_cluster_point: bool

    def block_of(self) -> np.ndarray:
        lab = np.empty(sum(len(b) for b in self.blocks), dtype=int)
        for k, b in enumerate(self.blocks):
            lab[b] = k
        return lab

    def separation(self) -> float:
        """Smallest distance between block representatives (inf for one block)."""
        R = self.representatives
        if len(R) < 2:
            return float("inf")
        return float(np.sqrt(sq_distances(R) + np.diag(np.full(len(R), np.inf))).min())

    def to_json(self) -> dict:
        return {
            "blocks": [[i + 1 for i in b] for b in self.blocks],
            "representatives": self.representatives.tolist(),
            "is_cluster_point": bool(self.is_cluster_point),
        }


def detect_clusters(x, spec: Model, eps_cluster: float | None = None) -> ClusterPartition:
    """Blocks of agents linked by distances <= eps_cluster, and the cluster-point test."""
    x = as_positions(x)
    if eps_cluster is None:
        eps_cluster = 1e-6 * (1.0 + diameter(x))
    if not eps_cluster > 0:
        raise ValueError("eps_cluster must be positive")
    close = np.sqrt(sq_distances(x)) <= eps_cluster
    ncomp, labels = connected_components(csr_matrix(close), directed=False)
    blocks = [sorted(np.flatnonzero(labels == c).tolist()) for c in range(ncomp)]
    blocks.sort(key=lambda b: b[0])
    reps = np.array([x[b].mean(axis=0) for b in blocks])
    lab = np.empty(len(x), dtype=int)
    for k, b in enumerate(blocks):
        lab[b] = k
    A = adjacency(x, spec)
    cluster_point = all(lab[j] == lab[i] for i, j in zip(*np.nonzero(A)))
    return ClusterPartition(blocks, reps, bool(cluster_point))


def lyapunov_V_metric(x, kernel: Kernel, radius: float = 1.0) -> float:
    """sum over ordered pairs i != j of I(min(|x_i - x_j|, radius))."""
    x = as_positions(x)
    d = np.sqrt(sq_distances(x))
    off = ~np.eye(len(x), dtype=bool)
    return float(kernel.integral(np.minimum(d[off], radius)).sum())


def lyapunov_W_topological(x, kernel: Kernel, kappa: int) -> float:
    """sum_i sum_{j in N_i(x)} I(|x_j - x_i|) with the tie-broken neighbor sets."""
    x = as_positions(x)
    A = adjacency(x, TopologicalModel(kappa))
    d = np.sqrt(sq_distances(x))
    return float(kernel.integral(d[A > 0]).sum())


def _pair_distances(states: np.ndarray) -> np.ndarray:
    """|x_i - x_j| for a stack of configurations, shape (m, N, N)."""
    diff = states[:, :, None, :] - states[:, None, :, :]
    return np.sqrt(np.einsum("mijk,mijk->mij", diff, diff))


class LyapunovFn:
    """V (metric) or W (topological) evaluated on one configuration or a stack of them."""

    def __init__(self, spec: Model, kernel: Kernel):
        self.spec = spec
        self.kernel = kernel
        self.name = "V" if isinstance(spec, MetricModel) else "W"

    def __call__(self, x) -> float:
        if self.name == "V":
            return lyapunov_V_metric(x, self.kernel, self.spec.radius)
        return lyapunov_W_topological(x, self.kernel, self.spec.kappa)

    def batch(self, states: np.ndarray, chunk: int = 2048) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        m, N = states.shape[:2]
        out = np.empty(m)
        eye = np.eye(N, dtype=bool)
        for a in range(0, m, chunk):
            d = _pair_distances(states[a : a + chunk])
            if self.name == "V":
                vals = self.kernel.integral(np.minimum(d, self.spec.radius))
                vals[:, eye] = 0.0
            else:
                d[:, eye] = np.inf
                # W depends on distances only, so tie-breaking does not change it
                vals = self.kernel.integral(np.sort(d, axis=2)[:, :, : self.spec.kappa])
            out[a : a + chunk] = vals.reshape(len(vals), -1).sum(axis=1)
        return out


def lyapunov_for(spec: Model, kernel: Kernel) -> tuple[str, LyapunovFn]:
    fn = LyapunovFn(spec, kernel)
    return fn.name, fn


def monitor_monotonicity(
    traj,
    scalar_fn: Callable[[np.ndarray], float],
    tol: float = 1e-8,
    skip_events: bool = False,
    name: str = "monotone",
) -> PropertyReport:
    """Largest increase of scalar_fn between consecutive samples.

    With ``skip_events`` the increments over intervals containing an event
    time are ignored.  ``details["positive_fraction"]`` is the share of
    increments that are strictly positive.
    """
    times, states = _samples(traj)
    batch = getattr(scalar_fn, "batch", None)
    vals = batch(states) if batch is not None else np.array([scalar_fn(x) for x in states])
    inc = np.diff(vals)
    keep = np.ones(len(inc), dtype=bool)
    if skip_events:
        for ev in getattr(traj, "events", []):
            hit = (times[:-1] <= ev.time) & (ev.time <= times[1:])
            keep &= ~hit
    inc_k = inc[keep]
    worst = float(max(inc_k.max(initial=0.0), 0.0))
    bad = np.flatnonzero(keep & (inc > tol))
    positive = float(np.mean(inc_k > 0)) if len(inc_k) else 0.0
    return PropertyReport(
        name,
        len(bad) == 0,
        worst,
        [float(times[k + 1]) for k in bad[:20]],
        {"positive_fraction": positive, "increments": int(len(inc_k)), "series_start": float(vals[0]), "series_end": float(vals[-1])},
    )


def pseudoforest_check(graph, N: int | None = None) -> tuple[bool, dict]:
    """Out-degree-one graph whose every weak component holds one 2-cycle.

    ``graph`` is a neighbor map (sequence with graph[i] = Gamma(i)), an edge
    list of (i, j) pairs or a square adjacency matrix.
    """
    succ = _successors(graph, N)
    n = len(succ)
    diag: dict = {"components": [], "problems": []}
    if any(s is None for s in succ):
        diag["problems"].append("out-degree differs from one")
        return False, diag
    if any(succ[i] == i for i in range(n)):
        diag["problems"].append("self-loop")
        return False, diag
    rows = np.arange(n)
    G = csr_matrix((np.ones(n), (rows, np.array(succ))), shape=(n, n))
    ncomp, labels = connected_components(G, directed=True, connection="weak")
    ok = True
    for c in range(ncomp):
        members = np.flatnonzero(labels == c).tolist()
        # walking n steps from any member lands on the component's unique cycle
        v = members[0]
        for _ in range(n):
            v = succ[v]
        cycle = [v]
        w = succ[v]
        while w != v:
            cycle.append(w)
            w = succ[w]
        good = len(cycle) == 2
        ok &= good
        diag["components"].append({"agents": [m + 1 for m in members], "cycle": [u + 1 for u in cycle]})
        if not good:
            diag["problems"].append(f"cycle of length {len(cycle)} in component {c + 1}")
    return bool(ok), diag


def _successors(graph, N):
    if isinstance(graph, np.ndarray) and graph.ndim == 2:
        out = []
        for row in graph:
            nz = np.flatnonzero(row)
            out.append(int(nz[0]) if len(nz) == 1 else None)
        return out
    items = list(graph.gamma) if hasattr(graph, "gamma") else list(graph)
    if items and isinstance(items[0], (tuple, list)):
        n = N if N is not None else 1 + max(max(e) for e in items)
        succ: list = [None] * n
        seen = [0] * n
        for i, j in items:
            seen[i] += 1
            succ[i] = int(j)
        return [s if c == 1 else None for s, c in zip(succ, seen)]
    return [int(v) for v in items]


def krasovsky_gap(x, spec: Model, kernel: Kernel, tol_manifold: float = 1e-9) -> float:
    """Distance from 0 to the Krasovsky set at x (the field norm off manifolds)."""
    x = as_positions(x)
    if not active_manifolds(x, spec, tol_manifold * (1.0 + np.linalg.norm(x))):
        return float(np.linalg.norm(vector_field(spec, kernel, x)))
    verts = limit_field_vertices(x, spec, kernel, tol_manifold * (1.0 + np.linalg.norm(x)))
    return hull_membership(verts.stacked(), np.zeros(x.size), tol=1e-12).distance


def detect_convergence(
    traj,
    spec: Model,
    kernel: Kernel,
    eps_conv: float = 1e-8,
    window: float = 1.0,
    eps_cluster: float | None = None,
) -> ClusterPartition | None:
    """Terminal partition if the field stays below eps_conv over the trailing window."""
    times, states = _samples(traj)
    if eps_cluster is None:
        eps_cluster = 1e-6 * (1.0 + diameter(states[0]))
    t_end = times[-1]
    if times[0] > t_end - window:
        return None
    # window starts at the last sample at or before t_end - window
    start = int(np.searchsorted(times, t_end - window, side="right")) - 1
    idx = np.arange(start, len(times))
    stride = max(1, len(idx) // 50)
    for k in list(idx[::stride]) + [idx[-1]]:
        if krasovsky_gap(states[k], spec, kernel) > eps_conv:
            return None
    first = detect_clusters(states[idx[0]], spec, eps_cluster)
    last = detect_clusters(states[idx[-1]], spec, eps_cluster)
    if first.blocks != last.blocks:
        return None
    return last


def is_caratheodory_equilibrium(x, spec: Model, kernel: Kernel) -> bool:
    return bool(np.all(vector_field(spec, kernel, as_positions(x)) == 0.0))


def property_suite(traj, spec: Model, kernel: Kernel, solution: str = "caratheodory") -> list[PropertyReport]:
    """P1, P2, convergence and the Lyapunov monitor for one trajectory."""
    times, states = _samples(traj)
    scale = 1.0 + float(np.linalg.norm(states[0]))
    reports = [check_average_invariance(traj), check_support_contractivity(traj)]
    part = detect_convergence(traj, spec, kernel, eps_conv=1e-6)
    if part is None:
        reports.append(PropertyReport("P3", False, float("nan"), [float(times[-1])], {"converged": False}))
    else:
        reports.append(
            PropertyReport(
                "P3", part.is_cluster_point, 0.0, [] if part.is_cluster_point else [float(times[-1])],
                {"converged": True, "clusters": part.to_json()},
            )
        )
    name, fn = lyapunov_for(spec, kernel)
    reports.append(monitor_monotonicity(traj, fn, 1e-8 * scale, skip_events=isinstance(spec, MetricModel), name=f"{name}-monotone"))
    return reports
