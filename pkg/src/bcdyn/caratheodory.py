"""Caratheodory solutions: the nearest-neighbor assignment for kappa = 1 and segment-wise integration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrator import Event, StepControl, fd_derivatives
from .krasovsky import ResidualReport, _sample, active_manifolds, tie_resolutions
from .model import (
    ConfigError,
    Kernel,
    MetricModel,
    Model,
    TopologicalModel,
    adjacency,
    as_positions,
    field_from_adjacency,
    scale_of,
    sq_distances,
    vector_field,
)
from .segments import (
    EventCounter,
    FrozenField,
    PiecewiseTrajectory,
    Segment,
    describe,
    metric_switches,
    run_segment,
    topological_switches,
)


class UnsupportedMode(ConfigError):
    pass


@dataclass(frozen=True)
class GammaGraph:
    """Total map i -> Gamma(i); ``step[i]`` records which construction step set it (1, 2 or 3)."""

    gamma: tuple[int, ...]
    step: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.gamma)

    def __getitem__(self, i: int) -> int:
        return self.gamma[i]

    def adjacency(self) -> np.ndarray:
        N = len(self.gamma)
        A = np.zeros((N, N))
        A[np.arange(N), list(self.gamma)] = 1.0
        return A

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j in enumerate(self.gamma)]


def _gamma_of(gamma, l: int) -> int:
    g = gamma[l]
    if g is None or g < 0:
        raise ValueError(f"Gamma({l}) is not assigned")
    return int(g)


def psi(x, kernel: Kernel, gamma, i: int, l: int) -> float:
    """(x_l - x_i) . (a(|x_G(l) - x_l|)(x_G(l) - x_l) - a(|x_l - x_i|)(x_l - x_i))."""
    x = as_positions(x)
    g = _gamma_of(gamma, l)
    u = x[g] - x[l]
    w = x[l] - x[i]
    a_u = float(kernel(np.linalg.norm(u)))
    a_w = float(kernel(np.linalg.norm(w)))
    return float(w @ (a_u * u - a_w * w))


def nearest_sets(x) -> list[list[int]]:
    """A_i = argmin_{j != i} |x_j - x_i| with exact comparisons."""
    d2 = sq_distances(as_positions(x))
    np.fill_diagonal(d2, np.inf)
    m = d2.min(axis=1)
    return [[int(j) for j in np.flatnonzero(d2[i] == m[i])] for i in range(d2.shape[0])]


def build_gamma(x, kernel: Kernel, kappa: int = 1) -> GammaGraph:
    """Assign one nearest neighbor to every agent so the frozen flow stays admissible.

    Unique nearest neighbors are taken first.  Remaining agents are paired
    with mutually nearest unassigned agents (lowest index first).  Whoever is
    left picks, among its nearest agents (all assigned by then), the one
    minimizing psi, ties going to the lowest index.  Only kappa = 1 is supported.
    """
    if kappa != 1:
        raise UnsupportedMode(f"the nearest-neighbor assignment needs kappa = 1, got {kappa}")
    x = as_positions(x)
    N = x.shape[0]
    if N < 2:
        raise ConfigError("need at least two agents")
    A = nearest_sets(x)
    gamma = [-1] * N
    step = [0] * N
    for i in range(N):
        if len(A[i]) == 1:
            gamma[i] = A[i][0]
            step[i] = 1
    for i in range(N):
        if gamma[i] >= 0:
            continue
        for j in A[i]:
            if gamma[j] < 0 and i in A[j]:
                gamma[i], gamma[j] = j, i
                step[i] = step[j] = 2
                break
    while True:
        free = [i for i in range(N) if gamma[i] < 0]
        if not free:
            break
        for i in free:
            if all(gamma[l] >= 0 for l in A[i]):
                vals = [psi(x, kernel, gamma, i, l) for l in A[i]]
                gamma[i] = A[i][int(np.argmin(vals))]
                step[i] = 3
                break
        else:
            raise RuntimeError("neighbor assignment stalled; some agent has no assigned candidate")
    return GammaGraph(tuple(gamma), tuple(step))


def carath_rhs(x, kernel: Kernel, gamma) -> np.ndarray:
    x = as_positions(x)
    g = gamma.gamma if isinstance(gamma, GammaGraph) else tuple(gamma)
    A = np.zeros((len(g), len(g)))
    A[np.arange(len(g)), list(g)] = 1.0
    return field_from_adjacency(x, kernel, A)


def validity_margin(x, gamma, tol_coincide: float = 1e-12) -> float:
    """min over i and k outside {i, Gamma(i)} of |x_i - x_k| - |x_i - x_Gamma(i)|.

    Competitors sitting on Gamma(i) (within ``tol_coincide`` times the
    configuration scale) are not counted.  Returns inf when nothing is
    compared.
    """
    x = as_positions(x)
    g = gamma.gamma if isinstance(gamma, GammaGraph) else tuple(gamma)
    N = x.shape[0]
    d = np.sqrt(sq_distances(x))
    tc = tol_coincide * scale_of(x)
    best = np.inf
    for i in range(N):
        gi = g[i]
        for k in range(N):
            if k == i or k == gi or d[k, gi] <= tc:
                continue
            best = min(best, d[i, k] - d[i, gi])
    return float(best)


def _is_gamma_case(spec: Model) -> bool:
    return isinstance(spec, TopologicalModel) and spec.kappa == 1


def _graph_at(x: np.ndarray, spec: Model, kernel: Kernel) -> np.ndarray:
    if _is_gamma_case(spec):
        return build_gamma(x, kernel).adjacency()
    return adjacency(x, spec)


def _as_adjacency(graph, N: int) -> np.ndarray:
    if isinstance(graph, GammaGraph):
        return graph.adjacency()
    G = np.asarray(graph)
    if G.ndim == 1:
        if len(G) != N:
            raise ConfigError("neighbor map has the wrong length")
        A = np.zeros((N, N))
        A[np.arange(N), G.astype(int)] = 1.0
        return A
    if G.shape != (N, N):
        raise ConfigError("adjacency has the wrong shape")
    return G.astype(float)


def admissible_graphs(x, spec: Model, tol: float = 1e-9) -> list[tuple[dict, np.ndarray]]:
    """Graphs a solution may start with at x (one per tie resolution)."""
    return tie_resolutions(x, spec, tol)


def _check_admissible(A: np.ndarray, x: np.ndarray, spec: Model, tol: float) -> None:
    for _, B in admissible_graphs(x, spec, tol):
        if np.array_equal(A, B):
            return
    raise ConfigError("initial graph is not a tie resolution of the initial configuration")


def simulate_caratheodory(
    x0,
    spec: Model,
    kernel: Kernel,
    ctrl: StepControl | None = None,
    horizon: float = 10.0,
    initial_graph=None,
    stop_tol: float | None = None,
    tol_coincide: float = 1e-12,
    branch: str = "default",
) -> PiecewiseTrajectory:
    """Integrate frozen-graph segments, rebuilding the graph at every switching event.

    For kappa = 1 each segment uses :func:`build_gamma`; otherwise the
    pointwise graph.  ``initial_graph`` (adjacency matrix or neighbor map)
    replaces the first graph and must be one of the tie resolutions at x0;
    this is how the other continuations through a discontinuity are reached.
    ``stop_tol`` ends the run once the frozen field is that small.
    """
    if not horizon > 0:
        raise ConfigError("horizon must be positive")
    ctrl = StepControl() if ctrl is None else ctrl
    x = np.array(as_positions(x0), dtype=float)
    N = x.shape[0]
    spec.check(N)
    best_effort = isinstance(spec, TopologicalModel) and spec.kappa > 1
    traj = PiecewiseTrajectory(branch=branch, best_effort=best_effort)
    counter = EventCounter(ctrl)
    budget = [0]
    t = 0.0
    A = None
    if initial_graph is not None:
        A = _as_adjacency(initial_graph, N)
        _check_admissible(A, x, spec, 1e-9 * scale_of(x))
    while True:
        if A is None:
            A = _graph_at(x, spec, kernel)
        band = ctrl.manifold_band(x)
        if isinstance(spec, MetricModel):
            sw = metric_switches(A, spec.radius)
        else:
            coincide = tol_coincide * scale_of(x) if _is_gamma_case(spec) else None
            sw = topological_switches(x, A, coincide_tol=coincide)
        sw.tolerate(x, band)
        run = run_segment(
            FrozenField(A, kernel), sw, x, t, horizon, ctrl, band, stop_tol=stop_tol, step_budget=budget
        )
        traj.segments.append(Segment(t, run.t_stop, "frozen", A, run.times, run.states))
        x, t = run.x_stop, run.t_stop
        if run.fired is None:
            break
        counter.bump()
        traj.events.append(Event(t, describe(sw.label(run.fired))))
        A = None
    return traj


def caratheodory_branches(
    x0, spec: Model, kernel: Kernel, ctrl: StepControl | None = None, horizon: float = 10.0,
    tol: float = 1e-9,
) -> list[PiecewiseTrajectory]:
    """Run every admissible starting graph; keep those that do not switch immediately.

    A starting graph whose own manifold fires within the first ten steps is
    not a Caratheodory continuation (the flow pushes straight back across).
    """
    ctrl = StepControl() if ctrl is None else ctrl
    x = as_positions(x0)
    pointwise = _graph_at(x, spec, kernel)
    out = []
    for n, (prov, A) in enumerate(admissible_graphs(x, spec, tol * scale_of(x))):
        label = "pointwise" if np.array_equal(A, pointwise) else f"resolution-{n}"
        tr = simulate_caratheodory(x, spec, kernel, ctrl, horizon, initial_graph=A, branch=label)
        if tr.events and tr.events[0].time <= 10 * ctrl.h and len(tr.segments) > 1:
            first = tr.segments[0]
            if first.t1 - first.t0 <= 10 * ctrl.h:
                continue
        out.append(tr)
    return out


def verify_caratheodory(
    traj,
    spec: Model,
    kernel: Kernel,
    tol: float = 1e-6,
    tol_manifold: float = 1e-6,
    max_samples: int | None = None,
    t_min: float = -np.inf,
    t_max: float = np.inf,
) -> ResidualReport:
    """Compare finite-difference velocities with the pointwise field away from manifolds."""
    times, states = traj.times, traj.states
    idx, deriv = fd_derivatives(times, states)
    keep = (times[idx] >= t_min) & (times[idx] <= t_max)
    idx, deriv = idx[keep], deriv[keep]
    worst, bad, checked, witness = 0.0, 0, 0, []
    for p in _sample(idx, max_samples):
        x = states[idx[p]]
        if active_manifolds(x, spec, tol_manifold):
            continue
        r = float(np.max(np.abs(deriv[p] - vector_field(spec, kernel, x))))
        checked += 1
        worst = max(worst, r)
        if r > tol:
            bad += 1
            witness.append(float(times[idx[p]]))
    return ResidualReport(worst, bad, checked, tol, witness)
