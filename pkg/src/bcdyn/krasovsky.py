"""Krasovsky solutions: limit fields at discontinuities, sliding modes and branching."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .hull import hull_membership
from .integrator import Event, StepControl, fd_derivatives, kernel_params
from .model import (
    ConfigError,
    Kernel,
    MetricModel,
    Model,
    TopologicalModel,
    adjacency,
    as_positions,
    field_from_adjacency,
    sq_distances,
    vector_field,
)
from .segments import (
    EventCounter,
    FrozenField,
    PiecewiseTrajectory,
    Segment,
    Switches,
    describe,
    metric_switches,
    run_segment,
    topological_switches,
)

MAX_RESOLUTIONS = 2**20


class CombinatorialBlowupError(RuntimeError):
    pass


class UnsupportedSliding(RuntimeError):
    def __init__(self, manifolds):
        names = ", ".join(describe(m) for m in manifolds)
        super().__init__(f"joint sliding on several manifolds is not supported: {names}")
        self.manifolds = list(manifolds)


class BranchBudgetError(RuntimeError):
    pass


class EventClass(str, Enum):
    CROSS_UP = "CrossUp"
    CROSS_DOWN = "CrossDown"
    SLIDE = "Slide"
    LEAVE = "Leave"


# ---------------------------------------------------------------- tie structure


@dataclass
class _AgentTie:
    strict: list[int]  # strictly nearer than the kappa-th distance
    tied: list[int]  # within tol of the kappa-th distance, nearest first
    slots: int  # how many of ``tied`` are neighbors


def _agent_ties(x: np.ndarray, kappa: int, tol: float) -> list[_AgentTie]:
    d = np.sqrt(sq_distances(x))
    out = []
    for i in range(x.shape[0]):
        order = [int(j) for j in np.argsort(d[i], kind="stable") if j != i]
        dk = d[i, order[kappa - 1]]
        strict = [j for j in order if d[i, j] < dk - tol]
        tied = [j for j in order if abs(d[i, j] - dk) <= tol]
        out.append(_AgentTie(strict, tied, kappa - len(strict)))
    return out


def _classes(x: np.ndarray, idx: list[int], tol: float) -> list[list[int]]:
    """Group indices whose positions coincide within tol (order preserved)."""
    groups: list[list[int]] = []
    for j in idx:
        for g in groups:
            if np.linalg.norm(x[j] - x[g[0]]) <= tol:
                g.append(j)
                break
        else:
            groups.append([j])
    return groups


def active_manifolds(x, spec: Model, tol: float = 1e-9) -> list[tuple]:
    """Discontinuity manifolds through x.

    Metric: pairs (i, j), i < j, with | |x_i - x_j| - radius | <= tol.
    Topological: triples (i, j, k), j < k, where j and k sit at agent i's
    kappa-th-nearest distance (within tol) and do not coincide.  Coincident
    candidates are represented by their lowest index.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x = as_positions(x)
    N = x.shape[0]
    if isinstance(spec, MetricModel):
        d = np.sqrt(sq_distances(x))
        return [
            (i, j)
            for i in range(N)
            for j in range(i + 1, N)
            if abs(d[i, j] - spec.radius) <= tol
        ]
    spec.check(N)
    out = []
    for i, tie in enumerate(_agent_ties(x, spec.kappa, tol)):
        if len(tie.tied) <= tie.slots:
            continue
        reps = sorted(min(g) for g in _classes(x, tie.tied, tol))
        out.extend((i, a, b) for a, b in itertools.combinations(reps, 2))
    return out


def tie_resolutions(x, spec: Model, tol: float = 1e-9) -> list[tuple[dict, np.ndarray]]:
    """Every interaction graph realizable as a one-sided limit at x.

    Returns ``(provenance, adjacency)`` pairs.  Metric: each boundary pair on
    or off.  Topological: for every tied agent, each choice of ``slots``
    candidates among the tied ones.
    """
    x = as_positions(x)
    N = x.shape[0]
    base = adjacency(x, spec)
    if isinstance(spec, MetricModel):
        pairs = active_manifolds(x, spec, tol)
        if 2 ** len(pairs) > MAX_RESOLUTIONS:
            raise CombinatorialBlowupError(f"{2 ** len(pairs)} boundary resolutions")
        out = []
        for mask in itertools.product((False, True), repeat=len(pairs)):
            A = base.copy()
            for (i, j), on in zip(pairs, mask):
                A[i, j] = A[j, i] = 1.0 if on else 0.0
            prov = {"on": [p for p, m in zip(pairs, mask) if m], "off": [p for p, m in zip(pairs, mask) if not m]}
            out.append((prov, A))
        return out
    spec.check(N)
    ties = _agent_ties(x, spec.kappa, tol)
    agents = [i for i, t in enumerate(ties) if len(t.tied) > t.slots]
    choices = [list(itertools.combinations(ties[i].tied, ties[i].slots)) for i in agents]
    total = 1
    for c in choices:
        total *= len(c)
        if total > MAX_RESOLUTIONS:
            raise CombinatorialBlowupError(f"more than {MAX_RESOLUTIONS} tie resolutions")
    out = []
    for combo in itertools.product(*choices):
        A = base.copy()
        for i, pick in zip(agents, combo):
            A[i] = 0.0
            A[i, ties[i].strict] = 1.0
            A[i, list(pick)] = 1.0
        out.append(({"neighbors": {i: list(p) for i, p in zip(agents, combo)}}, A))
    return out


@dataclass
class LimitFieldSet:
    vertices: list[np.ndarray]
    provenance: list[dict]

    def stacked(self) -> np.ndarray:
        return np.array([v.ravel() for v in self.vertices])

    def __len__(self) -> int:
        return len(self.vertices)


def limit_field_vertices(x, spec: Model, kernel: Kernel, tol: float = 1e-9) -> LimitFieldSet:
    """Generators of the Krasovsky set at x, deduplicated."""
    x = as_positions(x)
    seen = {}
    for prov, A in tie_resolutions(x, spec, tol):
        f = field_from_adjacency(x, kernel, A)
        key = f.tobytes()
        if key not in seen:
            seen[key] = (f, prov)
    verts = [v[0] for v in seen.values()]
    provs = [v[1] for v in seen.values()]
    return LimitFieldSet(verts, provs)


def krasovsky_distance(x, v, spec: Model, kernel: Kernel, tol_manifold: float = 1e-6) -> float:
    """Euclidean distance from velocity v to the convex hull of the limit fields at x."""
    verts = limit_field_vertices(x, spec, kernel, tol_manifold)
    v = np.asarray(v, dtype=float).ravel()
    if len(verts) == 1:
        return float(np.linalg.norm(verts.vertices[0].ravel() - v))
    return hull_membership(verts.stacked(), v, tol=1e-8).distance


def zero_in_krasovsky(x, spec: Model, kernel: Kernel, tol: float = 1e-8) -> bool:
    x = as_positions(x)
    verts = limit_field_vertices(x, spec, kernel, tol)
    return hull_membership(verts.stacked(), np.zeros(x.size), tol).inside


# ---------------------------------------------------------------- one manifold


def _canonical(label: tuple, x: np.ndarray, spec: Model, tol: float) -> tuple:
    if len(label) == 2:
        return (min(label), max(label))
    i, j, k = label
    if isinstance(spec, TopologicalModel):
        tie = _agent_ties(x, spec.kappa, tol)[i]
        for g in _classes(x, tie.tied, tol):
            if j in g:
                j = min(g)
            if k in g:
                k = min(g)
    return (i, min(j, k), max(j, k))


def side_graphs(x, spec: Model, manifold: tuple, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Adjacency on the theta < 0 side and on the theta > 0 side of a manifold.

    Metric theta = |x_i - x_j|^2 - r^2 (minus side: edge on).  Topological
    theta = |x_j - x_i|^2 - |x_k - x_i|^2 (minus side: j preferred over k).
    """
    x = as_positions(x)
    A = adjacency(x, spec)
    Am, Ap = A.copy(), A.copy()
    if len(manifold) == 2:
        i, j = manifold
        Am[i, j] = Am[j, i] = 1.0
        Ap[i, j] = Ap[j, i] = 0.0
        return Am, Ap
    i, j, k = manifold
    tie = _agent_ties(x, spec.kappa, tol)[i]
    groups = _classes(x, tie.tied, tol)
    gj = next((g for g in groups if j in g), [j])
    gk = next((g for g in groups if k in g), [k])
    rest = [t for t in tie.tied if t not in gj and t not in gk]
    for target, first, last in ((Am, gj, gk), (Ap, gk, gj)):
        order = list(first) + rest + list(last)
        target[i] = 0.0
        target[i, tie.strict] = 1.0
        target[i, order[: tie.slots]] = 1.0
    return Am, Ap


def theta(x, manifold: tuple, radius: float = 1.0) -> float:
    x = as_positions(x)
    if len(manifold) == 2:
        i, j = manifold
        return float(np.sum((x[i] - x[j]) ** 2) - radius**2)
    i, j, k = manifold
    return float(np.sum((x[j] - x[i]) ** 2) - np.sum((x[k] - x[i]) ** 2))


def theta_rate(x: np.ndarray, manifold: tuple, f: np.ndarray) -> float:
    """Directional derivative of theta along the velocity field f (both (N, n) arrays)."""
    if len(manifold) == 2:
        i, j = manifold
        return float(2.0 * np.dot(x[i] - x[j], f[i] - f[j]))
    i, j, k = manifold
    return float(
        2.0 * np.dot(x[j] - x[i], f[j] - f[i]) - 2.0 * np.dot(x[k] - x[i], f[k] - f[i])
    )


def _zero_tol(x, fm, fp) -> float:
    return 1e-12 * (1.0 + np.linalg.norm(x)) * (1.0 + max(np.linalg.norm(fm), np.linalg.norm(fp)))


def sliding_coefficient(x, manifold: tuple, f_minus, f_plus) -> float | None:
    """alpha in [0, 1] with grad(theta) . (alpha f- + (1 - alpha) f+) = 0, or None.

    When both sides are tangent every alpha works and 1/2 is returned.
    """
    x, f_minus, f_plus = as_positions(x), as_positions(f_minus), as_positions(f_plus)
    gm = theta_rate(x, manifold, f_minus)
    gp = theta_rate(x, manifold, f_plus)
    z = _zero_tol(x, f_minus, f_plus)
    if abs(gm) <= z and abs(gp) <= z:
        return 0.5
    if abs(gp - gm) <= z:
        return None
    alpha = gp / (gp - gm)
    if -1e-12 <= alpha <= 1.0 + 1e-12:
        return float(min(max(alpha, 0.0), 1.0))
    return None


def side_rates(x, manifold: tuple, spec: Model, kernel: Kernel, tol: float = 1e-9):
    """(g_minus, g_plus, f_minus, f_plus) for one manifold at x."""
    x = as_positions(x)
    Am, Ap = side_graphs(x, spec, manifold, tol)
    fm = field_from_adjacency(x, kernel, Am)
    fp = field_from_adjacency(x, kernel, Ap)
    return theta_rate(x, manifold, fm), theta_rate(x, manifold, fp), fm, fp


def classify_event(x, manifold: tuple, spec: Model, kernel: Kernel, tol: float = 1e-9) -> EventClass:
    gm, gp, fm, fp = side_rates(x, manifold, spec, kernel, tol)
    z = _zero_tol(as_positions(x), fm, fp)
    if gp > z and gm > z:
        return EventClass.CROSS_UP
    if gp > z:
        return EventClass.LEAVE
    if gm >= -z:
        return EventClass.SLIDE
    return EventClass.CROSS_DOWN


class SlidingField:
    """alpha f- + (1 - alpha) f+ with alpha keeping theta stationary."""

    sliding = True

    def __init__(self, manifold: tuple, Am: np.ndarray, Ap: np.ndarray, kernel: Kernel, radius: float = 1.0):
        self.manifold = manifold
        self.kernel = kernel
        self.radius = radius
        self.fm = FrozenField(Am, kernel)
        self.fp = FrozenField(Ap, kernel)

    def compiled_args(self) -> tuple | None:
        kp = kernel_params(self.kernel)
        if kp is None:
            return None
        m = tuple(self.manifold) + (0,) * (3 - len(self.manifold))
        return (self.fm.A, self.fp.A, True, len(self.manifold), *m, float(self.radius), *kp)

    def _parts(self, x: np.ndarray):
        fm, fp = self.fm(x), self.fp(x)
        gm = theta_rate(x, self.manifold, fm)
        gp = theta_rate(x, self.manifold, fp)
        z = 1e-12 * (1.0 + abs(gm) + abs(gp))
        a = 0.5 if abs(gp - gm) <= z else gp / (gp - gm)
        return a, fm, fp

    def alpha(self, x: np.ndarray) -> float:
        return self._parts(x)[0]

    def exit_margins(self, x: np.ndarray) -> np.ndarray:
        a = self._parts(x)[0]
        return np.array([a, 1.0 - a])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        a, fm, fp = self._parts(x)
        return a * fm + (1.0 - a) * fp


def project_onto(manifold: tuple, radius: float = 1.0):
    """Map that restores theta = 0 by moving only the agents defining the manifold."""
    if len(manifold) == 2:
        i, j = manifold

        def proj(x):
            u = x[i] - x[j]
            nu = np.linalg.norm(u)
            if nu == 0:
                return x
            c = 0.5 * (x[i] + x[j])
            y = x.copy()
            y[i] = c + 0.5 * radius * u / nu
            y[j] = c - 0.5 * radius * u / nu
            return y

        return proj
    i, j, k = manifold

    def proj(x):
        w = x[k] - x[j]
        ww = float(w @ w)
        if ww == 0:
            return x
        m = 0.5 * (x[j] + x[k])
        y = x.copy()
        y[i] = x[i] - (float((x[i] - m) @ w) / ww) * w
        return y

    return proj


# ---------------------------------------------------------------- policies


@dataclass(frozen=True)
class Enumerate:
    """Breadth-first expansion of every admissible continuation."""

    max_branches: int = 16
    max_depth: int = 3
    exit_times: tuple = ()

    def __post_init__(self):
        if self.max_branches < 1 or self.max_depth < 0:
            raise ConfigError("branch limits must be positive")


@dataclass(frozen=True)
class Fixed:
    """One continuation per branch point, consumed in order; then 'pointwise'."""

    choices: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        for c in self.choices:
            _parse_choice(c)


Policy = Enumerate | Fixed


def _parse_choice(choice: str) -> tuple[str, float | None]:
    if choice in ("cross_minus", "cross_plus", "slide", "pointwise"):
        return choice, None
    if choice.startswith("slide@"):
        try:
            T = float(choice[6:])
        except ValueError:
            raise ConfigError(f"bad exit time in {choice!r}") from None
        if not T >= 0:
            raise ConfigError(f"bad exit time in {choice!r}")
        return "slide", T
    raise ConfigError(f"unknown branch choice {choice!r}")


def parse_policy(text: str) -> Policy:
    """'enumerate[:max_branches,max_depth[,T1;T2...]]' or a comma list of choices."""
    text = text.strip()
    if text.startswith("enumerate"):
        _, _, args = text.partition(":")
        if not args:
            return Enumerate()
        parts = args.split(",")
        mb = int(parts[0]) if parts[0] else 16
        md = int(parts[1]) if len(parts) > 1 and parts[1] else 3
        ex = tuple(float(v) for v in parts[2].split(";")) if len(parts) > 2 and parts[2] else ()
        return Enumerate(mb, md, ex)
    if not text:
        return Fixed(())
    return Fixed(tuple(c.strip() for c in text.split(",")))


# ---------------------------------------------------------------- simulation


@dataclass
class BranchNode:
    branch_id: int
    parent: int | None
    event: dict | None
    terminal_state: list | None = None

    def to_json(self) -> dict:
        return {
            "branch_id": self.branch_id,
            "parent": self.parent,
            "event": self.event,
            "terminal_state": self.terminal_state,
        }


class BranchSet(list):
    """Leaf trajectories of a Krasovsky run plus the full branch tree."""

    def __init__(self, leaves=(), nodes=()):
        super().__init__(leaves)
        self.nodes: list[BranchNode] = list(nodes)

    def to_json(self) -> dict:
        return {"nodes": [n.to_json() for n in self.nodes]}

    def by_label(self, label: str) -> PiecewiseTrajectory:
        for tr in self:
            if tr.branch == label:
                return tr
        raise KeyError(label)


@dataclass
class _Job:
    traj: PiecewiseTrajectory
    x: np.ndarray
    t: float
    depth: int
    fired: tuple | None = None  # manifold whose switch just fired
    pending: tuple | None = None  # (choice, manifold) to execute next
    choices_used: int = 0
    labels: list = field(default_factory=list)


def _frozen_switches(x, A, spec: Model, skip=None) -> Switches:
    if isinstance(spec, MetricModel):
        return metric_switches(A, spec.radius, skip=skip)
    return topological_switches(x, A, skip=skip)


def _manifold_skip(x, spec: Model, manifold: tuple, A: np.ndarray, tol: float):
    if len(manifold) == 2:
        return {manifold}
    i = manifold[0]
    tie = _agent_ties(x, spec.kappa, tol)[i]
    tied = set(tie.tied)
    return {(i, j, k) for j in tied for k in tied if A[i, j] and not A[i, k]}


class _Driver:
    def __init__(self, x0, spec, kernel, policy, ctrl, horizon, detect_tol):
        self.spec = spec
        self.kernel = kernel
        self.policy = policy
        self.ctrl = ctrl
        self.horizon = horizon
        self.detect_tol = detect_tol
        self.counter = EventCounter(ctrl)
        self.budget = [0]
        self.nodes: list[BranchNode] = []
        self.leaves: list[PiecewiseTrajectory] = []
        self.next_id = 0
        self.x0 = x0

    def _tol(self, x) -> float:
        return self.detect_tol * (1.0 + float(np.linalg.norm(x)))

    def new_node(self, parent, event) -> int:
        bid = self.next_id
        self.next_id += 1
        self.nodes.append(BranchNode(bid, parent, event))
        if isinstance(self.policy, Enumerate) and self.next_id > self.policy.max_branches:
            raise BranchBudgetError(f"more than max_branches={self.policy.max_branches} branches")
        return bid

    # -- one segment of each kind

    def frozen(self, job: _Job, A: np.ndarray, skip=None, note="") -> None:
        x, t = job.x, job.t
        band = self.ctrl.manifold_band(x)
        sw = _frozen_switches(x, A, self.spec, skip).tolerate(x, band)
        run = run_segment(FrozenField(A, self.kernel), sw, x, t, self.horizon, self.ctrl, band, step_budget=self.budget)
        job.traj.segments.append(Segment(t, run.t_stop, "frozen", A, run.times, run.states, note=note))
        job.x, job.t = run.x_stop, run.t_stop
        job.fired = None
        if run.fired is not None:
            label = sw.label(run.fired)
            self.counter.bump()
            job.traj.events.append(Event(run.t_stop, describe(label)))
            job.fired = _canonical(label, job.x, self.spec, self._tol(job.x))

    def slide(self, job: _Job, manifold: tuple, exit_time: float | None) -> None:
        x, t = job.x, job.t
        tol = self._tol(x)
        Am, Ap = side_graphs(x, self.spec, manifold, tol)
        radius = self.spec.radius if isinstance(self.spec, MetricModel) else 1.0
        sf = SlidingField(manifold, Am, Ap, self.kernel, radius)
        proj = project_onto(manifold, radius)
        x = proj(x)
        band = self.ctrl.manifold_band(x)
        base = _frozen_switches(x, Am, self.spec, _manifold_skip(x, self.spec, manifold, Am, tol))
        base.extra = sf.exit_margins
        base.extra_labels = ["alpha-exit", "alpha-exit"]
        base.tolerate(x, band)
        t_end = self.horizon if exit_time is None else min(self.horizon, max(exit_time, t))
        run = run_segment(sf, base, x, t, t_end, self.ctrl, band, project=proj, step_budget=self.budget)
        job.traj.segments.append(
            Segment(t, run.t_stop, "slide", Am, run.times, run.states, manifold=manifold)
        )
        job.x, job.t = run.x_stop, run.t_stop
        job.fired = None
        if run.fired is not None:
            label = base.label(run.fired)
            self.counter.bump()
            job.traj.events.append(Event(run.t_stop, describe(label) if label != "alpha-exit" else f"exit {describe(manifold)}"))
            if label == "alpha-exit":
                job.fired = manifold
            else:
                # another switch fired while sliding: both manifolds are active now
                job.fired = _canonical(label, job.x, self.spec, self._tol(job.x))
                job.pending = ("__joint__", manifold)
        elif exit_time is not None and run.t_stop < self.horizon:
            job.fired = manifold
            job.pending = ("__exit__", manifold)

    # -- choice resolution

    def pointwise_choice(self, manifold, cls: EventClass) -> str:
        if cls is EventClass.SLIDE:
            return "slide"
        if cls is EventClass.CROSS_UP:
            return "cross_plus"
        if cls is EventClass.CROSS_DOWN:
            return "cross_minus"
        # metric boundary pairs do not interact; topological ties go to the lower index
        return "cross_plus" if len(manifold) == 2 else "cross_minus"

    def run(self) -> BranchSet:
        root = self.new_node(None, None)
        traj = PiecewiseTrajectory(branch="", branch_id=root)
        if isinstance(self.spec, TopologicalModel) and self.spec.kappa > 1:
            traj.best_effort = True
        queue = deque([_Job(traj, self.x0.copy(), 0.0, 0)])
        x = self.x0
        start = active_manifolds(x, self.spec, self._tol(x))
        queue[0].fired = tuple(start) if start else None
        queue[0].pending = ("__start__", None)
        while queue:
            job = queue.popleft()
            spawned = self.advance(job)
            if spawned is None:
                node = self.nodes[job.traj.branch_id]
                node.terminal_state = job.x.tolist()
                job.traj.branch = "/".join(job.labels) or "default"
                self.leaves.append(job.traj)
            else:
                queue.extend(spawned)
        return BranchSet(self.leaves, self.nodes)

    def advance(self, job: _Job):
        while True:
            if job.pending is not None and job.pending[0] == "__go__":
                m, kind, T = job.pending[1]
                job.pending = None
                self._execute(job, m, kind, T)
                continue
            if job.t >= self.horizon:
                return None
            manifolds, exiting, joint = self._pending_manifolds(job)
            if not manifolds:
                self.frozen(job, adjacency(job.x, self.spec))
                continue
            tol = self._tol(job.x)
            classes = [classify_event(job.x, m, self.spec, self.kernel, tol) for m in manifolds]
            if joint is not None:
                prev = manifolds.index(joint) if joint in manifolds else None
                if prev is not None and classes[prev] is EventClass.SLIDE:
                    raise UnsupportedSliding(manifolds)
            if len(manifolds) > 1:
                self._multi(job, manifolds, classes)
                continue
            m, cls = manifolds[0], classes[0]
            if cls is EventClass.LEAVE:
                options = ["cross_minus", "cross_plus"] if exiting else ["cross_minus", "cross_plus", "slide"]
            else:
                options = [self.pointwise_choice(m, cls)]
            if len(options) == 1:
                self._execute(job, m, options[0], None)
                continue
            # genuine branch point
            if isinstance(self.policy, Fixed):
                if job.choices_used < len(self.policy.choices):
                    choice = self.policy.choices[job.choices_used]
                    job.choices_used += 1
                else:
                    choice = "pointwise"
                kind, T = _parse_choice(choice)
                if kind == "pointwise":
                    kind = self.pointwise_choice(m, cls)
                if kind not in options:
                    raise ConfigError(f"choice {choice!r} not admissible at t={job.t:.6g} on {describe(m)}")
                job.labels.append(choice)
                job.traj.events.append(Event(job.t, describe(m), choice))
                self._execute(job, m, kind, T)
                continue
            if job.depth >= self.policy.max_depth:
                kind = self.pointwise_choice(m, cls)
                self._execute(job, m, kind, None)
                continue
            menu = list(options)
            if "slide" in options:
                menu += [f"slide@{T!r}" for T in self.policy.exit_times if T > job.t]
            children = []
            for choice in menu:
                bid = self.new_node(job.traj.branch_id, {"time": job.t, "manifold": describe(m), "choice": choice})
                tr = job.traj.copy_prefix()
                tr.branch_id = bid
                tr.parent = job.traj.branch_id
                tr.events.append(Event(job.t, describe(m), choice))
                kind, T = _parse_choice(choice)
                child = _Job(tr, job.x.copy(), job.t, job.depth + 1, labels=job.labels + [choice])
                child.pending = ("__go__", (m, kind, T))
                children.append(child)
            return children

    def _pending_manifolds(self, job: _Job):
        exiting = False
        joint = None
        pend = job.pending
        job.pending = None
        if pend is not None and pend[0] == "__start__":
            fired = job.fired
            job.fired = None
            return (list(fired) if fired else []), False, None
        if pend is not None and pend[0] == "__exit__":
            exiting = True
        if pend is not None and pend[0] == "__joint__":
            joint = pend[1]
        fired = job.fired
        job.fired = None
        if fired is None:
            return [], exiting, joint
        ms = [fired]
        if joint is not None and joint not in ms:
            ms.append(joint)
        tol = self._tol(job.x)
        for m in active_manifolds(job.x, self.spec, tol * 1e-2):
            if m not in ms:
                ms.append(m)
        return ms, exiting, joint

    def _execute(self, job: _Job, m: tuple, kind: str, T: float | None) -> None:
        if kind == "slide":
            self.slide(job, m, T)
            return
        tol = self._tol(job.x)
        Am, Ap = side_graphs(job.x, self.spec, m, tol)
        self.frozen(job, Am if kind == "cross_minus" else Ap, note=kind)

    def _multi(self, job: _Job, manifolds, classes) -> None:
        wants_slide = [m for m, c in zip(manifolds, classes) if c is EventClass.SLIDE]
        if wants_slide:
            raise UnsupportedSliding(manifolds)
        if isinstance(self.policy, Fixed) and job.choices_used < len(self.policy.choices):
            if any(c is EventClass.LEAVE for c in classes):
                nxt = self.policy.choices[job.choices_used]
                if _parse_choice(nxt)[0] == "slide":
                    raise UnsupportedSliding(manifolds)
        tol = self._tol(job.x)
        A = adjacency(job.x, self.spec)
        rows_set: dict[int, int] = {}
        for m, c in zip(manifolds, classes):
            kind = self.pointwise_choice(m, c)
            Am, Ap = side_graphs(job.x, self.spec, m, tol)
            S = Am if kind == "cross_minus" else Ap
            if len(m) == 2:
                A[m[0], m[1]] = A[m[1], m[0]] = S[m[0], m[1]]
            else:
                rows_set[m[0]] = rows_set.get(m[0], 0) + 1
                if rows_set[m[0]] == 1:
                    A[m[0]] = S[m[0]]
        self.frozen(job, A, note="multi")


def simulate_krasovsky(
    x0,
    spec: Model,
    kernel: Kernel,
    policy: Policy | None = None,
    ctrl: StepControl | None = None,
    horizon: float = 10.0,
    detect_tol: float = 1e-9,
) -> BranchSet:
    """Krasovsky solutions from x0 as a tree of branches.

    Smooth stretches use the pointwise graph frozen between events.  When the
    state meets a discontinuity manifold the continuation follows the event
    class: forced crossings take the side graph, attracting manifolds are
    slid on, and repelling ones (Leave) are branch points resolved by the
    policy.
    """
    if not horizon > 0:
        raise ConfigError("horizon must be positive")
    x0 = np.array(as_positions(x0), dtype=float)
    spec.check(x0.shape[0])
    policy = Fixed(()) if policy is None else policy
    ctrl = StepControl() if ctrl is None else ctrl
    return _Driver(x0, spec, kernel, policy, ctrl, horizon, detect_tol).run()


# ---------------------------------------------------------------- certificates


@dataclass
class ResidualReport:
    max_residual: float
    violations: int
    checked: int
    tol: float
    witness_t: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.checked > 0 and self.violations == 0

    def to_json(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "violations": self.violations,
            "checked": self.checked,
            "tol": self.tol,
            "witness_t": self.witness_t[:10],
        }


def _sample(idx: np.ndarray, max_samples: int | None) -> np.ndarray:
    if max_samples is None or len(idx) <= max_samples:
        return np.arange(len(idx))
    return np.unique(np.linspace(0, len(idx) - 1, max_samples).round().astype(int))


def verify_krasovsky(
    traj,
    spec: Model,
    kernel: Kernel,
    tol: float = 1e-6,
    tol_manifold: float = 1e-6,
    max_samples: int | None = 200,
    t_min: float = -np.inf,
    t_max: float = np.inf,
) -> ResidualReport:
    """Hull distance from the finite-difference velocity to conv(limit fields)."""
    times, states = traj.times, traj.states
    idx, deriv = fd_derivatives(times, states)
    keep = (times[idx] >= t_min) & (times[idx] <= t_max)
    idx, deriv = idx[keep], deriv[keep]
    worst, bad, witness = 0.0, 0, []
    pick = _sample(idx, max_samples)
    for p in pick:
        x = states[idx[p]]
        dist = krasovsky_distance(x, deriv[p], spec, kernel, tol_manifold * (1.0 + np.linalg.norm(x)))
        worst = max(worst, dist)
        if dist > tol:
            bad += 1
            witness.append(float(times[idx[p]]))
    return ResidualReport(worst, bad, len(pick), tol, witness)


def slide_exit_targets(x0, exit_time: float) -> dict:
    """Closed-form limits for the metric three-agent sliding family (a = 1, radius 1, n = 1).

    Requires x_3 - x_2 = 1 and 0 <= x_2 - x_1 < 1.  With u = x_2 - x_1 the slide
    obeys u' = -3u/2 and x_3' = -u/2; after an exit at T the pair (1, 2)
    either keeps away from agent 3, settling at (x*, x*, x_3(T)) with
    x* = (sum - x_3(T)) / 2, or reconnects and reaches the average.
    """
    x = as_positions(x0)
    if x.shape != (3, 1):
        raise ConfigError("slide_exit_targets handles three agents on a line")
    x1, x2, x3 = x[:, 0]
    u0 = x2 - x1
    if abs((x3 - x2) - 1.0) > 1e-12 or not 0 <= u0 < 1:
        raise ConfigError("initial state is not on the sliding plane of the three-agent family")
    total = x1 + x2 + x3
    decay = 0.0 if np.isinf(exit_time) else float(np.exp(-1.5 * exit_time))
    x3T = x3 - (u0 / 3.0) * (1.0 - decay)
    star = 0.5 * (total - x3T)
    return {
        "x3_exit": x3T,
        "stop_interacting": np.array([star, star, x3T]),
        "interact": np.full(3, total / 3.0),
        "slide_forever": np.array([x1 + 2.0 * u0 / 3.0, x1 + 2.0 * u0 / 3.0, x3 - u0 / 3.0]),
    }
