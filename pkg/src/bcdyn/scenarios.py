"""Preset scenarios with expected outcomes, and the batch verifier over them."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .caratheodory import build_gamma, simulate_caratheodory
from .integrator import StepControl
from .krasovsky import parse_policy, simulate_krasovsky, slide_exit_targets, zero_in_krasovsky
from .model import (
    ConstantKernel,
    Kernel,
    MetricModel,
    Model,
    TopologicalModel,
    adjacency,
    as_positions,
    topological_neighbors,
)


@dataclass(frozen=True)
class Branch:
    name: str
    solution: str  # "caratheodory" or "krasovsky"
    policy: str = ""  # Krasovsky choice list, e.g. "slide" or "slide@1.0,cross_plus"
    initial_graph: tuple | None = None  # Caratheodory starting neighbor map or adjacency rows


@dataclass(frozen=True)
class Expectation:
    """One checkable claim about a preset.

    ``source`` says where the expected value comes from: "reference" (the
    worked example the preset reproduces), "derived" (independent calculation or oracle run)
    or "trivial" (immediate from the setup).
    """

    kind: str
    value: object
    source: str
    branch: str | None = None
    tol: float = 1e-3
    note: str = ""


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    summary: str
    model: Model
    x0: tuple
    horizon: float
    branches: tuple[Branch, ...]
    expectations: tuple[Expectation, ...] = ()
    kernel: Kernel = field(default_factory=ConstantKernel)

    @property
    def default_branch(self) -> Branch:
        return self.branches[0]

    def branch(self, name: str | None) -> Branch:
        if name is None:
            return self.default_branch
        for b in self.branches:
            if b.name == name:
                return b
        raise KeyError(f"preset {self.name!r} has no branch {name!r}; try {[b.name for b in self.branches]}")

    def positions(self) -> np.ndarray:
        return np.array(as_positions(np.array(self.x0, dtype=float)))


def _y_config(y: float) -> tuple:
    return (-1 - y, -1 + y, 0.0, 1 - y, 1 + y)


EPS_TOPO = 0.25
_TOPO_NONEXIST = ((-1.0, 0.0), (0.0, 0.0), (1.0, 0.0), (1 - EPS_TOPO, math.sqrt(1 - EPS_TOPO**2)))
_METRIC_EXIT = slide_exit_targets(np.array([-1 / 3, 0.0, 1.0]), 1.0)

PRESETS: tuple[ScenarioPreset, ...] = (
    ScenarioPreset(
        "ex-two-agents",
        "Two agents within range meet at their midpoint",
        MetricModel(),
        (0.0, 0.9),
        10.0,
        (Branch("classical", "caratheodory"),),
        (Expectation("terminal", (0.45, 0.45), "trivial"),),
    ),
    ScenarioPreset(
        "ex-nonexist-classical-metric",
        "Outer agents reach distance 1 in finite time; the graph then switches",
        MetricModel(),
        (-2 / 3, 0.0, 2 / 3),
        20.0,
        (Branch("classical", "caratheodory"), Branch("krasovsky", "krasovsky", "pointwise")),
        (
            Expectation("first_event_time", math.log(4 / 3), "derived", "classical", 1e-6,
                        "x1 = -(2/3)exp(-t) reaches -1/2; cross-checked by the Euler oracle"),
            Expectation("state_at", (math.log(4 / 3), (-0.5, 0.0, 0.5)), "reference", "classical", 1e-6),
            Expectation("terminal", (0.0, 0.0, 0.0), "derived", "classical", 1e-3, "consensus at the preserved mean"),
            Expectation("terminal", (0.0, 0.0, 0.0), "derived", "krasovsky", 1e-3),
        ),
    ),
    ScenarioPreset(
        "ex-nonexist-classical-topological",
        "Tie at agent 3 breaks the pointwise graph immediately (epsilon = 1/4)",
        TopologicalModel(1),
        _TOPO_NONEXIST,
        10.0,
        (Branch("caratheodory", "caratheodory"),),
        (
            Expectation("neighbors", (1, [2]), "reference"),
            Expectation("neighbors", (2, [1]), "reference"),
            Expectation("neighbors", (3, [2]), "reference"),
            Expectation("neighbors", (4, [3]), "reference"),
            Expectation("pointwise_breaks", True, "reference", "caratheodory"),
        ),
    ),
    ScenarioPreset(
        "ex-clusters-at-distance-1",
        "Converges to a cluster point whose clusters sit exactly one apart",
        MetricModel(),
        ((0.0, 0.0), (1.0, 1 / 3), (1.0, -1 / 3)),
        30.0,
        (Branch("classical", "caratheodory"), Branch("krasovsky", "krasovsky", "pointwise")),
        (
            Expectation("terminal", ((0, 0), (1, 0), (1, 0)), "reference", "classical"),
            Expectation("terminal", ((0, 0), (1, 0), (1, 0)), "reference", "krasovsky"),
            Expectation("blocks", [[1], [2, 3]], "reference", "classical"),
            Expectation("separation", 1.0, "reference", "classical"),
            Expectation("cluster_point", True, "reference", "classical"),
        ),
    ),
    ScenarioPreset(
        "ex-metric-inclusions",
        "Agents 2 and 3 start exactly one apart: several solutions",
        MetricModel(),
        (-1 / 3, 0.0, 1.0),
        30.0,
        (
            Branch("classical", "caratheodory"),
            Branch("cross", "caratheodory", initial_graph=((0, 1, 0), (1, 0, 1), (0, 1, 0))),
            Branch("sliding", "krasovsky", "slide"),
            Branch("exit-1-apart", "krasovsky", "slide@1.0,cross_plus"),
            Branch("exit-1-together", "krasovsky", "slide@1.0,cross_minus"),
        ),
        (
            Expectation("terminal", (-1 / 6, -1 / 6, 1.0), "reference", "classical"),
            Expectation("terminal", (2 / 9, 2 / 9, 2 / 9), "reference", "cross"),
            Expectation("terminal", (-1 / 9, -1 / 9, 8 / 9), "reference", "sliding"),
            Expectation("terminal", tuple(_METRIC_EXIT["stop_interacting"]), "derived", "exit-1-apart", 1e-3,
                        "closed-form slide then x* = (sum - x3(T))/2"),
            Expectation("terminal", (2 / 9, 2 / 9, 2 / 9), "reference", "exit-1-together"),
            Expectation("field_at_start", (1 / 3, -1 / 3, 0.0), "reference"),
        ),
    ),
    ScenarioPreset(
        "ex-topological-inclusions",
        "Agent 1 is equidistant from 2 and 3: three different limits",
        TopologicalModel(1),
        (0.0, -1.0, 1.0),
        20.0,
        (
            Branch("classical", "caratheodory"),
            Branch("alternate", "caratheodory", initial_graph=(2, 0, 0)),
            Branch("sliding", "krasovsky", "slide"),
            Branch("krasovsky-cross", "krasovsky", "cross_minus"),
        ),
        (
            Expectation("terminal", (-0.5, -0.5, -0.5), "reference", "classical"),
            Expectation("terminal", (-0.5, -0.5, -0.5), "derived", "krasovsky-cross", 1e-3,
                        "crossing to the lower-index side reproduces the classical solution"),
            Expectation("terminal", (0.5, 0.5, 0.5), "reference", "alternate"),
            Expectation("terminal", (0.0, 0.0, 0.0), "reference", "sliding"),
            Expectation("final_drift", 0.5, "reference", "classical"),
        ),
    ),
    ScenarioPreset(
        "ex-k2-not-cluster",
        "kappa = 2 equilibrium that is not a cluster point",
        TopologicalModel(2),
        (0.5, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0),
        2.0,
        (Branch("classical", "caratheodory"), Branch("krasovsky-slide", "krasovsky", "slide")),
        (
            Expectation("caratheodory_equilibrium", True, "reference"),
            Expectation("krasovsky_equilibrium", True, "reference"),
            Expectation("cluster_point_at_start", False, "reference"),
            Expectation("terminal", (0.5, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0), "reference", "classical", 1e-12),
            Expectation("cluster_point", False, "reference", "krasovsky-slide"),
        ),
    ),
    ScenarioPreset(
        "ex-krasovsky-eq-not-cluster",
        "kappa = 1 Krasovsky equilibrium that is not a cluster point",
        TopologicalModel(1),
        (-1.0, 1.0, 0.0, 1.0, -1.0),
        20.0,
        (Branch("sliding", "krasovsky", "slide"), Branch("classical", "caratheodory")),
        (
            Expectation("krasovsky_equilibrium", True, "reference"),
            Expectation("caratheodory_equilibrium", False, "trivial"),
            Expectation("cluster_point_at_start", False, "reference"),
            Expectation("field_at_start", (0.0, 0.0, -1.0, 0.0, 0.0), "reference"),
            Expectation("terminal", (-1.0, 1.0, 0.0, 1.0, -1.0), "reference", "sliding", 1e-9),
            Expectation("terminal", (-1.0, 1.0, -1.0, 1.0, -1.0), "derived", "classical", 1e-3,
                        "agent 3 follows agent 1 under the tie rule"),
            Expectation("cluster_point", True, "derived", "classical"),
        ),
    ),
    ScenarioPreset(
        "ex-merging-components",
        "Two Caratheodory solutions; one merges components of the interaction graph",
        TopologicalModel(1),
        (-1.0, 0.0, 1.0, 1.0),
        25.0,
        (
            Branch("classical", "caratheodory"),
            Branch("merging", "caratheodory", initial_graph=(1, 2, 3, 2)),
        ),
        (
            Expectation("gamma", (1, 0, 3, 2), "derived"),
            Expectation("terminal", (-0.5, -0.5, 1.0, 1.0), "derived", "classical", 1e-3,
                        "pairs (1,2) and (3,4) each meet at their midpoint"),
            Expectation("terminal", (1.0, 1.0, 1.0, 1.0), "reference", "merging"),
            Expectation("state_at", (1.0, (1 - 3 / math.e, 1 - 1 / math.e, 1.0, 1.0)), "reference", "merging", 1e-9),
        ),
    ),
    ScenarioPreset(
        "ex-w-increasing-k2",
        "kappa = 2: W increases along the unique solution",
        TopologicalModel(2),
        (-9.0, -9.0, -9.0, -2.0, 2.0, 9.0, 9.0, 9.0),
        5.0,
        (Branch("classical", "caratheodory"),),
        (
            Expectation("W_at_start", 65.0, "reference", tol=1e-12),
            Expectation("terminal", (-9, -9, -9, -3, 3, 9, 9, 9), "reference", "classical"),
            Expectation("lyapunov_increasing", 0.9, "reference", "classical"),
            Expectation("cluster_point", False, "reference", "classical"),
        ),
    ),
    ScenarioPreset(
        "ex-w-increasing-krasovsky",
        "kappa = 1 sliding solution along which W increases (y0 = 0.05)",
        TopologicalModel(1),
        _y_config(0.05),
        3.0,
        (Branch("sliding", "krasovsky", "slide"), Branch("classical", "caratheodory")),
        (
            Expectation("W_at_start", 0.5 * (1 - 2 * 0.05 + 17 * 0.05**2), "reference", tol=1e-12),
            Expectation("lyapunov_increasing", 0.9, "reference", "sliding"),
            Expectation("state_at", (1.0, _y_config(0.05 * math.exp(-2.0))), "reference", "sliding", 1e-9),
        ),
    ),
    ScenarioPreset(
        "ex-pseudoforest-line",
        "Nearest-neighbor graph on a line: one component, 2-cycle between agents 4 and 5",
        TopologicalModel(1),
        (0.0, 10.0, 19.0, 27.0, 28.0, 30.0),
        10.0,
        (Branch("classical", "caratheodory"),),
        (
            Expectation("gamma", (1, 2, 3, 4, 3, 4), "reference"),
            Expectation("pseudoforest", True, "reference"),
        ),
    ),
    ScenarioPreset(
        "ex-pseudoforest-plane",
        "Nearest-neighbor graph in the plane with three components",
        TopologicalModel(1),
        ((0, 0), (0, 1), (-1, 0), (0, -1), (0.5, 0), (1, 0), (1, 1), (1, -1)),
        10.0,
        (Branch("classical", "caratheodory"),),
        (
            Expectation("pseudoforest", True, "reference"),
            Expectation("two_cycle", (1, 5), "reference"),
        ),
    ),
)


def get_preset(name: str) -> ScenarioPreset:
    for p in PRESETS:
        if p.name == name:
            return p
    raise KeyError(f"unknown scenario {name!r}")


def run_branch(preset: ScenarioPreset, branch: Branch, ctrl: StepControl | None = None, horizon: float | None = None):
    """Simulate one branch; returns (trajectory, branch set or None)."""
    ctrl = StepControl() if ctrl is None else ctrl
    T = preset.horizon if horizon is None else horizon
    x0 = preset.positions()
    if branch.solution == "caratheodory":
        g = branch.initial_graph
        if g is not None and isinstance(g[0], tuple):
            g = np.array(g, dtype=float)
        tr = simulate_caratheodory(x0, preset.model, preset.kernel, ctrl, T, initial_graph=g, branch=branch.name)
        return tr, None
    bs = simulate_krasovsky(x0, preset.model, preset.kernel, parse_policy(branch.policy), ctrl, T)
    tr = bs[0]
    tr.branch = branch.name
    return tr, bs


def table_row(model: Model, solution: str) -> list[str]:
    """Rows of the properties table this run contributes to."""
    sol = "Caratheodory" if solution == "caratheodory" else "Krasovsky"
    if isinstance(model, MetricModel):
        return [f"Metric {sol}"]
    rows = [f"Topological {sol}"]
    if model.kappa == 1:
        rows.append(f"Topological {sol} kappa=1")
    return rows


TABLE_ROWS = (
    "Metric Caratheodory",
    "Metric Krasovsky",
    "Topological Caratheodory",
    "Topological Krasovsky",
    "Topological Caratheodory kappa=1",
    "Topological Krasovsky kappa=1",
)

EXPECTED_TABLE = {
    "Metric Caratheodory": ("Yes", "Yes", "Yes"),
    "Metric Krasovsky": ("Yes", "Yes", "Yes"),
    "Topological Caratheodory": ("No", "Yes", "No"),
    "Topological Krasovsky": ("No", "Yes", "No"),
    "Topological Caratheodory kappa=1": ("No", "Yes", "Yes"),
    "Topological Krasovsky kappa=1": ("No", "Yes", "No"),
}


@dataclass
class CheckResult:
    preset: str
    kind: str
    branch: str | None
    source: str
    passed: bool
    detail: str

    def to_json(self) -> dict:
        return {
            "preset": self.preset,
            "kind": self.kind,
            "branch": self.branch,
            "source": self.source,
            "pass": self.passed,
            "detail": self.detail,
        }


def _state_at(tr, t: float) -> np.ndarray:
    times, states = tr.times, tr.states
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9:
        # linear interpolation between the bracketing samples
        k = int(np.searchsorted(times, t))
        w = (t - times[k - 1]) / (times[k] - times[k - 1])
        return (1 - w) * states[k - 1] + w * states[k]
    return states[k]


def _check(preset: ScenarioPreset, e: Expectation, runs: dict) -> CheckResult:
    x0 = preset.positions()
    model, kernel = preset.model, preset.kernel

    def res(ok, detail):
        return CheckResult(preset.name, e.kind, e.branch, e.source, bool(ok), detail)

    tr = runs[e.branch or preset.default_branch.name][0]
    if e.kind == "terminal":
        want = as_positions(np.array(e.value, dtype=float))
        err = float(np.max(np.abs(tr.terminal - want)))
        return res(err <= e.tol, f"max error {err:.3g} (tol {e.tol:g})")
    if e.kind == "state_at":
        t, val = e.value
        err = float(np.max(np.abs(_state_at(tr, t) - as_positions(np.array(val, dtype=float)))))
        return res(err <= e.tol, f"error at t={t:.6g}: {err:.3g}")
    if e.kind == "first_event_time":
        if not tr.events:
            return res(False, "no event")
        err = abs(tr.events[0].time - float(e.value))
        return res(err <= e.tol, f"event at {tr.events[0].time:.12g}, expected {float(e.value):.12g}")
    if e.kind == "final_drift":
        rep = analysis.check_average_invariance(tr)
        d = rep.details["final_drift"]
        return res(abs(d - float(e.value)) <= e.tol and not rep.passed, f"final drift {d:.6g}")
    if e.kind == "neighbors":
        i, want = e.value
        got = [j + 1 for j in topological_neighbors(x0, i - 1, model.kappa)]
        return res(got == list(want), f"N_{i} = {got}")
    if e.kind == "pointwise_breaks":
        tr2 = simulate_caratheodory(x0, model, kernel, horizon=0.1, initial_graph=adjacency(x0, model))
        t_first = tr2.events[0].time if tr2.events else float("inf")
        return res((t_first <= 1e-6) == bool(e.value), f"first switch of the pointwise graph at t={t_first:.3g}")
    if e.kind == "blocks":
        part = analysis.detect_clusters(tr.terminal, model, 1e-3)
        got = [[i + 1 for i in b] for b in part.blocks]
        return res(got == e.value, f"blocks {got}")
    if e.kind == "separation":
        part = analysis.detect_clusters(tr.terminal, model, 1e-3)
        s = part.separation()
        return res(abs(s - float(e.value)) <= e.tol, f"separation {s:.9g}")
    if e.kind == "cluster_point":
        part = analysis.detect_clusters(tr.terminal, model, 1e-3)
        return res(part.is_cluster_point == bool(e.value), f"is_cluster_point={part.is_cluster_point}")
    if e.kind == "cluster_point_at_start":
        part = analysis.detect_clusters(x0, model)
        return res(part.is_cluster_point == bool(e.value), f"is_cluster_point={part.is_cluster_point}")
    if e.kind == "caratheodory_equilibrium":
        got = analysis.is_caratheodory_equilibrium(x0, model, kernel)
        return res(got == bool(e.value), f"f(x0) == 0: {got}")
    if e.kind == "krasovsky_equilibrium":
        got = zero_in_krasovsky(x0, model, kernel)
        return res(got == bool(e.value), f"0 in K(x0): {got}")
    if e.kind == "field_at_start":
        from .model import vector_field

        err = float(np.max(np.abs(vector_field(model, kernel, x0) - as_positions(np.array(e.value)))))
        return res(err <= 1e-12, f"max error {err:.3g}")
    if e.kind == "W_at_start":
        w = analysis.lyapunov_W_topological(x0, kernel, model.kappa)
        return res(abs(w - float(e.value)) <= e.tol, f"W = {w!r}")
    if e.kind == "lyapunov_increasing":
        name, fn = analysis.lyapunov_for(model, kernel)
        rep = analysis.monitor_monotonicity(tr, fn)
        frac = rep.details["positive_fraction"]
        return res(not rep.passed and frac >= float(e.value), f"{name} increases on {frac:.1%} of steps")
    if e.kind == "gamma":
        g = build_gamma(x0, kernel).gamma
        return res(tuple(g) == tuple(e.value), f"Gamma = {[v + 1 for v in g]}")
    if e.kind == "pseudoforest":
        ok, diag = analysis.pseudoforest_check(build_gamma(x0, kernel))
        return res(ok == bool(e.value), str(diag["components"]))
    if e.kind == "two_cycle":
        ok, diag = analysis.pseudoforest_check(build_gamma(x0, kernel))
        cycles = [sorted(c["cycle"]) for c in diag["components"]]
        return res(sorted(e.value) in cycles, f"cycles {cycles}")
    raise ValueError(f"unknown expectation kind {e.kind!r}")


@dataclass
class PresetOutcome:
    preset: str
    checks: list[CheckResult]
    properties: dict  # branch -> {"P1": bool, "P2": bool, "P3": bool}
    rows: dict  # branch -> table rows
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)


def evaluate_preset(preset: ScenarioPreset, ctrl: StepControl | None = None) -> PresetOutcome:
    runs = {}
    try:
        for b in preset.branches:
            runs[b.name] = run_branch(preset, b, ctrl)
        checks = [_check(preset, e, runs) for e in preset.expectations]
    except Exception as exc:  # reported, not raised: one preset must not sink the batch
        return PresetOutcome(preset.name, [], {}, {}, f"{type(exc).__name__}: {exc}")
    props, rows = {}, {}
    for b in preset.branches:
        tr = runs[b.name][0]
        p1 = analysis.check_average_invariance(tr).passed
        p2 = analysis.check_support_contractivity(tr).passed
        part = analysis.detect_convergence(tr, preset.model, preset.kernel, eps_conv=1e-6)
        p3 = None if part is None else part.is_cluster_point
        props[b.name] = {"P1": p1, "P2": p2, "P3": p3}
        rows[b.name] = table_row(preset.model, b.solution)
    return PresetOutcome(preset.name, checks, props, rows)


def property_table(outcomes: list[PresetOutcome]) -> dict:
    """Yes when every contributing run has the property, No when one run lacks it."""
    table = {}
    for row in TABLE_ROWS:
        cells = []
        for prop in ("P1", "P2", "P3"):
            vals = [
                o.properties[b][prop]
                for o in outcomes
                for b in o.properties
                if row in o.rows[b] and o.properties[b][prop] is not None
            ]
            cells.append("-" if not vals else ("Yes" if all(vals) else "No"))
        table[row] = tuple(cells)
    return table


def verify_all(names: list[str] | None = None, ctrl: StepControl | None = None, threads: int | None = None) -> dict:
    """Run presets (all, or the named ones), check expectations, build the properties table."""
    chosen = list(PRESETS) if names is None else [get_preset(n) for n in names]
    if threads is None:
        threads = int(os.environ.get("BC_DYN_THREADS", "1") or 1)
    threads = max(1, threads)
    if threads == 1:
        outcomes = [evaluate_preset(p, ctrl) for p in chosen]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda p: evaluate_preset(p, ctrl), chosen))
    table = property_table(outcomes) if outcomes else {}
    table_ok = True
    if names is None:
        table_ok = all(table[r] == EXPECTED_TABLE[r] for r in TABLE_ROWS)
    return {
        "passed": all(o.passed for o in outcomes) and table_ok,
        "presets": [
            {
                "name": o.preset,
                "pass": o.passed,
                "error": o.error,
                "checks": [c.to_json() for c in o.checks],
                "properties": o.properties,
            }
            for o in outcomes
        ],
        "table": {r: list(v) for r, v in table.items()},
        "table_matches": table_ok,
    }


# ---------------------------------------------------------------- random instances


def random_configuration(rng: np.random.Generator, max_agents: int = 10, max_dim: int = 3, side: float = 2.0) -> np.ndarray:
    """Uniform positions in [0, side]^n with 2 <= N <= max_agents and 1 <= n <= max_dim."""
    N = int(rng.integers(2, max_agents + 1))
    n = int(rng.integers(1, max_dim + 1))
    return rng.uniform(0.0, side, size=(N, n))


def random_instances(count: int, seed: int, topological: bool, max_agents: int = 10, max_dim: int = 3, kappa: int | None = None):
    """Yield (x0, model) pairs; kappa is drawn in 1..N-1 unless fixed."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        x = random_configuration(rng, max_agents, max_dim)
        if topological:
            k = kappa if kappa is not None else int(rng.integers(1, x.shape[0]))
            k = min(k, x.shape[0] - 1)
            yield x, TopologicalModel(k)
        else:
            yield x, MetricModel()


@dataclass
class SweepRecord:
    index: int
    model: str
    solution: str
    drift: float
    hull_deviation: float
    lyapunov: str
    lyapunov_increase: float
    error: str | None = None

    def to_json(self) -> dict:
        return self.__dict__.copy()


def _sweep_one(k: int, x0: np.ndarray, model: Model, solution: str, horizon: float, ctrl: StepControl) -> SweepRecord:
    kernel = ConstantKernel()
    label = "metric" if isinstance(model, MetricModel) else f"topological-k{model.kappa}"
    try:
        if solution == "caratheodory":
            tr = simulate_caratheodory(x0, model, kernel, ctrl, horizon)
        else:
            tr = simulate_krasovsky(x0, model, kernel, None, ctrl, horizon)[0]
    except Exception as exc:  # recorded per instance
        return SweepRecord(k, label, solution, np.nan, np.nan, "", np.nan, f"{type(exc).__name__}: {exc}")
    p1 = analysis.check_average_invariance(tr)
    p2 = analysis.check_support_contractivity(tr)
    name, fn = analysis.lyapunov_for(model, kernel)
    scale = 1.0 + float(np.linalg.norm(x0))
    mono = analysis.monitor_monotonicity(tr, fn, 1e-8 * scale, skip_events=isinstance(model, MetricModel))
    return SweepRecord(k, label, solution, p1.deviation, p2.deviation, name, mono.deviation / scale)


def random_sweep(
    count: int,
    seed: int,
    horizon: float = 5.0,
    ctrl: StepControl | None = None,
    threads: int | None = None,
    kappa: int | None = None,
) -> list[SweepRecord]:
    """Both models and both engines on ``count`` seeded random instances each."""
    ctrl = StepControl() if ctrl is None else ctrl
    jobs = []
    for topo in (False, True):
        for k, (x0, model) in enumerate(random_instances(count, seed, topo, kappa=kappa)):
            for sol in ("caratheodory", "krasovsky"):
                jobs.append((k, x0, model, sol))
    if threads is None:
        threads = int(os.environ.get("BC_DYN_THREADS", "1") or 1)
    run = lambda j: _sweep_one(*j, horizon, ctrl)  # noqa: E731
    if threads <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, jobs))
