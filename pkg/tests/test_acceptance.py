"""Acceptance criteria 1-10; each test records one summary line printed at the end of the run."""

import math
import time

import numpy as np
import pytest

from bcdyn import (
    ConstantKernel,
    Fixed,
    MetricModel,
    ModelField,
    TopologicalModel,
    Trajectory,
    build_gamma,
    euler_oracle,
    propagate_linear_exact,
    simulate_caratheodory,
    simulate_krasovsky,
    verify_caratheodory,
    verify_krasovsky,
    zero_in_krasovsky,
)
from bcdyn.analysis import (
    check_average_invariance,
    check_support_contractivity,
    detect_clusters,
    is_caratheodory_equilibrium,
    lyapunov_for,
    monitor_monotonicity,
    pseudoforest_check,
)
from bcdyn.caratheodory import nearest_sets
from bcdyn.scenarios import PRESETS, get_preset, random_instances, random_sweep, run_branch
from oracles import general_position, kappa1_sliding, kappa2_example, merging, metric_classical, topological_sliding

ONE = ConstantKernel()
METRIC = MetricModel()
NEAREST = TopologicalModel(1)
SEED = 20240611
RANDOM_RUNS = 100


def _record(log, k, ok, text):
    log[k] = (bool(ok), text)
    assert ok, text


@pytest.fixture(scope="session")
def sweep():
    """Seeded random instances, both models and both engines, horizon 5."""
    return random_sweep(RANDOM_RUNS, SEED, horizon=5.0, threads=4)


@pytest.fixture(scope="session")
def golden_runs():
    runs = []
    for p in PRESETS:
        for b in p.branches:
            tr, _ = run_branch(p, b)
            runs.append((f"{p.name}/{b.name}", tr))
    return runs


@pytest.fixture(scope="session")
def nearest_runs():
    out = []
    for x0, model in random_instances(RANDOM_RUNS, SEED + 1, True, kappa=1):
        out.append((x0, simulate_caratheodory(x0, model, ONE, horizon=5.0)))
    return out


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_criterion_01_metric_golden_limits(acceptance_log):
    x0 = np.array([-1 / 3, 0.0, 1.0])
    simulate_caratheodory(np.array([0.0, 0.5]), METRIC, ONE, horizon=0.1)  # compile outside the timing
    classical, t1 = _timed(lambda: simulate_caratheodory(x0, METRIC, ONE, horizon=30.0))
    cross, t2 = _timed(lambda: simulate_caratheodory(x0, METRIC, ONE, horizon=30.0, initial_graph=[[0, 1, 0], [1, 0, 1], [0, 1, 0]]))
    slide, t3 = _timed(lambda: simulate_krasovsky(x0, METRIC, ONE, Fixed(("slide",)), horizon=30.0)[0])
    errs = [
        np.abs(classical.terminal.ravel() - [-1 / 6, -1 / 6, 1]).max(),
        np.abs(cross.terminal.ravel() - [2 / 9] * 3).max(),
        np.abs(slide.terminal.ravel() - [-1 / 9, -1 / 9, 8 / 9]).max(),
    ]
    slowest = max(t1, t2, t3)
    ok = max(errs) <= 1e-3 and slowest < 1.0
    _record(acceptance_log, 1, ok, f"metric limits, max error {max(errs):.2e} (tol 1e-3), slowest run {slowest:.2f}s (< 1s)")


def test_criterion_02_topological_golden_limits(acceptance_log):
    x0 = np.array([0.0, -1.0, 1.0])
    classical = simulate_caratheodory(x0, NEAREST, ONE, horizon=30.0)
    alternate = simulate_caratheodory(x0, NEAREST, ONE, horizon=30.0, initial_graph=[2, 0, 0])
    slide = simulate_krasovsky(x0, NEAREST, ONE, Fixed(("slide",)), horizon=30.0)[0]
    errs = [
        np.abs(classical.terminal.ravel() + 0.5).max(),
        np.abs(alternate.terminal.ravel() - 0.5).max(),
        np.abs(slide.terminal.ravel()).max(),
    ]
    _record(acceptance_log, 2, max(errs) <= 1e-3, f"topological limits, max error {max(errs):.2e} (tol 1e-3)")


def test_criterion_03_closed_form_residuals(acceptance_log):
    def path(f):
        return Trajectory.from_function(f, 0.1, 5.0, 1e-3)

    reports = {
        "metric x_C": verify_caratheodory(path(metric_classical), METRIC, ONE),
        "merging": verify_caratheodory(path(merging), NEAREST, ONE),
        "kappa=2": verify_caratheodory(path(kappa2_example), TopologicalModel(2), ONE),
        "sliding": verify_krasovsky(path(topological_sliding), NEAREST, ONE, max_samples=None),
        "y-family": verify_krasovsky(path(lambda t: kappa1_sliding(t, 0.05)), NEAREST, ONE, max_samples=None),
    }
    worst = max(r.max_residual for r in reports.values())
    ok = worst <= 1e-6 and all(r.checked > 0 and r.violations == 0 for r in reports.values())
    detail = ", ".join(f"{k} {r.max_residual:.1e}" for k, r in reports.items())
    _record(acceptance_log, 3, ok, f"closed-form residuals on [0.1, 5] <= 1e-6: {detail}")


def test_criterion_04_clusters_at_distance_one(acceptance_log):
    x0 = np.array([[0.0, 0.0], [1.0, 1 / 3], [1.0, -1 / 3]])
    tr = simulate_caratheodory(x0, METRIC, ONE, horizon=30.0)
    part = detect_clusters(tr.terminal, METRIC, 1e-6)
    sep = part.separation()
    ok = part.blocks == [[0], [1, 2]] and abs(sep - 1.0) <= 1e-3
    _record(acceptance_log, 4, ok, f"blocks {part.to_json()['blocks']}, inter-block distance {sep:.6f}")


def test_criterion_05_equilibria(acceptance_log):
    seven = np.array([0.5, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0])
    five = np.array([-1.0, 1.0, 0.0, 1.0, -1.0])
    k2 = TopologicalModel(2)
    ok = (
        is_caratheodory_equilibrium(seven, k2, ONE)
        and zero_in_krasovsky(five, NEAREST, ONE)
        and not detect_clusters(seven, k2).is_cluster_point
        and not detect_clusters(five, NEAREST).is_cluster_point
    )
    _record(acceptance_log, 5, ok, "f = 0 exactly at N=7 kappa=2, 0 in K(x) at N=5 kappa=1, neither a cluster point")


def test_criterion_06_average_preservation(acceptance_log, sweep):
    metric = [r for r in sweep if r.model == "metric"]
    errors = [r for r in metric if r.error]
    drift = max(r.drift for r in metric if not r.error)
    tr = simulate_caratheodory(np.array([0.0, -1.0, 1.0]), NEAREST, ONE, horizon=30.0)
    p1 = check_average_invariance(tr)
    witnessed = (not p1.passed) and abs(p1.details["final_drift"] - 0.5) <= 1e-3
    ok = not errors and len(metric) >= 100 and drift <= 1e-6 and witnessed
    _record(
        acceptance_log, 6, ok,
        f"{len(metric)} metric runs, max drift {drift:.1e} (tol 1e-6); topological drift {p1.details['final_drift']:.4f} (-> 0.5)",
    )


def test_criterion_07_support_contractivity(acceptance_log, sweep, golden_runs):
    errors = [r for r in sweep if r.error]
    rand = max(r.hull_deviation for r in sweep if not r.error)
    bad = [name for name, tr in golden_runs if not check_support_contractivity(tr, 1e-7, 10).passed]
    ok = not errors and rand <= 1e-7 and not bad
    _record(
        acceptance_log, 7, ok,
        f"{len(golden_runs)} golden + {len(sweep)} random runs, max hull distance {rand:.1e} (tol 1e-7)"
        + (f", failing {bad}" if bad else ""),
    )


def test_criterion_08_lyapunov(acceptance_log, sweep, nearest_runs):
    name, W = lyapunov_for(NEAREST, ONE)
    w_worst = 0.0
    for x0, tr in nearest_runs:
        scale = 1.0 + float(np.linalg.norm(x0))
        w_worst = max(w_worst, monitor_monotonicity(tr, W, 1e-8 * scale).deviation / scale)
    v_runs = [r for r in sweep if r.model == "metric" and r.solution == "caratheodory"]
    v_worst = max(r.lyapunov_increase for r in v_runs)
    fractions = []
    for preset in ("ex-w-increasing-k2", "ex-w-increasing-krasovsky"):
        p = get_preset(preset)
        tr, _ = run_branch(p, p.default_branch)
        _, fn = lyapunov_for(p.model, p.kernel)
        rep = monitor_monotonicity(tr, fn)
        fractions.append(rep.details["positive_fraction"] if not rep.passed else 0.0)
    ok = w_worst <= 1e-8 and v_worst <= 1e-8 and len(v_runs) >= 100 and min(fractions) >= 0.9
    _record(
        acceptance_log, 8, ok,
        f"W rise {w_worst:.1e} over {len(nearest_runs)} kappa=1 runs, V rise {v_worst:.1e} over {len(v_runs)} metric runs "
        f"(tol 1e-8 scaled); counterexamples increasing on {fractions[0]:.0%} / {fractions[1]:.0%} of steps",
    )


def test_criterion_09_structure(acceptance_log):
    rng = np.random.default_rng(SEED)
    configs = []
    for _ in range(10_000):
        N = int(rng.integers(2, 17))
        configs.append(rng.uniform(0.0, 2.0, size=(N, int(rng.integers(1, 4)))))
    failures = 0
    t0 = time.perf_counter()
    gammas = [build_gamma(x, ONE) for x in configs]
    elapsed = time.perf_counter() - t0
    for x, g in zip(configs, gammas):
        near = nearest_sets(x)
        if len(g) != len(x) or any(g[i] == i or g[i] not in near[i] for i in range(len(x))):
            failures += 1
    forest_bad = 0
    for _ in range(1000):
        x = general_position(rng, int(rng.integers(2, 17)), int(rng.integers(1, 4)))
        forest_bad += not pseudoforest_check(build_gamma(x, ONE))[0]
    line = get_preset("ex-pseudoforest-line").positions()
    plane = get_preset("ex-pseudoforest-plane").positions()
    figures = pseudoforest_check(build_gamma(line, ONE))[0] and pseudoforest_check(build_gamma(plane, ONE))[0]
    ok = failures == 0 and elapsed < 10.0 and forest_bad == 0 and figures
    _record(
        acceptance_log, 9, ok,
        f"build_gamma 10^4 instances, {failures} failures in {elapsed:.2f}s (< 10s); pseudoforest 10^3 random, {forest_bad} failures; figures ok={figures}",
    )


def test_criterion_10_oracle_equivalence(acceptance_log):
    worst = {}
    seg_worst = 0.0
    for topological in (False, True):
        dev = 0.0
        for x0, model in random_instances(50, SEED + 2, topological, kappa=1):
            tr = simulate_caratheodory(x0, model, ONE, horizon=3.0)
            eu = euler_oracle(ModelField(model, ONE), x0, 1e-5, 3.0)
            dev = max(dev, float(np.abs(tr.terminal - eu.terminal).max()))
            for seg in tr.segments:
                if seg.t1 > seg.t0:
                    exact = propagate_linear_exact(seg.graph, seg.states[0], seg.t1 - seg.t0, ONE)
                    seg_worst = max(seg_worst, float(np.abs(exact - seg.states[-1]).max()))
        worst["topological" if topological else "metric"] = dev
    ok = max(worst.values()) <= 1e-4 and seg_worst <= 1e-9
    _record(
        acceptance_log, 10, ok,
        f"Euler h=1e-5 vs engine: metric {worst['metric']:.1e}, kappa=1 {worst['topological']:.1e} (tol 1e-4); "
        f"exact vs RK4 on segments {seg_worst:.1e} (tol 1e-9)",
    )
