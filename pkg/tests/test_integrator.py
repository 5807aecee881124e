import math

import numpy as np
import pytest
from scipy.linalg import expm

from bcdyn import ConstantKernel, MetricModel, ModelField, StepControl, TopologicalModel
from bcdyn.integrator import (
    NumericError,
    Trajectory,
    euler_oracle,
    fd_derivatives,
    laplacian,
    locate_event,
    propagate_linear_exact,
    rk4_step,
)
from bcdyn.segments import FrozenField
from oracles import metric_classical, metric_nonexistence, two_agents


def test_rk4_exponential_single_step_is_taylor_quartic():
    h = 0.1
    quartic = 1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24
    assert rk4_step(lambda x: -x, np.array([1.0]), h)[0] == pytest.approx(quartic, abs=1e-15)


def test_rk4_exponential_reaches_exp():
    x = np.array([1.0])
    for _ in range(10):
        x = rk4_step(lambda y: -y, x, 0.01)
    assert x[0] == pytest.approx(0.904837418, abs=1e-9)


def test_rk4_zero_field():
    x = np.array([[0.3], [1.2]])
    assert np.array_equal(rk4_step(lambda y: np.zeros_like(y), x, 0.5), x)


def test_rk4_nonfinite_raises():
    with pytest.raises(NumericError):
        rk4_step(lambda x: x * np.inf, np.array([1.0]), 0.1)


def test_rk4_pair_contraction():
    f = FrozenField(np.array([[0, 1], [1, 0.0]]), ConstantKernel())
    x = np.array([[0.0], [1.0]])
    h = 0.01
    for _ in range(100):
        x = rk4_step(f, x, h)
    np.testing.assert_allclose(x.ravel(), two_agents(1.0, (0.0, 1.0)), atol=1e-10)


def test_rk4_order_ratio():
    # x1' = x2 - x1 on the classical metric segment; the error ratio should be near 16
    f = FrozenField(np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0.0]]), ConstantKernel())
    x0 = np.array([[-1 / 3], [0.0], [1.0]])

    def err(h):
        x = x0.copy()
        for _ in range(int(round(1.0 / h))):
            x = rk4_step(f, x, h)
        return np.max(np.abs(x.ravel() - metric_classical(1.0)))

    ratio = err(0.1) / err(0.05)
    assert 12 <= ratio <= 20


def test_locate_linear_crossing():
    lo, hi, idx = locate_event(lambda x: np.array([0.5 - x]), 0.0, 1.0, lambda t: t, 1e-12)
    assert hi - lo <= 1e-12 and hi == pytest.approx(0.5, abs=1e-12) and idx == 0


def test_locate_event_argument_checks():
    with pytest.raises(ValueError):
        locate_event(lambda x: np.array([x - 2.0]), 0.0, 1.0, lambda t: t, 1e-9)
    with pytest.raises(ValueError):
        locate_event(lambda x: np.array([-1.0 - x]), 0.0, 1.0, lambda t: t, 1e-9)


def test_metric_contact_time_against_euler():
    from bcdyn import simulate_caratheodory

    x0 = metric_nonexistence(0.0)
    tr = simulate_caratheodory(x0, MetricModel(), ConstantKernel(), horizon=0.5)
    t_event = tr.events[0].time
    # the event fires once the switch leaves the manifold band, about 1e-9 past contact
    assert t_event == pytest.approx(math.log(4 / 3), abs=1e-8)
    # Euler oracle with h = 1e-6: first recorded sample at which |x3 - x1| <= 1
    h = 1e-6
    eu = euler_oracle(ModelField(MetricModel(), ConstantKernel()), x0, h, 0.3, record_every=1)
    gap = eu.states[:, 2, 0] - eu.states[:, 0, 0]
    t_euler = eu.times[np.argmax(gap <= 1.0)]
    assert abs(t_euler - t_event) <= 1e-6


def test_exact_propagation_matches_closed_form():
    A = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0.0]])
    x = propagate_linear_exact(A, np.array([-1 / 3, 0, 1.0]), 1.0)
    np.testing.assert_allclose(x.ravel(), metric_classical(1.0), atol=1e-12)


def test_exact_propagation_neighbor_map_limit():
    # agent 1 follows 3, agents 2 and 3 follow 1
    x = propagate_linear_exact([2, 0, 0], np.array([0.0, -1.0, 1.0]), 60.0)
    np.testing.assert_allclose(x.ravel(), [0.5, 0.5, 0.5], atol=1e-12)


def test_exact_propagation_identity_for_empty_graph():
    x0 = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(propagate_linear_exact(np.zeros((2, 2)), x0, 5.0), x0)


def test_exact_propagation_against_scipy(rng):
    for _ in range(20):
        N = int(rng.integers(2, 9))
        A = (rng.random((N, N)) < 0.4).astype(float)
        np.fill_diagonal(A, 0)
        c = float(rng.uniform(0.2, 2.0))
        dt = float(rng.uniform(0.01, 5.0))
        x0 = rng.normal(size=(N, 2))
        ref = expm(-c * dt * laplacian(A)) @ x0
        np.testing.assert_allclose(propagate_linear_exact(A, x0, dt, ConstantKernel(c)), ref, atol=1e-12)


def test_exact_propagation_matches_rk4_on_frozen_segment(rng):
    for _ in range(10):
        N = int(rng.integers(2, 8))
        A = (rng.random((N, N)) < 0.5).astype(float)
        np.fill_diagonal(A, 0)
        x = rng.uniform(0, 2, size=(N, 2))
        f = FrozenField(A, ConstantKernel())
        y = x.copy()
        for _ in range(1000):
            y = rk4_step(f, y, 1e-3)
        np.testing.assert_allclose(y, propagate_linear_exact(A, x, 1.0), atol=1e-9)


def test_exact_propagation_rejects_nonconstant_kernel():
    from bcdyn import AffineSaturatedKernel

    with pytest.raises(NotImplementedError):
        propagate_linear_exact(np.zeros((2, 2)), np.zeros(2), 1.0, AffineSaturatedKernel(0, 1, 1))


def test_euler_constant_solution():
    x0 = np.array([[0.0], [0.0], [5.0]])
    tr = euler_oracle(ModelField(MetricModel(), ConstantKernel()), x0, 1e-4, 1.0)
    assert np.array_equal(tr.terminal, x0)


def test_euler_two_agent_law_first_order():
    errs = []
    for h in (1e-4, 5e-5):
        tr = euler_oracle(ModelField(MetricModel(), ConstantKernel()), np.array([0.0, 0.5]), h, 1.0)
        errs.append(np.max(np.abs(tr.terminal.ravel() - two_agents(1.0, (0.0, 0.5)))))
    assert errs[0] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)


def test_euler_compiled_and_python_paths_agree():
    x0 = np.array([[0.0, 0.1], [0.4, 0.0], [0.9, 0.3], [1.5, 1.0]])
    fast = euler_oracle(ModelField(TopologicalModel(2), ConstantKernel()), x0, 1e-4, 0.5)
    field = ModelField(TopologicalModel(2), ConstantKernel())
    slow = euler_oracle(lambda x: field(x), x0, 1e-4, 0.5)
    np.testing.assert_allclose(fast.terminal, slow.terminal, atol=1e-13)


def test_euler_step_limit():
    with pytest.raises(ValueError):
        euler_oracle(lambda x: -x, np.array([1.0, 2.0]), 1e-3, 1.0)


def test_fd_derivatives_on_closed_form():
    tr = Trajectory.from_function(metric_classical, 0.0, 1.0, 1e-3)
    idx, d = fd_derivatives(tr.times, tr.states)
    t = tr.times[idx]
    exact = np.stack([np.exp(-2 * t) / 3, -np.exp(-2 * t) / 3, 0 * t], axis=1)
    np.testing.assert_allclose(d[:, :, 0], exact, atol=1e-10)
    assert idx[0] == 2 and idx[-1] == len(tr.times) - 3


def test_step_control_validation():
    with pytest.raises(ValueError):
        StepControl(h=0)
    c = StepControl()
    assert c.event_width(1.0) == pytest.approx(2e-10)
