"""Frozen-graph segments: smooth fields, switching functions and the event-aware runner."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fastpath import segment_loop
from .integrator import (
    Event,
    NumericError,
    RunawayEventsError,
    StepControl,
    kernel_params,
    locate_event,
    rk4_step,
)
from .model import ConstantKernel, Kernel, field_from_adjacency


class FrozenField:
    """xdot_i = sum_j A_ij a(|x_j - x_i|)(x_j - x_i) with A fixed."""

    def __init__(self, A: np.ndarray, kernel: Kernel):
        self.A = np.asarray(A, dtype=float)
        self.kernel = kernel
        if isinstance(kernel, ConstantKernel):
            L = np.diag(self.A.sum(axis=1)) - self.A
            self._M = -kernel.c * L
        else:
            self._M = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self._M is not None:
            return self._M @ x
        return field_from_adjacency(x, self.kernel, self.A)

    def compiled_args(self) -> tuple | None:
        kp = kernel_params(self.kernel)
        if kp is None:
            return None
        return (self.A, self.A, False, 2, 0, 0, 0, 1.0, *kp)

    def rk4_matrix(self, h: float) -> np.ndarray | None:
        """The RK4 step as a matrix when the field is linear, else None."""
        if self._M is None:
            return None
        Z = h * self._M
        Z2 = Z @ Z
        return np.eye(len(Z)) + Z + Z2 / 2.0 + Z2 @ Z / 6.0 + Z2 @ Z2 / 24.0


@dataclass
class Switches:
    """Switching functions g = s1*|x_a1-x_b1|^2 + s2*|x_a2-x_b2|^2 + c.

    A frozen graph stays valid while every g >= -band.  ``labels`` carries one
    descriptor per function: ``(i, j)`` for a metric pair, ``(i, j, k)`` for
    agent i with neighbor j and competitor k.
    """

    a1: np.ndarray
    b1: np.ndarray
    s1: np.ndarray
    a2: np.ndarray
    b2: np.ndarray
    s2: np.ndarray
    c: np.ndarray
    labels: list = field(default_factory=list)
    extra: Callable[[np.ndarray], np.ndarray] | None = None
    extra_labels: list = field(default_factory=list)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if len(self.a1):
            d1 = x[self.a1] - x[self.b1]
            d2 = x[self.a2] - x[self.b2]
            g = (
                self.s1 * np.einsum("ij,ij->i", d1, d1)
                + self.s2 * np.einsum("ij,ij->i", d2, d2)
                + self.c
            )
        else:
            g = np.empty(0)
        if self.extra is not None:
            g = np.concatenate([g, self.extra(x)])
        return g

    def tolerate(self, x: np.ndarray, band: float) -> "Switches":
        """Shift rows already below -band at x up to zero (start-of-segment slack)."""
        if not len(self.a1):
            return self
        g = self(x)[: len(self.a1)]
        low = g < -band
        if low.any():
            self.c = self.c.copy()
            self.c[low] -= g[low]
        return self

    def label(self, index: int):
        if index < len(self.labels):
            return self.labels[index]
        return self.extra_labels[index - len(self.labels)]

    @classmethod
    def empty(cls) -> "Switches":
        z = np.zeros(0, dtype=int)
        return cls(z, z, np.zeros(0), z, z, np.zeros(0), np.zeros(0))

    @classmethod
    def from_rows(cls, rows: list[tuple], labels: list) -> "Switches":
        if not rows:
            sw = cls.empty()
            return sw
        a1, b1, s1, a2, b2, s2, c = (np.array(col) for col in zip(*rows))
        return cls(
            a1.astype(int), b1.astype(int), s1.astype(float),
            a2.astype(int), b2.astype(int), s2.astype(float),
            c.astype(float), list(labels),
        )


def metric_switches(A: np.ndarray, radius: float, skip: set | None = None) -> Switches:
    """One function per unordered pair: r^2 - d^2 if the edge is on, d^2 - r^2 if off."""
    N = A.shape[0]
    rows, labels = [], []
    r2 = radius * radius
    for i in range(N):
        for j in range(i + 1, N):
            if skip and (i, j) in skip:
                continue
            if A[i, j]:
                rows.append((i, j, -1.0, i, i, 0.0, r2))
            else:
                rows.append((i, j, 1.0, i, i, 0.0, -r2))
            labels.append((i, j))
    return Switches.from_rows(rows, labels)


def topological_switches(
    x: np.ndarray,
    A: np.ndarray,
    coincide_tol: float | None = None,
    skip: set | None = None,
) -> Switches:
    """d^2(i,k) - d^2(i,j) >= 0 for each neighbor j and non-neighbor k of i.

    With ``coincide_tol`` set, competitors sitting on the current neighbor
    (|x_k - x_j| <= coincide_tol) are not monitored.  Triples listed in
    ``skip`` are dropped.
    """
    N = A.shape[0]
    rows, labels = [], []
    for i in range(N):
        nbrs = np.flatnonzero(A[i])
        others = [k for k in range(N) if k != i and not A[i, k]]
        for j in nbrs:
            for k in others:
                if skip and (i, int(j), k) in skip:
                    continue
                if coincide_tol is not None and np.linalg.norm(x[k] - x[j]) <= coincide_tol:
                    continue
                rows.append((i, k, 1.0, i, j, -1.0, 0.0))
                labels.append((i, int(j), k))
    return Switches.from_rows(rows, labels)


def describe(label) -> str:
    """Human-readable 1-based descriptor for a switching label."""
    if isinstance(label, str):
        return label
    if len(label) == 2:
        return f"pair({label[0] + 1},{label[1] + 1})"
    return f"triple({label[0] + 1},{label[1] + 1},{label[2] + 1})"


# ---------------------------------------------------------------- trajectories


@dataclass
class Segment:
    t0: float
    t1: float
    kind: str  # "frozen" or "slide"
    graph: np.ndarray  # adjacency used (for slides: the minus-side graph)
    times: np.ndarray
    states: np.ndarray
    manifold: tuple | None = None
    note: str = ""


@dataclass
class PiecewiseTrajectory:
    segments: list[Segment] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    branch: str = "default"
    branch_id: int = 0
    parent: int | None = None
    best_effort: bool = False

    @property
    def times(self) -> np.ndarray:
        return self._flat()[0]

    @property
    def states(self) -> np.ndarray:
        return self._flat()[1]

    @property
    def terminal(self) -> np.ndarray:
        return self.segments[-1].states[-1]

    @property
    def t_end(self) -> float:
        return self.segments[-1].t1

    def _flat(self):
        ts, xs = [], []
        last = -np.inf
        for seg in self.segments:
            keep = seg.times > last
            ts.append(seg.times[keep])
            xs.append(seg.states[keep])
            if keep.any():
                last = seg.times[keep][-1]
        return np.concatenate(ts), np.concatenate(xs)

    def event_flags(self) -> dict[float, str]:
        return {ev.time: ev.descriptor for ev in self.events}

    def copy_prefix(self) -> "PiecewiseTrajectory":
        return PiecewiseTrajectory(
            segments=list(self.segments),
            events=list(self.events),
            branch=self.branch,
            branch_id=self.branch_id,
            parent=self.parent,
            best_effort=self.best_effort,
        )


@dataclass
class SegmentRun:
    times: np.ndarray
    states: np.ndarray
    fired: int | None  # index into the switches, None when t_end was reached
    t_stop: float
    x_stop: np.ndarray
    converged: bool = False


def run_segment(
    rhs: Callable[[np.ndarray], np.ndarray],
    switches: Switches,
    x0: np.ndarray,
    t0: float,
    t_end: float,
    ctrl: StepControl,
    band: float,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    stop_tol: float | None = None,
    step_budget: list | None = None,
) -> SegmentRun:
    """Integrate a smooth frozen field with RK4 until a switch fires or t_end."""
    h = ctrl.h
    linear = getattr(rhs, "rk4_matrix", None)
    P = linear(h) if linear is not None and project is None else None

    def advance(x, tau, full=False):
        if P is not None and full:
            return P @ x
        y = rk4_step(rhs, x, tau)
        return project(y) if project is not None else y

    times = [t0]
    states = [x0.copy()]
    x = x0.copy()
    k = 0
    t = t0
    fast = getattr(rhs, "compiled_args", None)
    if fast is not None and (switches.extra is None or getattr(rhs, "sliding", False)):
        args = fast()
        if args is not None:
            n_full = int(np.floor((t_end - t0) / h))
            while n_full > 0 and t0 + n_full * h > t_end - 1e-12 * h:
                n_full -= 1
            stop = -1.0 if stop_tol is None else float(stop_tol)
            while k < n_full:
                m = min(4096, n_full - k)
                buf = np.empty((m,) + x.shape)
                taken, status = segment_loop(
                    x, *args, h, m, switches.a1, switches.b1, switches.s1,
                    switches.a2, switches.b2, switches.s2, switches.c, band, stop, buf,
                )
                if status == 3:
                    raise NumericError("non-finite state in compiled RK4 loop")
                if step_budget is not None:
                    step_budget[0] += taken
                    if step_budget[0] > ctrl.max_steps:
                        raise RunawayEventsError(f"exceeded max_steps={ctrl.max_steps}")
                if taken:
                    times.extend(t0 + (k + 1 + np.arange(taken)) * h)
                    states.extend(buf[:taken])
                    x = buf[taken - 1].copy()
                    k += taken
                    t = t0 + k * h
                if status == 2:
                    return SegmentRun(np.array(times), np.array(states), None, t, x, converged=True)
                if status == 1:
                    break
    while t < t_end:
        if step_budget is not None:
            step_budget[0] += 1
            if step_budget[0] > ctrl.max_steps:
                raise RunawayEventsError(f"exceeded max_steps={ctrl.max_steps}")
        t_next = t0 + (k + 1) * h
        full = True
        if t_next > t_end or t_end - t_next < 1e-12 * h:
            t_next = t_end
            full = False
        tau = t_next - t
        y = advance(x, h if full else tau, full)
        g = switches(y)
        if g.size and np.any(g < -band):
            x_start = x
            lo, hi, idx = locate_event(
                switches, 0.0, tau, lambda s: x_start if s == 0.0 else advance(x_start, s),
                ctrl.event_width(t), band=band,
            )
            x_ev = advance(x, hi)
            t_ev = t + hi
            if t_ev > t:
                times.append(t_ev)
                states.append(x_ev)
            return SegmentRun(np.array(times), np.array(states), idx, t_ev, x_ev)
        x = y
        t = t_next
        k += 1
        times.append(t)
        states.append(x)
        if stop_tol is not None and np.max(np.abs(rhs(x))) <= stop_tol:
            return SegmentRun(np.array(times), np.array(states), None, t, x, converged=True)
    return SegmentRun(np.array(times), np.array(states), None, t, x)


class EventCounter:
    def __init__(self, ctrl: StepControl):
        self.ctrl = ctrl
        self.count = 0

    def bump(self) -> None:
        self.count += 1
        if self.count > self.ctrl.max_events:
            raise RunawayEventsError(f"more than max_events={self.ctrl.max_events} events")
