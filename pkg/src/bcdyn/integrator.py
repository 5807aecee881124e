"""Fixed-step RK4 with event bracketing, exact linear propagation and an Euler oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .model import (
    AffineSaturatedKernel,
    ConstantKernel,
    MetricModel,
    ModelField,
    TopologicalModel,
    as_positions,
)


class NumericError(ArithmeticError):
    pass


class RunawayEventsError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepControl:
    h: float = 1e-3
    eps_event: float = 1e-10  # relative: bracket width <= eps_event * (1 + |t|)
    eps_manifold: float = 1e-9  # relative: band is eps_manifold * (1 + |x|)
    max_events: int = 10_000
    max_steps: int = 50_000_000

    def __post_init__(self):
        for name in ("h", "eps_event", "eps_manifold", "max_events", "max_steps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"StepControl.{name} must be positive")

    def event_width(self, t: float) -> float:
        return self.eps_event * (1.0 + abs(t))

    def manifold_band(self, x) -> float:
        return self.eps_manifold * (1.0 + float(np.linalg.norm(x)))

    def to_json(self) -> dict:
        return {
            "h": self.h,
            "eps_event": self.eps_event,
            "eps_manifold": self.eps_manifold,
            "max_events": self.max_events,
            "max_steps": self.max_steps,
        }


@dataclass
class Event:
    time: float
    descriptor: str
    choice: str = ""


@dataclass
class Trajectory:
    """Sampled path: times (m,), states (m, N, n) and event markers."""

    times: np.ndarray
    states: np.ndarray
    events: list[Event] = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 2:
            self.states = self.states[:, :, None]
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    @classmethod
    def from_function(cls, fn: Callable[[float], np.ndarray], t0: float, t1: float, dt: float):
        ts = np.arange(t0, t1 + 0.5 * dt, dt)
        return cls(ts, np.array([as_positions(fn(t)) for t in ts]))


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * h * k1)
    k3 = rhs(x + 0.5 * h * k2)
    k4 = rhs(x + h * k3)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite state after RK4 step")
    return out


def locate_event(
    switch_fn: Callable[[np.ndarray], np.ndarray],
    t0: float,
    t1: float,
    path: Callable[[float], np.ndarray],
    eps_event: float,
    band: float = 0.0,
) -> tuple[float, float, int]:
    """Bisect for the first time a monitored function drops below ``-band``.

    ``switch_fn(x)`` returns an array of switching values that are valid while
    ``>= -band``.  ``path(t)`` gives the state at time t in [t0, t1].
    Returns ``(t_lo, t_hi, index)`` with ``t_hi - t_lo <= eps_event``; the
    state at ``t_hi`` is past the event and ``index`` names the component that
    fired first.
    """
    g0 = np.atleast_1d(switch_fn(path(t0)))
    g1 = np.atleast_1d(switch_fn(path(t1)))
    if np.any(g0 < -band):
        raise ValueError("switching functions already violated at t0")
    if not np.any(g1 < -band):
        raise ValueError("no sign change on [t0, t1]")
    lo, hi = t0, t1
    while hi - lo > eps_event:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if np.any(np.atleast_1d(switch_fn(path(mid))) < -band):
            hi = mid
        else:
            lo = mid
    g = np.atleast_1d(switch_fn(path(hi)))
    return lo, hi, int(np.argmin(g))


# ---------------------------------------------------------------- exact linear flow


def expm_series(M: np.ndarray, tol: float = 1e-17) -> np.ndarray:
    """exp(M) by scaling and squaring around a truncated Taylor series."""
    M = np.asarray(M, dtype=float)
    norm = np.linalg.norm(M, 1)
    s = max(0, int(np.ceil(np.log2(norm / 0.5))) if norm > 0.5 else 0)
    A = M / 2.0**s
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 60):
        term = term @ A / k
        E = E + term
        if np.linalg.norm(term, 1) <= tol * np.linalg.norm(E, 1):
            break
    for _ in range(s):
        E = E @ E
    return E


def laplacian(A: np.ndarray) -> np.ndarray:
    return np.diag(A.sum(axis=1)) - A


def propagate_linear_exact(A, x0, dt: float, kernel=None) -> np.ndarray:
    """Exact solution of the frozen system xdot = -c L x for a constant kernel.

    ``A`` is a 0/1 adjacency matrix (row i lists the neighbors of i) or a
    total neighbor map (sequence with ``A[i] = Gamma(i)``).
    """
    if kernel is None:
        kernel = ConstantKernel(1.0)
    if not isinstance(kernel, ConstantKernel):
        raise NotImplementedError("exact propagation needs a constant kernel")
    x0 = as_positions(x0)
    A = np.asarray(A)
    if A.ndim == 1:
        adj = np.zeros((len(A), len(A)))
        adj[np.arange(len(A)), A.astype(int)] = 1.0
        A = adj
    if dt == 0:
        return x0.copy()
    return expm_series(-kernel.c * dt * laplacian(A)) @ x0


# ---------------------------------------------------------------- Euler oracle


@numba.njit(cache=True)
def _kernel_value(kind, p0, p1, p2, r):
    if kind == 0:
        return p0
    v = p0 + p1 * r
    return v if v < p2 else p2


@numba.njit(cache=True)
def _euler_loop(x, mode, param, kind, p0, p1, p2, h, steps):
    N, n = x.shape
    v = np.zeros_like(x)
    d2 = np.zeros(N)
    taken = np.zeros(N, dtype=np.bool_)
    for _ in range(steps):
        for i in range(N):
            for c in range(n):
                v[i, c] = 0.0
            for j in range(N):
                s = 0.0
                for c in range(n):
                    diff = x[j, c] - x[i, c]
                    s += diff * diff
                d2[j] = s
            if mode == 0:
                r2 = param * param
                for j in range(N):
                    if j != i and d2[j] < r2:
                        w = _kernel_value(kind, p0, p1, p2, np.sqrt(d2[j]))
                        for c in range(n):
                            v[i, c] += w * (x[j, c] - x[i, c])
            else:
                for j in range(N):
                    taken[j] = False
                taken[i] = True
                for _k in range(int(param)):
                    best = -1
                    for j in range(N):
                        # strict < keeps the lowest index among ties
                        if not taken[j] and (best < 0 or d2[j] < d2[best]):
                            best = j
                    taken[best] = True
                    w = _kernel_value(kind, p0, p1, p2, np.sqrt(d2[best]))
                    for c in range(n):
                        v[i, c] += w * (x[best, c] - x[i, c])
        for i in range(N):
            for c in range(n):
                x[i, c] += h * v[i, c]
    return x


def euler_oracle(rhs, x0, h_fine: float, horizon: float, record_every: int = 0) -> Trajectory:
    """Explicit Euler re-evaluating the pointwise field at every step.

    ``rhs`` is any callable x -> xdot.  A :class:`ModelField` with a built-in
    kernel runs through a compiled loop carrying its own neighbor rule, which
    keeps this oracle independent of the engines it checks.
    """
    if h_fine > 1e-4:
        raise ValueError("euler_oracle needs h_fine <= 1e-4")
    x = np.array(as_positions(x0), dtype=float)
    steps = int(round(horizon / h_fine))
    if record_every <= 0:
        record_every = steps if steps > 0 else 1
    times = [0.0]
    states = [x.copy()]
    fast = _compiled_params(rhs)
    done = 0
    while done < steps:
        chunk = min(record_every, steps - done)
        if fast is not None:
            x = _euler_loop(x, *fast, h_fine, chunk)
        else:
            for _ in range(chunk):
                x = x + h_fine * np.asarray(rhs(x), dtype=float).reshape(x.shape)
        done += chunk
        times.append(done * h_fine)
        states.append(x.copy())
    return Trajectory(np.array(times), np.array(states))


def kernel_params(k) -> tuple | None:
    """(kind, p0, p1, p2) understood by the compiled loops, or None."""
    if isinstance(k, ConstantKernel):
        return (0, float(k.c), 0.0, 0.0)
    if isinstance(k, AffineSaturatedKernel):
        return (1, float(k.c0), float(k.slope), float(k.cap))
    return None


def _compiled_params(rhs):
    if not isinstance(rhs, ModelField):
        return None
    kp = kernel_params(rhs.kernel)
    if kp is None:
        return None
    m = rhs.model
    if isinstance(m, MetricModel):
        return (0, float(m.radius), *kp)
    if isinstance(m, TopologicalModel):
        return (1, float(m.kappa), *kp)
    return None


def fd_derivatives(times: np.ndarray, states: np.ndarray, rel_tol: float = 1e-9):
    """Five-point central differences at samples whose stencil is uniformly spaced.

    Returns ``(indices, derivatives)``; samples next to a segment boundary or
    an uneven step are skipped.
    """
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    m = len(times)
    if m < 5:
        return np.zeros(0, dtype=int), np.zeros((0,) + states.shape[1:])
    k = np.arange(2, m - 2)
    dt = times[k + 1] - times[k]
    ok = dt > 0
    for off in (-2, -1, 2):
        ok &= np.abs(times[k + off] - times[k] - off * dt) <= rel_tol * np.maximum(dt, 1e-300) * 4
    k = k[ok]
    dt = dt[ok]
    deriv = (
        -states[k + 2] + 8.0 * states[k + 1] - 8.0 * states[k - 1] + states[k - 2]
    ) / (12.0 * dt[:, None, None])
    return k, deriv
