"""Configurations, interaction kernels, neighbor rules and the pointwise vector fields.

Agent indices are 0-based throughout the Python API.  Human-facing output
(CSV headers, descriptor strings) uses 1-based labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid model, kernel or configuration parameters."""


@dataclass(frozen=True)
class Configuration:
    """Positions of N agents in R^n at time t (array of shape (N, n))."""

    x: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ConfigError(f"positions must be an N-by-n array, got shape {x.shape}")
        if x.shape[0] < 2 or x.shape[1] < 1:
            raise ConfigError(f"need N >= 2 agents and n >= 1, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ConfigError("positions must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def to_json(self) -> dict:
        return {"n": self.n, "positions": self.x.tolist()}

    @classmethod
    def from_json(cls, data: dict | str) -> "Configuration":
        if isinstance(data, str):
            data = json.loads(data)
        pos = np.array(data["positions"], dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if "n" in data and pos.shape[1] != int(data["n"]):
            raise ConfigError(f"declared n={data['n']} but positions have {pos.shape[1]} columns")
        return cls(pos, float(data.get("t", 0.0)))


def as_positions(x) -> np.ndarray:
    """Return a float (N, n) array from a Configuration or array-like."""
    if isinstance(x, Configuration):
        return x.x
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class ConstantKernel:
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError("constant kernel needs c > 0")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.full_like(r, self.c)

    def integral(self, r):
        """I(r) = int_0^r a(s) s ds."""
        r = np.asarray(r, dtype=float)
        return 0.5 * self.c * r * r

    @property
    def lipschitz(self) -> float:
        return 0.0

    def spec(self) -> str:
        return f"constant:{self.c!r}"


@dataclass(frozen=True)
class AffineSaturatedKernel:
    """a(r) = min(c0 + slope * r, cap)."""

    c0: float
    slope: float
    cap: float

    def __post_init__(self):
        if self.c0 < 0 or self.slope < 0:
            raise ConfigError("affsat kernel needs c0 >= 0 and slope >= 0")
        if self.c0 == 0 and self.slope == 0:
            raise ConfigError("affsat kernel must be positive for r > 0")
        if not self.cap > 0 or self.cap < self.c0:
            raise ConfigError("affsat kernel needs cap > 0 and cap >= c0")

    @property
    def knee(self) -> float:
        # radius where the cap is reached
        if self.slope == 0:
            return np.inf
        return (self.cap - self.c0) / self.slope

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.minimum(self.c0 + self.slope * r, self.cap)

    def integral(self, r):
        r = np.asarray(r, dtype=float)
        k = self.knee
        rk = np.minimum(r, k)
        below = 0.5 * self.c0 * rk**2 + self.slope * rk**3 / 3.0
        above = 0.5 * self.cap * (r**2 - rk**2)
        return below + above

    @property
    def lipschitz(self) -> float:
        return self.slope

    def spec(self) -> str:
        return f"affsat:{self.c0!r},{self.slope!r},{self.cap!r}"


Kernel = ConstantKernel | AffineSaturatedKernel


def parse_kernel(text: str) -> Kernel:
    """Parse ``constant:1.0`` or ``affsat:c0,slope,cap``."""
    try:
        kind, _, args = text.partition(":")
        kind = kind.strip().lower()
        if kind == "constant":
            return ConstantKernel(float(args) if args else 1.0)
        if kind == "affsat":
            c0, slope, cap = (float(v) for v in args.split(","))
            return AffineSaturatedKernel(c0, slope, cap)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad kernel spec {text!r}: {exc}") from exc
    raise ConfigError(f"unknown kernel spec {text!r}")


def eval_kernel(kernel: Kernel, r: float) -> float:
    if r < 0:
        raise ValueError(f"kernel evaluated at negative distance {r}")
    return float(kernel(r))


# ---------------------------------------------------------------- models


@dataclass(frozen=True)
class MetricModel:
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError("metric radius must be positive")

    def check(self, N: int) -> None:
        pass

    def spec(self) -> dict:
        return {"model": "metric", "radius": self.radius}


@dataclass(frozen=True)
class TopologicalModel:
    kappa: int = 1

    def __post_init__(self):
        if int(self.kappa) != self.kappa or self.kappa < 1:
            raise ConfigError("kappa must be a positive integer")

    def check(self, N: int) -> None:
        if not 1 <= self.kappa <= N - 1:
            raise ConfigError(f"kappa={self.kappa} out of range for N={N}")

    def spec(self) -> dict:
        return {"model": "topological", "kappa": self.kappa}


Model = MetricModel | TopologicalModel


# ---------------------------------------------------------------- neighbors


def sq_distances(x: np.ndarray) -> np.ndarray:
    diff = x[None, :, :] - x[:, None, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def metric_neighbors(x, i: int, radius: float = 1.0) -> list[int]:
    x = as_positions(x)
    if not radius > 0:
        raise ConfigError("radius must be positive")
    d = np.linalg.norm(x - x[i], axis=1)
    return [j for j in range(x.shape[0]) if j != i and d[j] < radius]


def _ranked(d2_row: np.ndarray, i: int) -> list[int]:
    # stable sort: equal distances keep index order, i.e. lower index first
    order = np.argsort(d2_row, kind="stable")
    return [int(j) for j in order if j != i]


def topological_neighbors(x, i: int, kappa: int) -> list[int]:
    x = as_positions(x)
    N = x.shape[0]
    if not 1 <= kappa <= N - 1:
        raise ConfigError(f"kappa={kappa} out of range for N={N}")
    diff = x - x[i]
    d2 = np.einsum("ij,ij->i", diff, diff)
    return _ranked(d2, i)[:kappa]


def adjacency(x, model: Model) -> np.ndarray:
    """0/1 matrix A with A[i, j] = 1 iff j is a neighbor of i."""
    x = as_positions(x)
    N = x.shape[0]
    d2 = sq_distances(x)
    if isinstance(model, MetricModel):
        A = (d2 < model.radius**2).astype(float)
        np.fill_diagonal(A, 0.0)
        return A
    model.check(N)
    A = np.zeros((N, N))
    for i in range(N):
        A[i, _ranked(d2[i], i)[: model.kappa]] = 1.0
    return A


def interaction_graph(x, model: Model) -> list[tuple[int, int]]:
    """Directed edge list (i, j) meaning j is a neighbor of i."""
    A = adjacency(x, model)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(A))]


def field_from_adjacency(x: np.ndarray, kernel: Kernel, A: np.ndarray) -> np.ndarray:
    """sum_j A_ij a(|x_j - x_i|) (x_j - x_i) for every agent i."""
    diff = x[None, :, :] - x[:, None, :]
    if isinstance(kernel, ConstantKernel):
        w = kernel.c * A
    else:
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        w = A * kernel(r)
    return np.einsum("ij,ijk->ik", w, diff)


def vector_field(model: Model, kernel: Kernel, x) -> np.ndarray:
    """Pointwise right-hand side f^m(x) or f^t(x)."""
    x = as_positions(x)
    return field_from_adjacency(x, kernel, adjacency(x, model))


@dataclass(frozen=True)
class ModelField:
    """Callable pointwise field x -> f(x) for a fixed model and kernel."""

    model: Model
    kernel: Kernel = field(default_factory=ConstantKernel)

    def __call__(self, x) -> np.ndarray:
        return vector_field(self.model, self.kernel, x)


def average(x) -> np.ndarray:
    return as_positions(x).mean(axis=0)


def scale_of(x) -> float:
    """Characteristic length used to make tolerances relative: 1 + |x|."""
    return 1.0 + float(np.linalg.norm(as_positions(x)))


def diameter(x) -> float:
    return float(np.sqrt(sq_distances(as_positions(x)).max()))


def model_from_spec(data: dict) -> Model:
    kind = data.get("model")
    if kind == "metric":
        return MetricModel(float(data.get("radius", 1.0)))
    if kind == "topological":
        return TopologicalModel(int(data["kappa"]))
    raise ConfigError(f"unknown model {kind!r}")


def positions_list(rows: Sequence) -> np.ndarray:
    return as_positions(np.array(rows, dtype=float))
