"""Run configurations, trajectory CSV files and report JSON."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .integrator import StepControl
from .model import ConfigError, Kernel, Model, model_from_spec, parse_kernel

SOLUTIONS = ("caratheodory", "krasovsky")


@dataclass
class RunConfig:
    """Everything needed to reproduce one run."""

    model: dict
    kernel: str
    positions: list
    solution: str = "caratheodory"
    policy: str = ""
    branch: str | None = None
    horizon: float = 10.0
    ctrl: dict = field(default_factory=lambda: StepControl().to_json())
    initial_graph: list | None = None
    scenario: str | None = None

    def __post_init__(self):
        if self.solution not in SOLUTIONS:
            raise ConfigError(f"solution must be one of {SOLUTIONS}, got {self.solution!r}")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        self.model_spec()
        self.kernel_spec()
        self.step_control()
        arr = self.x0()
        if arr.ndim != 2 or arr.shape[0] < 2 or not np.all(np.isfinite(arr)):
            raise ConfigError("positions must be a finite N-by-n array with N >= 2")

    def model_spec(self) -> Model:
        return model_from_spec(self.model)

    def kernel_spec(self) -> Kernel:
        return parse_kernel(self.kernel)

    def step_control(self) -> StepControl:
        try:
            return StepControl(**self.ctrl)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad step control: {exc}") from exc

    def x0(self) -> np.ndarray:
        arr = np.array(self.positions, dtype=float)
        return arr[:, None] if arr.ndim == 1 else arr

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_json(), indent=2) + "\n")


def load_config(path: str | Path) -> RunConfig:
    return RunConfig.from_json(json.loads(Path(path).read_text()))


def load_positions(path: str | Path) -> np.ndarray:
    """Read a configuration file ``{"n": ..., "positions": [[...], ...]}``."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or "positions" not in data:
        raise ConfigError(f"{path}: expected an object with a 'positions' list")
    pos = np.array(data["positions"], dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    if "n" in data and pos.shape[1] != int(data["n"]):
        raise ConfigError(f"{path}: declared n={data['n']} but positions have {pos.shape[1]} columns")
    return pos


def _fmt(v: float) -> str:
    return "%.17g" % v


def event_labels(traj) -> dict[float, str]:
    out: dict[float, str] = {}
    for ev in traj.events:
        tag = ev.descriptor + (f"[{ev.choice}]" if ev.choice else "")
        out[ev.time] = f"{out[ev.time]};{tag}" if ev.time in out else tag
    return out


def write_trajectory_csv(traj, path: str | Path) -> None:
    """Columns t, x_<agent>_<coord> (1-based) and event; event rows carry the manifold descriptor."""
    times, states = traj.times, traj.states
    N, n = states.shape[1:]
    header = ["t"] + [f"x_{i + 1}_{d + 1}" for i in range(N) for d in range(n)] + ["event"]
    labels = event_labels(traj)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, x in zip(times, states):
            w.writerow([_fmt(t)] + [_fmt(v) for v in x.ravel()] + [labels.get(t, "")])


def read_trajectory_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = header[1:-1]
    N = max(int(c.split("_")[1]) for c in cols)
    n = len(cols) // N
    data = np.array([[float(v) for v in r[:-1]] for r in body])
    return data[:, 0], data[:, 1:].reshape(len(body), N, n), [r[-1] for r in body]


def lyapunov_series(traj, spec: Model, kernel: Kernel, max_points: int = 1000) -> dict:
    name, fn = analysis.lyapunov_for(spec, kernel)
    times, states = traj.times, traj.states
    idx = np.unique(np.linspace(0, len(times) - 1, min(max_points, len(times))).round().astype(int))
    return {"name": name, "t": times[idx].tolist(), "values": fn.batch(states[idx]).tolist()}


def build_report(traj, spec: Model, kernel: Kernel, cfg: RunConfig, certificate=None, extra: dict | None = None) -> dict:
    props = analysis.property_suite(traj, spec, kernel, cfg.solution)
    clusters = analysis.detect_clusters(traj.terminal, spec, 1e-6 * (1.0 + analysis.diameter(traj.states[0])))
    report = {
        "config": cfg.to_json(),
        "branch": traj.branch,
        "best_effort": bool(traj.best_effort),
        "t_end": float(traj.t_end),
        "terminal_state": traj.terminal.tolist(),
        "events": [{"time": e.time, "manifold": e.descriptor, "choice": e.choice} for e in traj.events],
        "properties": [p.to_json() for p in props],
        "terminal_clusters": clusters.to_json(),
        "lyapunov": lyapunov_series(traj, spec, kernel),
    }
    if certificate is not None:
        report["certificate"] = certificate.to_json()
    if extra:
        report.update(extra)
    return report


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
