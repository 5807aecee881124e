"""bc-dyn command line: run one simulation, list presets, verify presets."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io, scenarios
from .caratheodory import simulate_caratheodory, verify_caratheodory
from .integrator import StepControl
from .krasovsky import parse_policy, simulate_krasovsky, verify_krasovsky
from .model import ConfigError, MetricModel, TopologicalModel

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; usage errors here map to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads() -> int:
    raw = os.environ.get("BC_DYN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"BC_DYN_THREADS must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bc-dyn", description="Bounded-confidence opinion dynamics with discontinuous fields.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate one configuration or preset")
    r.add_argument("--scenario", help="preset name (see 'bc-dyn list')")
    r.add_argument("--branch", help="preset branch, or a leaf label of an enumerated Krasovsky run")
    r.add_argument("--model", choices=("metric", "topological"))
    r.add_argument("--kappa", type=int, help="neighbor count for the topological model")
    r.add_argument("--radius", type=float, help="metric radius (default 1)")
    r.add_argument("--kernel", help="'constant:c' or 'affsat:c0,slope,cap' (default constant:1.0)")
    r.add_argument("--init", help="configuration JSON file, or random:N,n (uses --seed)")
    r.add_argument("--solution", choices=io.SOLUTIONS)
    r.add_argument("--policy", help="Krasovsky policy: 'enumerate[:max_branches,max_depth[,T1;T2]]' or choices")
    r.add_argument("--tmax", type=float, help="horizon")
    r.add_argument("--dt", type=float, help="RK4 step")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--config", help="read the full run configuration from JSON")
    r.add_argument("--save-config", help="write the resolved run configuration to JSON")
    r.add_argument("--out", help="trajectory CSV")
    r.add_argument("--report", help="report JSON")
    r.add_argument("--branches-out", help="branch tree JSON (Krasovsky)")
    r.add_argument("--strict", action="store_true", help="exit 2 when any check fails")

    sub.add_parser("list", help="list presets with expected outcomes")

    v = sub.add_parser("verify", help="run presets against their expectations")
    v.add_argument("names", nargs="*", help="preset names (default: all)")
    v.add_argument("--filter", default=None, help="only presets whose name contains this text")
    v.add_argument("--random", type=int, default=0, metavar="COUNT", help="also sweep COUNT random instances per model")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--dt", type=float)
    v.add_argument("--report", help="summary JSON")
    return p


# ---------------------------------------------------------------- run


def _positions(spec: str, seed: int) -> np.ndarray:
    if spec.startswith("random:"):
        try:
            N, n = (int(v) for v in spec[7:].split(","))
        except ValueError:
            raise UsageError("--init random:N,n expects two integers") from None
        if N < 2 or n < 1:
            raise UsageError("--init random:N,n needs N >= 2 and n >= 1")
        return np.random.default_rng(seed).uniform(0.0, 2.0, size=(N, n))
    return io.load_positions(spec)


def _model_dict(args, base: dict | None) -> dict:
    if args.model is None:
        if base is None:
            raise UsageError("give --scenario, --config or --model with --init")
        out = dict(base)
        if args.kappa is not None:
            if out.get("model") != "topological":
                raise UsageError("--kappa applies to the topological model only")
            out["kappa"] = args.kappa
        return out
    if args.model == "metric":
        if args.kappa is not None:
            raise UsageError("--kappa applies to the topological model only")
        return MetricModel(args.radius if args.radius is not None else 1.0).spec()
    return TopologicalModel(args.kappa if args.kappa is not None else 1).spec()


def resolve_config(args) -> io.RunConfig:
    """Merge --config, --scenario and explicit flags (flags win)."""
    base = None
    preset_branch = None
    leaf = None
    if args.config:
        if args.scenario:
            raise UsageError("--config and --scenario are exclusive")
        base = io.load_config(args.config).to_json()
    elif args.scenario:
        try:
            preset = scenarios.get_preset(args.scenario)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        try:
            preset_branch = preset.branch(args.branch)
        except KeyError as exc:
            if args.policy is None:
                raise UsageError(exc.args[0]) from None
            # with an overriding policy, --branch names a leaf of that run
            preset_branch, leaf = preset.default_branch, args.branch
        g = preset_branch.initial_graph
        base = {
            "model": preset.model.spec(),
            "kernel": preset.kernel.spec(),
            "positions": preset.positions().tolist(),
            "solution": preset_branch.solution,
            "policy": preset_branch.policy,
            "branch": preset_branch.name,
            "horizon": preset.horizon,
            "initial_graph": None if g is None else [list(r) if isinstance(r, tuple) else r for r in g],
            "scenario": preset.name,
        }
    data = dict(base or {})
    data["model"] = _model_dict(args, data.get("model"))
    if args.kernel:
        data["kernel"] = args.kernel
    data.setdefault("kernel", "constant:1.0")
    if args.init:
        data["positions"] = _positions(args.init, args.seed).tolist()
        data["initial_graph"] = None
    if "positions" not in data:
        raise UsageError("no initial configuration: use --init, --scenario or --config")
    if args.solution:
        if args.solution != data.get("solution"):
            data["initial_graph"] = None
        data["solution"] = args.solution
    if args.policy is not None:
        data["policy"] = args.policy
    if args.branch is not None and preset_branch is None:
        data["branch"] = args.branch
    if args.tmax is not None:
        data["horizon"] = args.tmax
    ctrl = dict(data.get("ctrl") or StepControl().to_json())
    if args.dt is not None:
        ctrl["h"] = args.dt
    data["ctrl"] = ctrl
    if preset_branch is not None and (args.init or args.model or args.kernel or args.solution or args.policy is not None):
        # the preset's expectations (and branch label) no longer describe this run
        data["scenario"] = None
        data["branch"] = leaf
    return io.RunConfig.from_json(data)


def execute(cfg: io.RunConfig):
    """Simulate; returns (trajectory, branch set or None)."""
    spec, kernel, ctrl, x0 = cfg.model_spec(), cfg.kernel_spec(), cfg.step_control(), cfg.x0()
    if cfg.solution == "caratheodory":
        g = cfg.initial_graph
        if g is not None:
            g = np.array(g, dtype=float) if isinstance(g[0], list) else list(g)
        tr = simulate_caratheodory(x0, spec, kernel, ctrl, cfg.horizon, initial_graph=g, branch=cfg.branch or "default")
        return tr, None
    bs = simulate_krasovsky(x0, spec, kernel, parse_policy(cfg.policy or "pointwise"), ctrl, cfg.horizon)
    if len(bs) > 1 and cfg.branch and cfg.scenario is None:
        try:
            return bs.by_label(cfg.branch), bs
        except KeyError:
            raise UsageError(f"no branch labelled {cfg.branch!r}; have {[t.branch for t in bs]}") from None
    tr = bs[0]
    if cfg.scenario is not None and cfg.branch:
        tr.branch = cfg.branch
    return tr, bs


def _certify(tr, cfg: io.RunConfig):
    spec, kernel = cfg.model_spec(), cfg.kernel_spec()
    if cfg.solution == "caratheodory":
        return verify_caratheodory(tr, spec, kernel, max_samples=400)
    return verify_krasovsky(tr, spec, kernel, max_samples=200)


def _single_tree(tr) -> dict:
    return {"nodes": [{"branch_id": 0, "parent": None, "event": None, "terminal_state": tr.terminal.tolist()}]}


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    if args.save_config:
        io.save_config(cfg, args.save_config)
    tr, bs = execute(cfg)
    spec, kernel = cfg.model_spec(), cfg.kernel_spec()
    cert = _certify(tr, cfg)
    extra = {}
    if cfg.scenario is not None:
        preset = scenarios.get_preset(cfg.scenario)
        mine = [e for e in preset.expectations if (e.branch or preset.default_branch.name) == cfg.branch]
        runs = {cfg.branch: (tr, bs)}
        checks = [scenarios._check(preset, e, runs) for e in mine]
        extra["expectations"] = [c.to_json() for c in checks]
    report = io.build_report(tr, spec, kernel, cfg, cert, extra)
    if args.out:
        io.write_trajectory_csv(tr, args.out)
    if args.report:
        io.write_json(report, args.report)
    if args.branches_out:
        io.write_json(bs.to_json() if bs is not None else _single_tree(tr), args.branches_out)

    term = np.array2string(tr.terminal.squeeze(), precision=6, suppress_small=True)
    print(f"branch {tr.branch}: t_end={tr.t_end:g}, {len(tr.events)} events, terminal {term}")
    if bs is not None and len(bs) > 1:
        print(f"{len(bs)} branches: " + ", ".join(t.branch for t in bs))
    failed = [p["property"] for p in report["properties"] if not p["pass"]]
    if not cert.ok:
        failed.append("certificate")
    failed += [f"expect:{c['kind']}" for c in extra.get("expectations", []) if not c["pass"]]
    print("checks: " + ("all pass" if not failed else "failing " + ", ".join(failed)))
    if tr.best_effort:
        print("note: topological kappa > 1 runs are best effort")
    return EXIT_FAILED if (args.strict and failed) else EXIT_OK


# ---------------------------------------------------------------- list / verify


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (tuple, list)):
        return "(" + ", ".join(_fmt_value(u) for u in v) + ")"
    return str(v)


def cmd_list(args) -> int:
    for p in scenarios.PRESETS:
        print(f"{p.name}  [{p.model.spec()['model']}"
              + (f" kappa={p.model.kappa}" if isinstance(p.model, TopologicalModel) else "")
              + f", horizon {p.horizon:g}]")
        print(f"    {p.summary}")
        print(f"    x0 = {_fmt_value(list(p.x0))}")
        print("    branches: " + ", ".join(f"{b.name} ({b.solution}{': ' + b.policy if b.policy else ''})" for b in p.branches))
        for e in p.expectations:
            where = f" @{e.branch}" if e.branch else ""
            print(f"    expect {e.kind}{where} = {_fmt_value(e.value)}  [{e.source}]")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = args.names or None
    if args.filter is not None:
        pool = args.names or [p.name for p in scenarios.PRESETS]
        names = [n for n in pool if args.filter in n]
    if names:
        for n in names:
            try:
                scenarios.get_preset(n)
            except KeyError as exc:
                raise UsageError(exc.args[0]) from None
    ctrl = StepControl(h=args.dt) if args.dt else None
    threads = _threads()
    summary = scenarios.verify_all(names, ctrl, threads)
    for p in summary["presets"]:
        status = "PASS" if p["pass"] else "FAIL"
        print(f"{status}  {p['name']}" + (f"  ({p['error']})" if p["error"] else ""))
        for c in p["checks"]:
            if not c["pass"]:
                print(f"      {c['kind']} @{c['branch']}: {c['detail']}")
    if summary["table"]:
        print()
        print(f"{'':34s} P1   P2   P3")
        for row, cells in summary["table"].items():
            print(f"{row:34s} " + "  ".join(f"{c:3s}" for c in cells))
        if names is None:
            print("table matches expected layout: " + ("yes" if summary["table_matches"] else "NO"))
    ok = summary["passed"]
    if args.random:
        recs = scenarios.random_sweep(args.random, args.seed, ctrl=ctrl, threads=threads)
        summary["random"] = [r.to_json() for r in recs]
        sweep_ok = _report_sweep(recs)
        ok = ok and sweep_ok
    if args.report:
        io.write_json(summary, args.report)
    print("verify: " + ("pass" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_FAILED


def _report_sweep(recs) -> bool:
    errors = [r for r in recs if r.error]
    good = [r for r in recs if not r.error]
    metric = [r for r in good if r.model == "metric"]
    drift = max((r.drift for r in metric), default=0.0)
    hull = max((r.hull_deviation for r in good), default=0.0)
    mono = [r for r in good if r.model in ("metric", "topological-k1") and r.solution == "caratheodory"]
    rise = max((r.lyapunov_increase for r in mono), default=0.0)
    print(f"\nrandom sweep: {len(recs)} runs, {len(errors)} errors")
    print(f"  metric average drift max {drift:.3g}")
    print(f"  support hull deviation max {hull:.3g}")
    print(f"  V / W (kappa=1) increase max {rise:.3g} (scaled)")
    for r in errors[:10]:
        print(f"  error in instance {r.index} {r.model} {r.solution}: {r.error}")
    return not errors and drift <= 1e-6 and hull <= 1e-7 and rise <= 1e-8


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "list":
            return cmd_list(args)
        return cmd_verify(args)
    except (UsageError, ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"bc-dyn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ArithmeticError) as exc:
        # engine gave up (unsupported sliding, event or branch budgets, non-finite state)
        print(f"bc-dyn: simulation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
