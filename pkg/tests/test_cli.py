import json

import numpy as np
import pytest

from bcdyn import io
from bcdyn.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list(capsys):
    code, out, _ = _run(capsys, "list")
    assert code == 0 and out.strip()
    assert "ex-clusters-at-distance-1" in out
    block = out[out.index("ex-krasovsky-eq-not-cluster"):]
    assert "x0 = (-1, 1, 0, 1, -1)" in block
    assert "[reference]" in out and "[derived]" in out


def test_run_topological_sliding(capsys, tmp_path):
    csv = tmp_path / "t.csv"
    code, out, _ = _run(capsys, "run", "--scenario", "ex-topological-inclusions", "--branch", "sliding", "--out", str(csv))
    assert code == 0
    t, states, events = io.read_trajectory_csv(csv)
    np.testing.assert_allclose(states[-1].ravel(), 0.0, atol=1e-6)
    assert any(events)


def test_run_two_agents_from_file(capsys, tmp_path):
    init = tmp_path / "two.json"
    init.write_text(json.dumps({"n": 1, "positions": [[0.0], [0.6]]}))
    rep = tmp_path / "r.json"
    code, _, _ = _run(capsys, "run", "--model", "metric", "--init", str(init), "--tmax", "10", "--report", str(rep))
    assert code == 0
    report = json.loads(rep.read_text())
    np.testing.assert_allclose(np.array(report["terminal_state"]).ravel(), [0.3, 0.3], atol=1e-8)
    assert report["terminal_clusters"]["blocks"] == [[1, 2]]
    assert all(p["pass"] for p in report["properties"])
    assert report["lyapunov"]["name"] == "V"


def test_report_flags_w_increase(capsys, tmp_path):
    rep = tmp_path / "r.json"
    code, out, _ = _run(capsys, "run", "--scenario", "ex-w-increasing-k2", "--report", str(rep))
    assert code == 0
    props = {p["property"]: p for p in json.loads(rep.read_text())["properties"]}
    assert not props["W-monotone"]["pass"]
    assert "failing" in out
    code, _, _ = _run(capsys, "run", "--scenario", "ex-w-increasing-k2", "--strict")
    assert code == 2


def test_strict_passes_on_clean_run(capsys):
    code, _, _ = _run(capsys, "run", "--scenario", "ex-clusters-at-distance-1", "--strict")
    assert code == 0


def test_config_round_trip_is_bitwise(capsys, tmp_path):
    cfg, a, b = tmp_path / "c.json", tmp_path / "a.csv", tmp_path / "b.csv"
    code, _, _ = _run(capsys, "run", "--model", "topological", "--kappa", "1", "--init", "random:6,2", "--seed", "5",
                      "--tmax", "3", "--save-config", str(cfg), "--out", str(a))
    assert code == 0
    code, _, _ = _run(capsys, "run", "--config", str(cfg), "--out", str(b))
    assert code == 0
    assert a.read_bytes() == b.read_bytes()
    assert io.load_config(cfg).to_json() == json.loads(cfg.read_text())


def test_enumerated_branch_tree(capsys, tmp_path):
    tree = tmp_path / "tree.json"
    code, out, _ = _run(capsys, "run", "--scenario", "ex-metric-inclusions", "--solution", "krasovsky",
                        "--policy", "enumerate:16,3,1.0", "--branches-out", str(tree))
    assert code == 0
    nodes = json.loads(tree.read_text())["nodes"]
    leaves = [n for n in nodes if n["terminal_state"] is not None]
    assert len(leaves) == 5
    assert "5 branches" in out


def test_csv_header_and_event_rows(capsys, tmp_path):
    csv = tmp_path / "t.csv"
    _run(capsys, "run", "--scenario", "ex-nonexist-classical-metric", "--out", str(csv))
    header = csv.read_text().splitlines()[0]
    assert header == "t,x_1_1,x_2_1,x_3_1,event"
    _, _, events = io.read_trajectory_csv(csv)
    assert "pair(1,3)" in [e for e in events if e]


@pytest.mark.parametrize(
    "argv",
    [
        ["run"],
        ["run", "--scenario", "nope"],
        ["run", "--model", "metric", "--init", "/does/not/exist.json"],
        ["run", "--scenario", "ex-two-agents", "--tmax", "-1"],
        ["run", "--scenario", "ex-two-agents", "--branch", "nope"],
        ["run", "--scenario", "ex-metric-inclusions", "--solution", "krasovsky", "--policy", "fly"],
        ["bogus"],
        ["verify", "nope"],
    ],
)
def test_usage_errors_exit_one(capsys, argv):
    code = main(argv) if argv != ["bogus"] else None
    if code is None:
        with pytest.raises(SystemExit) as exc:
            main(argv)
        code = exc.value.code
    assert code == 1
    capsys.readouterr()


def test_bad_config_file(capsys, tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text(json.dumps({"model": {"model": "metric"}, "kernel": "const:1", "positions": [[0], [1]], "extra": 1}))
    code, _, err = _run(capsys, "run", "--config", str(bad))
    assert code == 1 and "unknown config keys" in err
    bad.write_text("{not json")
    assert _run(capsys, "run", "--config", str(bad))[0] == 1


def test_engine_failure_exits_one(capsys, tmp_path):
    # joint sliding on two separate planes is outside the engine
    init = tmp_path / "six.json"
    init.write_text(json.dumps({"positions": [[-1 / 3], [0], [1], [29 / 3], [10], [11]]}))
    code, _, err = _run(capsys, "run", "--model", "metric", "--init", str(init), "--solution", "krasovsky",
                        "--policy", "slide", "--tmax", "2")
    assert code == 1 and "simulation failed" in err


def test_verify_subset_and_empty_filter(capsys, tmp_path):
    rep = tmp_path / "v.json"
    code, out, _ = _run(capsys, "verify", "ex-two-agents", "--report", str(rep))
    assert code == 0 and "PASS  ex-two-agents" in out
    assert json.loads(rep.read_text())["passed"]
    code, out, _ = _run(capsys, "verify", "--filter", "zzz")
    assert code == 0 and "verify: pass" in out


def test_verify_full(capsys, monkeypatch):
    monkeypatch.setenv("BC_DYN_THREADS", "2")
    code, out, _ = _run(capsys, "verify")
    assert code == 0
    assert "table matches expected layout: yes" in out
