import numpy as np
import pytest

from bcdyn import scenarios
from bcdyn.scenarios import EXPECTED_TABLE, PRESETS, TABLE_ROWS, get_preset, run_branch, verify_all

REQUIRED = {
    "ex-two-agents",
    "ex-nonexist-classical-metric",
    "ex-nonexist-classical-topological",
    "ex-clusters-at-distance-1",
    "ex-metric-inclusions",
    "ex-topological-inclusions",
    "ex-k2-not-cluster",
    "ex-krasovsky-eq-not-cluster",
    "ex-merging-components",
    "ex-w-increasing-k2",
    "ex-w-increasing-krasovsky",
    "ex-pseudoforest-line",
    "ex-pseudoforest-plane",
}


def test_preset_names_unique_and_complete():
    names = [p.name for p in PRESETS]
    assert len(names) == len(set(names))
    assert REQUIRED <= set(names)


def test_every_expectation_has_a_source():
    for p in PRESETS:
        assert p.expectations
        branch_names = {b.name for b in p.branches}
        for e in p.expectations:
            assert e.source in ("reference", "derived", "trivial")
            assert e.branch is None or e.branch in branch_names


def test_unknown_names():
    with pytest.raises(KeyError):
        get_preset("nope")
    with pytest.raises(KeyError, match="sliding"):
        get_preset("ex-topological-inclusions").branch("nope")


def test_krasovsky_equilibrium_preset_data():
    p = get_preset("ex-krasovsky-eq-not-cluster")
    np.testing.assert_array_equal(p.positions().ravel(), [-1, 1, 0, 1, -1])


def test_run_branch_topological_sliding():
    p = get_preset("ex-topological-inclusions")
    tr, bs = run_branch(p, p.branch("sliding"))
    np.testing.assert_allclose(tr.terminal.ravel(), 0.0, atol=1e-6)
    assert bs is not None


@pytest.mark.parametrize("name", sorted(REQUIRED))
def test_preset_expectations(name):
    out = scenarios.evaluate_preset(get_preset(name))
    assert out.error is None
    bad = [c for c in out.checks if not c.passed]
    assert not bad, [c.to_json() for c in bad]


def test_verify_all_table():
    summary = verify_all(threads=2)
    assert summary["passed"] and summary["table_matches"]
    for row in TABLE_ROWS:
        assert tuple(summary["table"][row]) == EXPECTED_TABLE[row]
    assert summary["table"]["Metric Caratheodory"] == ["Yes", "Yes", "Yes"]
    assert summary["table"]["Topological Krasovsky kappa=1"][2] == "No"


def test_verify_all_empty_filter():
    summary = verify_all([])
    assert summary["passed"] and summary["presets"] == [] and summary["table"] == {}


def test_random_instances_are_seeded():
    a = list(scenarios.random_instances(5, 7, True))
    b = list(scenarios.random_instances(5, 7, True))
    for (xa, ma), (xb, mb) in zip(a, b):
        assert np.array_equal(xa, xb) and ma == mb
        assert 2 <= xa.shape[0] <= 10 and 1 <= xa.shape[1] <= 3
        assert 1 <= mb.kappa < xa.shape[0]
        assert np.all((xa >= 0) & (xa <= 2))


def test_random_sweep_small():
    recs = scenarios.random_sweep(3, 11, horizon=2.0, threads=2)
    assert len(recs) == 12
    assert all(r.error is None for r in recs)
    assert max(r.drift for r in recs if r.model == "metric") <= 1e-6
    assert max(r.hull_deviation for r in recs) <= 1e-7
