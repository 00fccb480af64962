import json
import math

import pytest

from reinforced_loops.checks import compare
from reinforced_loops.errors import GraphError, RegistryError
from reinforced_loops.verify import REGISTRY, check_ids, reports_json, run_check

EXPECTED = [
    "thmA", "thmB", "thmC", "thmD", "mixture-lemma", "shift-lemma", "nu-normalization", "localization",
    "partition-functions", "thm5.1", "thm5.3", "thm5.5", "thm6.1", "kirchhoff-reinforced", "pd-consistency",
    "thinning", "thm7.2-k2", "susy-bayes", "lorentz-invariance",
]


def test_registry_complete():
    assert check_ids() == EXPECTED
    assert all(REGISTRY[c].anchor for c in EXPECTED)


def test_compare_examples():
    z, ok = compare(1.0, 0.1, 1.0, 0.1)
    assert z == 0 and ok
    z, ok = compare(2.0, 0.1, 1.0, 0.1)
    assert math.isclose(z, 1 / math.sqrt(0.02), rel_tol=1e-12) and not ok
    assert compare(1.0, 0.0, 1.0 + 5e-7, 0.0, tol=1e-6)[1]
    assert not compare(1.0, 0.0, 1.0 + 5e-6, 0.0, tol=1e-6)[1]
    with pytest.raises(ValueError):
        compare(1.0, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        compare(1.0, -0.1, 1.0, 0.1)


def test_unknown_check():
    with pytest.raises(RegistryError):
        run_check("thm9.9")
    with pytest.raises(RegistryError):
        run_check("shift-lemma", graph="triangle")


@pytest.mark.parametrize("cid", ["shift-lemma", "susy-bayes", "thmA", "thm7.2-k2"])
def test_report_deterministic(cid):
    a = run_check(cid, seed=3, replicas=500)
    b = run_check(cid, seed=3, replicas=500)
    assert a.to_json(runtime=False) == b.to_json(runtime=False)
    d = json.loads(a.to_json())
    for key in ("check_id", "lhs_estimate", "lhs_uncertainty", "rhs_estimate", "rhs_uncertainty", "z_score",
                "pass", "runtime", "seed", "config", "lhs_method", "rhs_method", "anchor"):
        assert key in d
    assert d["check_id"] == cid and d["seed"] == 3
    assert a.line().startswith("PASS" if a.passed else "FAIL")


def test_seed_changes_mc_estimate():
    a = run_check("thmA", seed=1, replicas=500)
    b = run_check("thmA", seed=2, replicas=500)
    assert a.lhs_estimate != b.lhs_estimate


def test_graph_override():
    r = run_check("thmA", seed=0, replicas=2000, graph="K4+root")
    assert r.config["params"]["graph"] == "K4+root"
    with pytest.raises(GraphError):
        run_check("thmA", seed=0, replicas=10, graph="triangle+root")


def test_reports_json_shape():
    r = run_check("shift-lemma", seed=0)
    d = json.loads(reports_json([r], runtime=False))
    assert d["all_pass"] == r.passed
    assert [x["check_id"] for x in d["reports"]] == ["shift-lemma"]
