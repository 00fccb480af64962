"""Acceptance criteria 1-13, each printing one PASS/FAIL line."""
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from reinforced_loops.checks import check_wilson_variants, comparison
from reinforced_loops.grassmann import berezin, fermion_quadratic, gexp
from reinforced_loops.verify import run_check

SEED = 7
N = 100_000


@pytest.fixture
def report(capsys):
    def emit(criterion, comps, t0, budget):
        dt = time.perf_counter() - t0
        bad = [c for c in comps if not c.passed]
        worst = max(comps, key=lambda c: abs(c.z))
        status = "PASS" if not bad and dt <= budget else "FAIL"
        with capsys.disabled():
            print(f"\n[acceptance] C{criterion:<2} {status}  {len(comps) - len(bad)}/{len(comps)} comparisons, "
                  f"worst {worst.label} z={worst.z:+.2f}, {dt:.1f}s (limit {budget:.0f}s)")
        assert not bad, [c.to_dict() for c in bad]
        assert dt <= budget
    return emit


def _comps(*reports):
    return [c for r in reports for c in r.details]


def test_c01_partition_functions(report):
    t0 = time.perf_counter()
    report(1, _comps(run_check("partition-functions", SEED)), t0, 120)


def test_c02_mixing_normalization(report):
    t0 = time.perf_counter()
    report(2, _comps(run_check("nu-normalization", SEED)), t0, 60)


def test_c03_wilson_equivalence(report):
    t0 = time.perf_counter()
    p = {"graph": "triangle+root", "variants": ["ordered", "popping", "single"]}
    report(3, check_wilson_variants(p, SEED, N), t0, 180)


def test_c04_le_jan_quenched(report):
    t0 = time.perf_counter()
    report(4, _comps(run_check("thmD", SEED, N)), t0, 180)


def test_c05_mixture_lemma(report):
    t0 = time.perf_counter()
    report(5, _comps(run_check("mixture-lemma", SEED, N)), t0, 300)


def test_c06_thm61(report):
    t0 = time.perf_counter()
    report(6, _comps(run_check("thm6.1", SEED, N)), t0, 600)


def test_c07_thm51(report):
    t0 = time.perf_counter()
    report(7, _comps(run_check("thm5.1", SEED, N)), t0, 600)


def test_c08_thm53(report):
    t0 = time.perf_counter()
    report(8, _comps(run_check("thm5.3", SEED, N)), t0, 600)


def test_c09_thm55(report):
    t0 = time.perf_counter()
    report(9, _comps(run_check("thm5.5", SEED, N)), t0, 600)


def test_c10_kirchhoff(report):
    t0 = time.perf_counter()
    report(10, _comps(run_check("kirchhoff-reinforced", SEED, N)), t0, 300)


def test_c11_section7(report):
    t0 = time.perf_counter()
    reps = [run_check("pd-consistency", SEED, N), run_check("thinning", SEED, N), run_check("thm7.2-k2", SEED, N)]
    report(11, _comps(*reps), t0, 900)


def test_c12_exact_identities(report):
    t0 = time.perf_counter()
    comps = _comps(*(run_check(c, SEED) for c in ("shift-lemma", "localization", "lorentz-invariance",
                                                  "susy-bayes")))
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(1, 5))
        A = rng.normal(size=(k, k))
        d = np.linalg.det(A)
        worst = max(worst, abs(berezin(gexp(-fermion_quadratic(A))) - d) / max(1.0, abs(d)))
    comps.append(comparison("Berezin vs det, 200 matrices", worst, 0.0, 0.0, 0.0, tol=1e-10))
    report(12, comps, t0, 600)


def test_c13_determinism(report, tmp_path):
    t0 = time.perf_counter()
    outs = []
    for k in range(2):
        path = tmp_path / f"all{k}.json"
        r = subprocess.run([sys.executable, "-m", "reinforced_loops", "verify", "all", "--seed", "7", "--out",
                            str(path)], capture_output=True, text=True,
                           env={**os.environ, "PYTHONHASHSEED": str(k)})
        assert r.returncode in (0, 1), r.stderr
        d = json.loads(path.read_text())
        for rep in d["reports"]:
            rep.pop("runtime")
        outs.append(json.dumps(d, sort_keys=True))
    same = outs[0] == outs[1]
    report(13, [comparison("identical reports modulo runtime", float(not same), 0.0, 0.0, 0.0, tol=0.5)], t0, 600)
