"""Registry of identity checks and their JSON reports."""
from __future__ import annotations

import copy
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from . import checks
from .checks import Comparison, compare
from .errors import RegistryError
from .rng import worker_count

__all__ = ["CheckSpec", "Report", "REGISTRY", "compare", "run_check", "run_all", "check_ids"]


@dataclass(frozen=True)
class CheckSpec:
    check_id: str
    anchor: str
    fn: Callable
    params: dict
    replicas: int
    lhs_method: str
    rhs_method: str


@dataclass
class Report:
    check_id: str
    lhs_estimate: float
    lhs_uncertainty: float
    rhs_estimate: float
    rhs_uncertainty: float
    z_score: float
    passed: bool
    runtime: float
    seed: int
    config: dict
    lhs_method: str
    rhs_method: str
    anchor: str
    details: list = field(default_factory=list)

    def to_dict(self, runtime: bool = True) -> dict:
        d = {
            "check_id": self.check_id, "lhs_estimate": self.lhs_estimate,
            "lhs_uncertainty": self.lhs_uncertainty, "rhs_estimate": self.rhs_estimate,
            "rhs_uncertainty": self.rhs_uncertainty, "z_score": self.z_score, "pass": self.passed,
            "seed": self.seed, "config": self.config, "lhs_method": self.lhs_method,
            "rhs_method": self.rhs_method, "anchor": self.anchor,
            "details": [c.to_dict() for c in self.details],
        }
        if runtime:
            d["runtime"] = self.runtime
        return d

    def to_json(self, runtime: bool = True) -> str:
        return json.dumps(self.to_dict(runtime), sort_keys=True, indent=2)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.check_id:<22} lhs={self.lhs_estimate:.6g}±{self.lhs_uncertainty:.2g} "
                f"rhs={self.rhs_estimate:.6g}±{self.rhs_uncertainty:.2g} z={self.z_score:+.2f} "
                f"({self.runtime:.1f}s)")


def _spec(cid, anchor, fn, params, replicas, lhs, rhs):
    return CheckSpec(cid, anchor, fn, params, replicas, lhs, rhs)


REGISTRY: dict[str, CheckSpec] = {s.check_id: s for s in [
    _spec("thmA", "Theorem A", checks.check_thmA,
          {"graph": "2-path+root", "a": "1", "b": ["1", "2"], "lam": {"1": 0.3, "2": 0.2}}, 20000,
          "killed chain occupation, last-exit indicator", "Gaussian closed form"),
    _spec("thmB", "Theorem B", checks.check_thmB,
          {"graph": "triangle", "a": "1", "gamma": 0.5, "lam": {"1": 0.3, "2": 0.2, "3": 0.4}}, 20000,
          "chain run to an inverse local time", "Gaussian closed form"),
    _spec("thmC", "Theorem C", checks.check_thmC,
          {"graph": "2-path+root", "a": "1", "s": 0.8, "lam": {"1": 0.3, "2": 0.2}}, 20000,
          "killed chain occupation", "Gaussian closed form"),
    _spec("thmD", "Theorem D", checks.check_thmD,
          {"graph": "2-path+root", "variant": "ordered", "n_random_u": 2, "lams": [0.1, 0.5]}, 20000,
          "Wilson loops of the twisted chain", "two Gaussian fields (sampled)"),
    _spec("mixture-lemma", "mixture lemma", checks.check_mixture,
          {"graph": "triangle", "a": "1", "steps": 3}, 20000,
          "VRJP jump words", "quenched word probabilities over mixing samples"),
    _spec("shift-lemma", "shift lemma", checks.check_shift,
          {"graphs": ["single-vertex+root", "2-path+root", "triangle", "triangle+root", "K4+root"],
           "draws": 100, "tol": 1e-10}, 0,
          "log density pinned at b", "shifted log density pinned at a"),
    _spec("nu-normalization", "mixing measure normalization", checks.check_nu_normalization,
          {"graphs": ["single-vertex+root", "2-path+root", "triangle", "triangle+root"],
           "tol_1d": 1e-8, "tol_multi": 1e-4, "mcmc_graph": "2-path+root", "mcmc_samples": 4000}, 0,
          "tensor quadrature, MCMC", "unit mass, quadrature mean"),
    _spec("localization", "localization", checks.check_localization,
          {"graph1": "single-vertex+root", "graph2": "2-path+root", "lam": 0.7, "tol": 1e-6}, 0,
          "Grassmann quadrature", "localized value"),
    _spec("partition-functions", "partition functions", checks.check_partition,
          {"quad_graph": "single-vertex+root", "mc_graphs": ["2-path+root", "triangle"], "tol_quad": 1e-6,
           "tol_mc": 5e-3, "n_mc": 400000}, 0,
          "quadrature and importance MC", "unit partition function"),
    _spec("thm5.1", "Theorem 5.1", checks.check_thm51,
          {"graph": "2-path+root", "a": "1", "b": ["1", "2"], "lam": {"1": 0.3, "2": 0.2}}, 20000,
          "VRJP killed at the root", "H22 quadrature with insertion"),
    _spec("thm5.3", "Theorem 5.3", checks.check_thm53,
          {"graphs": ["single-vertex+root", "2-path+root"], "a": "1", "s": [0.0, 0.5], "lam": 0.3,
           "quad_tol": 1e-6, "exact_tol": 1e-9}, 20000,
          "VRJP stopped at a local time level", "H22 quadrature, boosted observable"),
    _spec("thm5.5", "Theorem 5.5", checks.check_thm55,
          {"graph": "2-path+root", "a": "1", "s": [0.3, 0.7], "lam": {"1": 0.3, "2": 0.2}, "quad_tol": 1e-5},
          20000, "mixture of quenched chains with free-field starts", "H22 quadrature of x_a/x_d"),
    _spec("thm6.1", "Theorem 6.1", checks.check_thm61,
          {"cases": [{"graph": "single-vertex+root", "h": 0.5}, {"graph": "single-vertex+root", "h": 1.0},
                     {"graph": "2-path+root"}], "lams": [0.1, 0.5]}, 20000,
          "reinforced Wilson occupation", "H22 quadrature"),
    _spec("kirchhoff-reinforced", "reinforced Kirchhoff formula", checks.check_kirchhoff,
          {"graph": "triangle+root", "edges": [["1", "2"], ["2", "3"], ["1", "3"]]}, 20000,
          "reinforced Wilson trees", "mixing-measure quadrature of tree ratios"),
    _spec("pd-consistency", "Poisson-Dirichlet splitting", checks.check_pd,
          {"graph": "triangle+root", "occupation_runs": 200, "exact_tol": 1e-12}, 20000,
          "PD block decomposition", "occupation totals, cycle law"),
    _spec("thinning", "thinning", checks.check_thinning,
          {"keep": 0.3, "graph": "2-path+root", "alphas": [0.5, 2.0]}, 20000,
          "thinned and chained soups", "retention probability, linearity in alpha"),
    _spec("thm7.2-k2", "Theorem 7.2", checks.check_thm72,
          {"graph": "single-vertex+root", "k": 2, "lams": [0.3]}, 20000,
          "reinforced soup with alpha = 2", "four Gaussian fields in a random environment"),
    _spec("susy-bayes", "supersymmetric Bayes formula", checks.check_bayes,
          {"graph": "single-vertex+root", "a": ["d", "1"], "s": [0.0, 0.5], "lams": [0.0, 0.4], "tol": 1e-6}, 0,
          "H22 quadrature with mixing density", "free-field quadrature over the mixing measure"),
    _spec("lorentz-invariance", "Lorentz invariance", checks.check_lorentz,
          {"graphs": ["single-vertex+root", "2-path+root"], "s": 0.5, "lam": 0.3, "quad_tol": 1e-7,
           "tol": 1e-5}, 0,
          "H22 quadrature, boosted observable", "H22 quadrature, boosted pin"),
]}


def check_ids() -> list[str]:
    return list(REGISTRY)


def _worst(details: list[Comparison]) -> Comparison:
    failing = [c for c in details if not c.passed]
    pool = failing or details
    return max(pool, key=lambda c: abs(c.z) if math.isfinite(c.z) else math.inf)


def run_check(check_id: str, seed: int = 0, replicas: int | None = None, graph: str | None = None,
              **overrides) -> Report:
    """Run one registered check. ``graph`` replaces the check's default graph where it has one."""
    if check_id not in REGISTRY:
        raise RegistryError(f"unknown check id {check_id!r}; known: {', '.join(REGISTRY)}")
    spec = REGISTRY[check_id]
    params = copy.deepcopy(spec.params)
    if graph is not None:
        if "graph" not in params:
            raise RegistryError(f"check {check_id!r} does not take a graph override")
        params["graph"] = graph
    params.update(overrides)
    n = spec.replicas if replicas is None else int(replicas)
    t0 = time.perf_counter()
    details = spec.fn(params, int(seed), n)
    runtime = time.perf_counter() - t0
    w = _worst(details)
    return Report(
        check_id=check_id, lhs_estimate=w.lhs, lhs_uncertainty=w.lhs_err, rhs_estimate=w.rhs,
        rhs_uncertainty=w.rhs_err, z_score=w.z, passed=all(c.passed for c in details), runtime=runtime,
        seed=int(seed), config={"params": params, "replicas": n}, lhs_method=spec.lhs_method,
        rhs_method=spec.rhs_method, anchor=spec.anchor, details=details,
    )


def _run_one(args):
    cid, seed, replicas = args
    return run_check(cid, seed, replicas)


def run_all(seed: int = 0, replicas: int | None = None, ids=None, workers: int | None = None) -> list[Report]:
    """All registered checks in registry order; a process pool is used when workers > 1."""
    ids = list(ids or REGISTRY)
    for cid in ids:
        if cid not in REGISTRY:
            raise RegistryError(f"unknown check id {cid!r}")
    workers = worker_count() if workers is None else workers
    jobs = [(cid, seed, replicas) for cid in ids]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def reports_json(reports: list[Report], runtime: bool = True) -> str:
    """One JSON object holding every report and the overall verdict."""
    doc = {"all_pass": all(r.passed for r in reports), "reports": [r.to_dict(runtime) for r in reports]}
    return json.dumps(doc, sort_keys=True, indent=2)
