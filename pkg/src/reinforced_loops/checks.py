"""Two-sided computations behind each registered check.

Every function returns a list of Comparison records; the trajectory side is
always simulated and the field side always comes from a different route
(closed Gaussian forms, Gaussian field sampling, the Grassmann engine, or
quadrature over the mixing measure).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .environment import MixingMeasure, au_matrix, grid_sample, mcmc_sample, quadrature_expectation
from .errors import ConsistencyError, GraphError
from .graph import AugmentedGraph, Graph, as_full_graph, enumerate_spanning_trees, load_graph, with_root_weight
from .loops import Loop, feller_blocks, pd_decompose, regroup_loops, thin
from .markov import GeneratorSpec, killed_green, run_wilson, sample_gff
from .rewilson import occupation_S_fast, reinforced_pass, soup_statistics
from .rng import Stream, derive_seed, make_generator
from .susy import (
    BoostedZ, ExpLinearXY, ExpLinearZ, FreeField, Insertion, One, Product, RatioXaXd, h22_expectation,
    h22_pin, free_field_pin, susy_bayes_check, susy_free_expectation,
)
from .grassmann import GrassmannElement, berezin, fermion_quadratic, gexp, gsqrt
from .vrjp import VrjpState, run_vrjp_idx, theta_vector

CHUNK = 5000


@dataclass
class Comparison:
    label: str
    lhs: float
    lhs_err: float
    rhs: float
    rhs_err: float
    z: float
    passed: bool
    rule: str
    tol: float | None = None

    def to_dict(self) -> dict:
        return {
            "label": self.label, "lhs": self.lhs, "lhs_err": self.lhs_err, "rhs": self.rhs,
            "rhs_err": self.rhs_err, "z": self.z, "pass": self.passed, "rule": self.rule, "tol": self.tol,
        }


def compare(lhs: float, lhs_sigma: float, rhs: float, rhs_sigma: float, tol: float | None = None):
    """(z, pass). With ``tol`` the rule is |lhs - rhs| <= tol; otherwise |z| <= 3."""
    if lhs_sigma < 0 or rhs_sigma < 0:
        raise ValueError("uncertainties must be nonnegative")
    diff = lhs - rhs
    if tol is not None:
        return diff / tol, bool(abs(diff) <= tol)
    sig = math.sqrt(lhs_sigma ** 2 + rhs_sigma ** 2)
    if sig == 0:
        raise ValueError("both uncertainties vanish and no tolerance was supplied")
    z = diff / sig
    return z, bool(abs(z) <= 3.0)


def comparison(label: str, lhs: float, lhs_err: float, rhs: float, rhs_err: float,
               tol: float | None = None) -> Comparison:
    z, ok = compare(float(lhs), float(lhs_err), float(rhs), float(rhs_err), tol)
    return Comparison(label, float(lhs), float(lhs_err), float(rhs), float(rhs_err), float(z), ok,
                      "tolerance" if tol is not None else "zscore", tol)


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def replicate(fn: Callable[[Stream, int], np.ndarray], n: int, seed: int, label: str, chunk: int = CHUNK):
    """Runs fn(stream, m) over fixed chunks with derived seeds; results concatenated in chunk order."""
    out = []
    for c, s in enumerate(range(0, n, chunk)):
        out.append(np.asarray(fn(Stream(derive_seed(seed, c, label)), min(chunk, n - s))))
    return np.concatenate(out) if out else np.zeros(0)


def graph_of(name):
    return load_graph(name)


def lam_vector(full: Graph, lam, skip: int | None = None) -> np.ndarray:
    if isinstance(lam, dict):
        v = np.zeros(full.n)
        for k, x in lam.items():
            v[full.index(k)] = x
    else:
        v = np.full(full.n, float(lam))
    if skip is not None:
        v[skip] = 0.0
    return v


# ---------------------------------------------------------------- Markov chains

def killed_chain(step, start: int, root: int, n_full: int, rs: Stream, cap: int = 10**6):
    S = [0.0] * n_full
    i = start
    for _ in range(cap):
        h, j = step(i, rs)
        S[i] += h
        if j == root:
            return S, i
        i = j
    raise ConsistencyError("killed chain exceeded its jump cap")


def gaussian_mgf(G: np.ndarray, lam: np.ndarray, m: np.ndarray | None = None) -> float:
    """E exp(-1/2 sum lam (phi + m)^2) for phi ~ N(0, G)."""
    k = len(lam)
    L = np.diag(lam)
    val = 1.0 / math.sqrt(np.linalg.det(np.eye(k) + G @ L))
    if m is not None:
        Q = L - L @ np.linalg.solve(np.linalg.inv(G) + L, L)
        val *= math.exp(-0.5 * m @ Q @ m)
    return val


def check_thmA(p, seed, n):
    ag = graph_of(p["graph"])
    full = ag.full()
    gen = GeneratorSpec.plain(ag)
    root = ag.root_index
    a = full.index(p["a"])
    V = [i for i in range(full.n) if i != root]
    lam = lam_vector(full, p["lam"], root)[V]
    G = killed_green(gen)

    def sim(rs, m):
        out = np.empty((m, 2))
        for r in range(m):
            S, last = killed_chain(gen.step, a, root, full.n, rs)
            out[r] = (np.exp(-lam @ np.asarray(S)[V]), last)
        return out

    res = replicate(sim, n, seed, "thmA")
    gauss = gaussian_mgf(G, lam)
    comps = []
    for b in p["b"]:
        bi = full.index(b)
        wb = full.W[bi, root]
        if wb <= 0:
            raise GraphError(f"vertex {b!r} has no edge to the root")
        lhs, se = mean_se(res[:, 0] * (res[:, 1] == bi) / wb)
        rhs = gauss * np.linalg.inv(np.linalg.inv(G) + np.diag(lam))[V.index(a), V.index(bi)]
        comps.append(comparison(f"b={b}", lhs * gauss, se * gauss, rhs, 0.0))
    return comps


def check_thmB(p, seed, n):
    g = graph_of(p["graph"])
    full, _ = as_full_graph(g)
    gen = GeneratorSpec.plain(full)
    a = full.index(p["a"])
    gamma = float(p["gamma"])
    lam = lam_vector(full, p["lam"])
    F = [i for i in range(full.n) if i != a]
    Lap = np.diag(full.W.sum(axis=1)) - full.W
    G = np.linalg.inv(Lap[np.ix_(F, F)])

    def sim(rs, m):
        out = np.empty(m)
        for r in range(m):
            S = [0.0] * full.n
            i = a
            while True:
                h, j = gen.step(i, rs)
                if i == a and S[a] + h > gamma:
                    S[a] = gamma
                    break
                S[i] += h
                i = j
            out[r] = math.exp(-lam @ np.asarray(S))
        return out

    lhs, se = mean_se(replicate(sim, n, seed, "thmB"))
    gauss = gaussian_mgf(G, lam[F])
    rhs = math.exp(-lam[a] * gamma) * gaussian_mgf(G, lam[F], np.full(len(F), math.sqrt(2 * gamma)))
    return [comparison(f"gamma={gamma}", lhs * gauss, se * gauss, rhs, 0.0)]


def check_thmC(p, seed, n):
    ag = graph_of(p["graph"])
    full = ag.full()
    gen = GeneratorSpec.plain(ag)
    root = ag.root_index
    a = full.index(p["a"])
    s = float(p["s"])
    V = [i for i in range(full.n) if i != root]
    lam = lam_vector(full, p["lam"], root)[V]
    G = killed_green(gen)

    def sim(rs, m):
        out = np.empty(m)
        for r in range(m):
            S, _ = killed_chain(gen.step, a, root, full.n, rs)
            out[r] = math.exp(-lam @ np.asarray(S)[V])
        return out

    lhs, se = mean_se(replicate(sim, n, seed, "thmC"))
    Z = gaussian_mgf(G, lam, np.full(len(V), s))
    mu = -np.linalg.solve(np.linalg.inv(G) + np.diag(lam), lam * s)
    rhs = Z * (1.0 + mu[V.index(a)] / s)
    return [comparison(f"s={s}", lhs * Z, se * Z, rhs, 0.0)]


def random_environments(full: Graph, root: int, k: int, seed: int, scale: float = 0.5) -> list[np.ndarray]:
    rng = make_generator(derive_seed(seed, 0, "random-u"))
    out = []
    for _ in range(k):
        u = rng.normal(0.0, scale, full.n)
        u[root] = 0.0
        out.append(u)
    return out


def check_thmD(p, seed, n):
    ag = graph_of(p["graph"])
    full = ag.full()
    root = ag.root_index
    V = [i for i in range(full.n) if i != root]
    envs = [np.zeros(full.n)] + random_environments(full, root, p["n_random_u"], seed)
    comps = []
    for e, u in enumerate(envs):
        gen = GeneratorSpec.twisted(ag, u)

        def sim(rs, m):
            out = np.empty((m, len(V)))
            for r in range(m):
                res = run_wilson(gen, p["variant"], rs)
                occ = np.zeros(full.n)
                for l in res.loops:
                    for v, h in l.steps:
                        occ[v] += h
                out[r] = occ[V]
            return out

        occ = replicate(sim, n, seed + e, f"thmD-soup-{e}")
        A = au_matrix(full.W, u)[np.ix_(V, V)]
        green = 2 * np.linalg.inv(A)
        tag = "u=0" if e == 0 else f"u#{e}"
        for k, i in enumerate(V):
            m, se = mean_se(occ[:, k])
            comps.append(comparison(f"{tag} mean occupation {full.vertices[i]}", m, se, green[k, k], 0.0))
        # two independent fields with covariance 2 (A^u)^{-1}, i.e. precision A^u / 2
        half = 0.5 * au_matrix(full.W, u)
        rng = make_generator(derive_seed(seed, e, "thmD-gff"))
        phi = sample_gff(half, {root: 0.0}, n, rng)[:, V]
        psi = sample_gff(half, {root: 0.0}, n, rng)[:, V]
        field = 0.5 * (phi ** 2 + psi ** 2)
        for lam in p["lams"]:
            l1, s1 = mean_se(np.exp(-lam * occ.sum(axis=1)))
            l2, s2 = mean_se(np.exp(-lam * field.sum(axis=1)))
            comps.append(comparison(f"{tag} laplace lam={lam}", l1, s1, l2, s2))
    return comps


def word_probability(W: np.ndarray, U: np.ndarray, start: int, words: list[tuple]) -> np.ndarray:
    """Quenched probability of each jump word, batched over environments U (m, n)."""
    E = np.exp(U)
    out = np.ones((len(U), len(words)))
    for k, word in enumerate(words):
        i = start
        for j in word:
            num = W[i, j] * E[:, j]
            den = (W[i][None, :] * E).sum(axis=1)
            out[:, k] *= num / den
            i = j
    return out


def all_words(W: np.ndarray, start: int, length: int) -> list[tuple]:
    words = [((), start)]
    for _ in range(length):
        words = [(w + (j,), j) for w, i in words for j in np.flatnonzero(W[i] > 0).tolist()]
    return [w for w, _ in words]


def check_wilson_variants(p, seed, n):
    """Pairwise agreement of the three Wilson variants: tree cells and occupation moments."""
    ag = graph_of(p["graph"])
    full = ag.full()
    gen = GeneratorSpec.plain(ag)
    trees = sorted(t.key() for t in enumerate_spanning_trees(full))
    cell = {t: k for k, t in enumerate(trees)}
    names = full.vertices
    V = [i for i in range(full.n) if i != ag.root_index]
    stats = {}
    for variant in p["variants"]:

        def sim(rs, m):
            out = np.empty((m, 1 + len(V)))
            for r in range(m):
                res = run_wilson(gen, variant, rs)
                occ = np.zeros(full.n)
                for l in res.loops:
                    for v, h in l.steps:
                        occ[v] += h
                out[r, 0] = cell[res.tree(names).key()]
                out[r, 1:] = occ[V]
            return out

        stats[variant] = replicate(sim, n, seed, f"wilson-{variant}")
    comps = []
    vs = list(p["variants"])
    for x in range(len(vs)):
        for y in range(x + 1, len(vs)):
            a, b = stats[vs[x]], stats[vs[y]]
            tag = f"{vs[x]}/{vs[y]}"
            for k, t in enumerate(trees):
                fa, fb = float(np.mean(a[:, 0] == k)), float(np.mean(b[:, 0] == k))
                comps.append(comparison(f"{tag} tree {t}", fa, math.sqrt(fa * (1 - fa) / len(a)),
                                        fb, math.sqrt(fb * (1 - fb) / len(b))))
            for j, i in enumerate(V):
                for mom in (1, 2):
                    ma, sa = mean_se(a[:, 1 + j] ** mom)
                    mb, sb = mean_se(b[:, 1 + j] ** mom)
                    comps.append(comparison(f"{tag} E[occ_{names[i]}^{mom}]", ma, sa, mb, sb))
    return comps


def check_mixture(p, seed, n):
    g = graph_of(p["graph"])
    full, _ = as_full_graph(g)
    a = full.index(p["a"])
    th = theta_vector(full, p.get("theta"))
    words = all_words(full.W, a, p["steps"])
    index = {w: k for k, w in enumerate(words)}

    def sim(rs, m):
        out = np.empty(m, dtype=int)
        for r in range(m):
            state = VrjpState(full.W, th)
            rec = []
            i = a
            for _ in range(p["steps"]):
                _, i = state.step(i, rs)
                rec.append(i)
            out[r] = index[tuple(rec)]
        return out

    cells = replicate(sim, n, seed, "mixture-vrjp")
    nu = MixingMeasure(g, full.vertices[a], p.get("theta"))
    U = grid_sample(nu, n, make_generator(derive_seed(seed, 0, "mixture-env")))
    probs = word_probability(full.W, U, a, words)
    comps = []
    for k, w in enumerate(words):
        f = float(np.mean(cells == k))
        m, se = mean_se(probs[:, k])
        name = "".join(full.vertices[j] for j in w)
        comps.append(comparison(f"word {name}", f, math.sqrt(f * (1 - f) / n), m, se))
    return comps


def check_shift(p, seed, n):
    comps = []
    for name in p["graphs"]:
        g = graph_of(name)
        full, _ = as_full_graph(g)
        rng = make_generator(derive_seed(seed, 0, f"shift-{name}"))
        worst = 0.0
        for _ in range(p["draws"]):
            a, b = rng.choice(full.n, size=2, replace=False)
            u = rng.normal(0.0, 1.0, full.n)
            u[a] = 0.0
            nu_a = MixingMeasure(g, full.vertices[a], p.get("theta"))
            nu_b = MixingMeasure(g, full.vertices[b], p.get("theta"))
            lhs = float(nu_b.log_density_full(u - u[b]))
            rhs = float(nu_a.log_density_full(u)) + (u[b] - u[a])
            worst = max(worst, abs(lhs - rhs))
        comps.append(comparison(f"{name} max |log-density gap|", worst, 0.0, 0.0, 0.0, tol=p["tol"]))
    return comps


def check_nu_normalization(p, seed, n):
    comps = []
    for name in p["graphs"]:
        g = graph_of(name)
        full, root = as_full_graph(g)
        i0 = full.vertices[root] if root is not None else full.vertices[0]
        nu = MixingMeasure(g, i0, p.get("theta"))
        tol = p["tol_1d"] if nu.dim == 1 else p["tol_multi"]
        val, err = quadrature_expectation(nu, tol=0.1 * tol)
        comps.append(comparison(f"{name} total mass (dim {nu.dim})", float(val), err, 1.0, 0.0, tol=tol))
    # sampler against quadrature on the first graph with two or more free coordinates
    name = p["mcmc_graph"]
    g = graph_of(name)
    full, root = as_full_graph(g)
    nu = MixingMeasure(g, full.vertices[root], p.get("theta"))
    res = mcmc_sample(nu, None, None, p["mcmc_samples"], derive_seed(seed, 0, "nu-mcmc"))
    for i in nu.free:
        m = float(res.samples[:, i].mean())
        se = float(res.samples[:, i].std(ddof=1) / math.sqrt(res.ess))
        q, qe = quadrature_expectation(nu, f=lambda U, i=i: U[:, i], tol=1e-7)
        comps.append(comparison(f"{name} MCMC mean u_{full.vertices[i]}", m, se, float(q), qe))
    return comps


def check_localization(p, seed, n):
    comps = []
    lam = p["lam"]
    single = graph_of(p["graph1"])
    pair = graph_of(p["graph2"])
    for g, obs, expect, label in [
        (single, ExpLinearZ({"1": lam}, squared=True), math.exp(-lam), "free field exp(-lam z^2)"),
        (single, ExpLinearZ({"1": lam}), math.exp(-lam), "free field exp(-lam z)"),
        (pair, Product(ExpLinearZ({"1": lam}, squared=True), ExpLinearZ({"2": 0.5 * lam}, squared=True)),
         math.exp(-1.5 * lam), "free field exp(-lam z_1^2 - lam/2 z_2^2)"),
    ]:
        full = g.full()
        Lap = np.diag(full.W.sum(axis=1)) - full.W
        v, e = susy_free_expectation(Lap, obs, {g.root_index: free_field_pin(0.0)}, full.vertices,
                                     tol=0.1 * p["tol"])
        comps.append(comparison(label, v, e, expect, 0.0, tol=p["tol"]))
    v, e = h22_expectation(single, ExpLinearZ({"1": lam}), tol=0.1 * p["tol"])
    comps.append(comparison("H22 exp(-lam z)", v, e, math.exp(-lam), 0.0, tol=p["tol"]))
    return comps


def _pinned_first(g):
    full, root = as_full_graph(g)
    pin = root if root is not None else 0
    return full, pin


def check_partition(p, seed, n):
    comps = []
    g = graph_of(p["quad_graph"])
    full, pin = _pinned_first(g)
    Lap = np.diag(full.W.sum(axis=1)) - full.W
    v, e = susy_free_expectation(Lap, One(), {pin: free_field_pin(0.0)}, full.vertices)
    comps.append(comparison(f"{p['quad_graph']} free field quadrature", v, e, 1.0, 0.0, tol=p["tol_quad"]))
    v, e = h22_expectation(full, One(), {pin: h22_pin(0.0)})
    comps.append(comparison(f"{p['quad_graph']} H22 quadrature", v, e, 1.0, 0.0, tol=p["tol_quad"]))
    for k, name in enumerate(p["mc_graphs"]):
        g = graph_of(name)
        full, pin = _pinned_first(g)
        Lap = np.diag(full.W.sum(axis=1)) - full.W
        v, e = susy_free_expectation(Lap, One(), {pin: free_field_pin(0.0)}, full.vertices, integrator="mc",
                                     n_mc=p["n_mc"], seed=derive_seed(seed, k, "pf-free"))
        comps.append(comparison(f"{name} free field MC", v, e, 1.0, 0.0, tol=p["tol_mc"]))
        v, e = h22_expectation(full, One(), {pin: h22_pin(0.0)}, integrator="mc", n_mc=p["n_mc"],
                               seed=derive_seed(seed, k, "pf-h22"))
        comps.append(comparison(f"{name} H22 MC", v, e, 1.0, 0.0, tol=p["tol_mc"]))
    return comps


# ---------------------------------------------------------------- reinforced theorems

def vrjp_killed(W, th, start, root, rs):
    state = VrjpState(W, th)
    _, last, _ = run_vrjp_idx(state, start, "kill", rs, root=root)
    return np.asarray(state.L), last


def check_thm51(p, seed, n):
    ag = graph_of(p["graph"])
    full = ag.full()
    root = ag.root_index
    weights = full.W[root, [i for i in range(full.n) if i != root]]
    if not np.allclose(weights, weights[0]) or np.any(weights <= 0):
        raise ConsistencyError("the uniform-pinning form needs equal positive root weights")
    h = float(weights[0])
    a = full.index(p["a"])
    lam = lam_vector(full, p["lam"], root)
    th = np.ones(full.n)

    def sim(rs, m):
        out = np.empty((m, 2))
        for r in range(m):
            L, last = vrjp_killed(full.W, th, a, root, rs)
            out[r] = (math.exp(-lam @ L), last)
        return out

    res = replicate(sim, n, seed, "thm5.1")
    comps = []
    for b in p["b"]:
        bi = full.index(b)
        lhs, se = mean_se(res[:, 0] * (res[:, 1] == bi))
        obs = Product(Insertion(a, bi), ExpLinearZ(lam))
        v, e = h22_expectation(ag, obs, tol=1e-7)
        comps.append(comparison(f"a={p['a']} b={b}", lhs, se, h * v, h * e))
    return comps


def check_thm53(p, seed, n):
    comps = []
    for case, name in enumerate(p["graphs"]):
        g = graph_of(name)
        # the root becomes an ordinary vertex: no killing
        full, _ = as_full_graph(g)
        a = full.index(p["a"])
        lam = lam_vector(full, p["lam"])
        th = np.ones(full.n)
        for s in p["s"]:
            level = math.cosh(s)

            def sim(rs, m, level=level):
                out = np.empty(m)
                for r in range(m):
                    state = VrjpState(full.W, th)
                    run_vrjp_idx(state, a, "threshold", rs, a=a, level=level)
                    out[r] = math.exp(-lam @ np.asarray(state.L))
                return out

            vals = replicate(sim, n, seed + case, f"thm5.3-{name}-{s}")
            lhs, se = mean_se(vals)
            v, e = h22_expectation(full, BoostedZ(lam, s), {a: h22_pin(0.0)}, tol=p["quad_tol"])
            tol = p["exact_tol"] if s == 0 else None
            comps.append(comparison(f"{name} s={s}", lhs, se, v, e, tol=tol))
    return comps



class _ExpLinearL:
    """exp(-sum lam_i sqrt(S_i + z_i^2)) for a batch of occupation fields S (m, N)."""

    def __init__(self, lam, S):
        self.lam, self.S = lam, S

    def __call__(self, ctx):
        e = GrassmannElement.scalar(ctx.k, 0.0)
        for i in range(ctx.N):
            if self.lam[i]:
                e = e + gsqrt(ctx.z2(i) + self.S[:, i]) * self.lam[i]
        return gexp(-e)

    def quadratic(self, n, index):
        return np.zeros(n)


def check_thm55(p, seed, n):
    ag = graph_of(p["graph"])
    full = ag.full()
    root = ag.root_index
    a = full.index(p["a"])
    lam = lam_vector(full, p["lam"], root)
    comps = []
    for k, s in enumerate(p["s"]):
        nu = MixingMeasure(ag, full.vertices[a], 1.0)
        rng = make_generator(derive_seed(seed, k, "thm5.5-env"))
        U = grid_sample(nu, n, rng)
        rs = Stream(derive_seed(seed, k, "thm5.5-chain"))
        vals = np.empty(n)
        pin = {root: free_field_pin(s)}
        # group by environment node: grid samples repeat, so each distinct u is handled once
        uniq, inv = np.unique(U, axis=0, return_inverse=True)
        inv = np.asarray(inv).ravel()
        order = np.argsort(inv, kind="stable")
        starts = np.searchsorted(inv[order], np.arange(len(uniq) + 1))
        for q, u in enumerate(uniq):
            idx = order[starts[q]:starts[q + 1]]
            if len(idx) == 0:
                continue
            gen = GeneratorSpec.twisted(ag, u)
            S = np.array([killed_chain(gen.step, a, root, full.n, rs)[0] for _ in idx])
            ff = FreeField(au_matrix(full.W, u), pin, full.vertices)
            z = rng.standard_normal((len(idx), 2 * ff.k))
            vals[idx] = ff.values(_ExpLinearL(lam, S), z[:, :ff.k], z[:, ff.k:])
        lhs, se = mean_se(vals)
        obs = Product(RatioXaXd(a, root), ExpLinearZ(lam))
        v, e = h22_expectation(ag, obs, {root: h22_pin(s)}, tol=p["quad_tol"])
        comps.append(comparison(f"s={s}", lhs, se, v, e))
    return comps


def check_thm61(p, seed, n):
    comps = []
    for case in p["cases"]:
        ag = graph_of(case["graph"])
        if "h" in case:
            ag = with_root_weight(ag, case["h"])
        full = ag.full()
        root = ag.root_index
        th = np.ones(full.n)
        V = [i for i in range(full.n) if i != root]

        def sim(rs, m):
            out = np.empty((m, len(V)))
            for r in range(m):
                out[r] = occupation_S_fast(VrjpState(full.W, th), full.n, root, rs)[1][V]
            return out

        tag = case["graph"] + (f" h={case['h']}" if "h" in case else "")
        occ = replicate(sim, n, seed, f"thm6.1-{tag}")
        for lam in p["lams"]:
            lhs, se = mean_se(np.exp(-lam * occ.sum(axis=1)))
            v, e = h22_expectation(ag, ExpLinearXY(lam_vector(full, lam, root)), tol=1e-8)
            # g = 1 makes both sides exact
            comps.append(comparison(f"{tag} lam={lam}", lhs, se, v, e, tol=1e-9 if lam == 0 else None))
    return comps


def tree_probability_quadrature(ag: AugmentedGraph, pairs, tol: float = 1e-6):
    """Mixing-measure average of the quenched probability that the tree contains ``pairs``."""
    full = ag.full()
    trees = enumerate_spanning_trees(full)
    want = [frozenset(pq) for pq in pairs]
    idx = [[(full.index(a), full.index(b)) for a, b in t.key()] for t in trees]
    mask = np.array([all(w in t.edges for w in want) for t in trees])

    def f(U):
        logs = np.stack([sum(np.log(full.W[i, j]) + U[:, i] + U[:, j] for i, j in t) for t in idx], axis=-1)
        mx = logs.max(axis=1, keepdims=True)
        w = np.exp(logs - mx)
        return w[:, mask].sum(axis=1) / w.sum(axis=1)

    return quadrature_expectation(MixingMeasure(ag, full.vertices[ag.root_index], 1.0), f=f, tol=tol)


def check_kirchhoff(p, seed, n):
    ag = graph_of(p["graph"])
    full = ag.full()
    root = ag.root_index
    th = np.ones(full.n)
    parents = replicate(
        lambda rs, m: np.array([reinforced_pass(VrjpState(full.W, th), full.n, root, rs).parent for _ in range(m)]),
        n, seed, "kirchhoff")
    comps = []
    for a, b in p["edges"]:
        i, j = full.index(a), full.index(b)
        hit = (parents[:, i] == j) | (parents[:, j] == i)
        f = float(hit.mean())
        q, qe = tree_probability_quadrature(ag, [(a, b)])
        comps.append(comparison(f"edge {a}-{b}", f, math.sqrt(f * (1 - f) / n), float(q), qe))
    return comps


def check_pd(p, seed, n):
    comps = []
    # occupation is preserved exactly by the block decomposition
    ag = graph_of(p["graph"])
    full = ag.full()
    root = ag.root_index
    rs = Stream(derive_seed(seed, 0, "pd-occupation"))
    worst = 0.0
    for _ in range(p["occupation_runs"]):
        res = reinforced_pass(VrjpState(full.W, np.ones(full.n)), full.n, root, rs)
        for big in regroup_loops(res.segments):
            pieces = pd_decompose(big, rs)
            for v, x in big.occupation().items():
                got = sum(l.occupation().get(v, 0.0) for l in pieces)
                worst = max(worst, abs(got - x))
    comps.append(comparison("occupation preserved", worst, 0.0, 0.0, 0.0, tol=p["exact_tol"]))
    # block count law for three excursions: Stirling numbers of the first kind / 3!
    e = 3
    loop = Loop("a", [("a", 1.0), ("b", 1.0), ("a", 1.0), ("b", 1.0), ("a", 1.0), ("b", 1.0)])
    counts = replicate(lambda rs, m: np.array([len(pd_decompose(loop, rs)) for _ in range(m)]), n, seed, "pd-law")
    for k, frac in zip((1, 2, 3), (2 / 6, 3 / 6, 1 / 6)):
        f = float(np.mean(counts == k))
        comps.append(comparison(f"e={e} blocks={k}", f, math.sqrt(f * (1 - f) / n), frac, 0.0))
    return comps


def _soup_counts(ag, alpha, n, seed, label):
    full = ag.full()
    root = ag.root_index
    th = np.ones(full.n)
    return replicate(
        lambda rs, m: np.array([soup_statistics(full.W, th, root, alpha, rs)[2] for _ in range(m)]),
        n, seed, label)


def check_thinning(p, seed, n):
    comps = []
    keep = p["keep"]
    loops = [Loop("a", [("a", 1.0)]) for _ in range(n)]
    kept = len(thin(loops, keep, derive_seed(seed, 0, "thin")))
    f = kept / n
    comps.append(comparison(f"retention p={keep}", f, math.sqrt(f * (1 - f) / n), keep, 0.0))
    ag = graph_of(p["graph"])
    base = _soup_counts(ag, 1.0, n, seed, "thin-alpha-1")
    b, bse = mean_se(base)
    for alpha in p["alphas"]:
        c = _soup_counts(ag, alpha, n, seed, f"thin-alpha-{alpha}")
        m, se = mean_se(c)
        comps.append(comparison(f"count(alpha={alpha}) vs alpha*count(1)", m, se, alpha * b, alpha * bse))
    return comps


def h2k_mixture_samples(ag: AugmentedGraph, k: int, n: int, seed: int) -> np.ndarray:
    """Vertex sums of 2k squared Gaussian fields with precision A^u, u from the mixing measure."""
    full = ag.full()
    root = ag.root_index
    V = [i for i in range(full.n) if i != root]
    nu = MixingMeasure(ag, full.vertices[root], 1.0)
    rng = make_generator(derive_seed(seed, 0, "h2k-mixture"))
    U = grid_sample(nu, n, rng)
    A = au_matrix(full.W, U)[:, V][:, :, V]
    C = np.linalg.cholesky(np.linalg.inv(A))
    out = np.zeros((n, len(V)))
    for _ in range(2 * k):
        z = rng.standard_normal((n, len(V)))
        out += np.einsum("mij,mj->mi", C, z) ** 2
    return out


def check_thm72(p, seed, n):
    ag = graph_of(p["graph"])
    full = ag.full()
    root = ag.root_index
    th = np.ones(full.n)
    V = [i for i in range(full.n) if i != root]
    k = p["k"]
    occ = replicate(
        lambda rs, m: np.array([soup_statistics(full.W, th, root, float(k), rs)[0][V] for _ in range(m)]),
        n, seed, "thm7.2-soup")
    field = h2k_mixture_samples(ag, k, n, seed)
    comps = []
    for j, i in enumerate(V):
        a, ae = mean_se(occ[:, j])
        b, be = mean_se(field[:, j])
        comps.append(comparison(f"mean occupation {full.vertices[i]}", a, ae, b, be))
    for lam in p["lams"]:
        a, ae = mean_se(np.exp(-lam * occ.sum(axis=1)))
        b, be = mean_se(np.exp(-lam * field.sum(axis=1)))
        comps.append(comparison(f"laplace lam={lam}", a, ae, b, be))
    return comps


def check_bayes(p, seed, n):
    ag = graph_of(p["graph"])
    comps = []
    for a in p["a"]:
        for s in p["s"]:
            for lam in p["lams"]:
                obs = One() if lam == 0 else ExpLinearXY({"1": lam})
                lhs, rhs, err = susy_bayes_check(ag, a, obs, s)
                comps.append(comparison(f"a={a} s={s} lam={lam}", lhs, err, rhs, 0.0, tol=p["tol"]))
    return comps


def check_lorentz(p, seed, n):
    comps = []
    s = p["s"]
    for name in p["graphs"]:
        ag = graph_of(name)
        full = ag.full()
        root = ag.root_index
        lam = lam_vector(full, p["lam"], root)
        v1, e1 = h22_expectation(ag, BoostedZ(lam, s), tol=p["quad_tol"])
        v2, e2 = h22_expectation(ag, ExpLinearZ(lam), {root: h22_pin(s)}, tol=p["quad_tol"])
        comps.append(comparison(f"{name} s={s}", v1, e1, v2, e2, tol=p["tol"]))
    return comps
