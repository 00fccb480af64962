"""Reinforced Wilson's algorithm: one VRJP exploration building a tree and loops."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphError, StepCapError
from .graph import AugmentedGraph, SpanningTree
from .loops import Loop, LoopCollection, pd_decompose, regroup_loops, thin
from .markov import DEFAULT_STEP_CAP, WilsonResult, single_exploration
from .rng import Stream, derive_seed
from .vrjp import VrjpState, theta_vector


@dataclass
class ReWilsonOutput:
    tree: SpanningTree
    erased_loops: LoopCollection
    occupation_S: dict
    order: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    final_L: dict = field(default_factory=dict)
    jumps: int = 0

    def to_dict(self) -> dict:
        return {
            "tree": [sorted(e) for e in self.tree.key()],
            "occupation_S": self.occupation_S,
            "order": self.order,
            "final_L": self.final_L,
            "n_loops": len(self.erased_loops),
            "n_nontrivial_loops": len(self.erased_loops.nontrivial()),
            "jumps": self.jumps,
        }


def _as_stream(seed) -> Stream:
    return seed if isinstance(seed, Stream) else Stream(seed)


def _check(ag) -> None:
    if not isinstance(ag, AugmentedGraph):
        raise GraphError("the reinforced algorithm runs on a rooted graph")


def reinforced_pass(state: VrjpState, n_full: int, root: int, rs: Stream, start: int | None = None,
                    cap: int = DEFAULT_STEP_CAP) -> WilsonResult:
    """Index-level pass: invisible moves reinforce, visible segments are loop-erased.

    Holding times are reported on the S = L^2 scale.
    """
    return single_exploration(state.step_s, n_full, root, rs, cap, start=start)


def reinforced_wilson(ag: AugmentedGraph, theta=None, seed=0, cap: int = DEFAULT_STEP_CAP) -> ReWilsonOutput:
    _check(ag)
    full = ag.full()
    root = ag.root_index
    state = VrjpState(full.W, theta_vector(full, theta))
    res = reinforced_pass(state, full.n, root, _as_stream(seed), cap=cap)
    names = full.vertices
    loops = LoopCollection(l.relabel(names) for l in res.loops)
    occ = {v: 0.0 for v in ag.vertices}
    for l in res.loops:
        for v, h in l.steps:
            occ[names[v]] += h
    return ReWilsonOutput(
        tree=res.tree(names),
        erased_loops=loops,
        occupation_S=occ,
        order=[names[i] for i in res.order],
        segments=[[(names[v], h) for v, h in seg] for seg in res.segments],
        final_L={v: float(l) for v, l in zip(names, state.L)},
        jumps=res.jumps,
    )


def occupation_S_fast(state: VrjpState, n_full: int, root: int, rs: Stream, cap: int = DEFAULT_STEP_CAP):
    """(parent list, occupation array over the full vertex set) of one run."""
    res = reinforced_pass(state, n_full, root, rs, cap=cap)
    occ = np.zeros(n_full)
    for l in res.loops:
        for v, h in l.steps:
            occ[v] += h
    return res.parent, occ


def _walk_to_root(state: VrjpState, v: int, root: int, rs: Stream, cap: int) -> int:
    n = 0
    while v != root:
        _, v = state.step(v, rs)
        n += 1
        if n > cap:
            raise StepCapError(f"walk back to the root exceeded {cap} jumps")
    return v


def reinforced_passes(state: VrjpState, n_full: int, root: int, k: int, rs: Stream,
                      cap: int = DEFAULT_STEP_CAP) -> list[WilsonResult]:
    """k chained passes of one VRJP; each pass restarts erasure at the root."""
    out = []
    v = root
    for p in range(k):
        if p > 0:
            v = _walk_to_root(state, v, root, rs, cap)
        res = reinforced_pass(state, n_full, root, rs, start=v, cap=cap)
        out.append(res)
        v = res.position
    return out


def soup_from_passes(passes: Iterable[WilsonResult], rs: Stream) -> list[Loop]:
    """Regroup visible segments into large loops and split each by PD(0,1) blocks."""
    out = []
    for res in passes:
        for big in regroup_loops(res.segments):
            out.extend(pd_decompose(big, rs))
    return out


def reinforced_soup(ag: AugmentedGraph, theta=None, alpha: float = 1.0, seed=0,
                    cap: int = DEFAULT_STEP_CAP) -> LoopCollection:
    """Reinforced loop soup of parameter alpha.

    ceil(alpha) chained passes of the same VRJP are regrouped and
    PD-decomposed; for fractional alpha each loop is then kept with
    probability alpha / ceil(alpha).
    """
    _check(ag)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    full = ag.full()
    root = ag.root_index
    rs = _as_stream(seed)
    state = VrjpState(full.W, theta_vector(full, theta))
    k = math.ceil(alpha)
    loops = soup_from_passes(reinforced_passes(state, full.n, root, k, rs, cap), rs)
    names = full.vertices
    c = LoopCollection(l.relabel(names) for l in loops)
    if alpha < k:
        c = thin(c, alpha / k, rs)
    return c


def soup_statistics(W: np.ndarray, theta: np.ndarray, root: int, alpha: float, rs: Stream,
                    cap: int = DEFAULT_STEP_CAP) -> tuple[np.ndarray, int, int]:
    """(occupation over the full vertex set, loop count, nontrivial loop count) of one soup."""
    n = W.shape[0]
    state = VrjpState(W, theta)
    k = math.ceil(alpha)
    loops = soup_from_passes(reinforced_passes(state, n, root, k, rs, cap), rs)
    if alpha < k:
        p = alpha / k
        loops = [l for l in loops if rs.uniform() < p]
    occ = np.zeros(n)
    nontrivial = 0
    for l in loops:
        if not l.is_trivial:
            nontrivial += 1
        for v, h in l.steps:
            occ[v] += h
    return occ, len(loops), nontrivial


def _edge_key(full, pairs) -> list[tuple[int, int]]:
    out = []
    for a, b in pairs:
        i, j = full.index(a), full.index(b)
        if full.W[i, j] <= 0:
            raise GraphError(f"({a}, {b}) is not an edge")
        out.append((i, j))
    return out


def tree_edge_probability_mc(ag: AugmentedGraph, theta, edges: Sequence[Sequence[str]], n: int, seed=0,
                             chunk: int = 2000, cap: int = DEFAULT_STEP_CAP) -> tuple[float, float]:
    """Frequency of {edges in the reinforced tree} over n runs, with its standard error."""
    _check(ag)
    full = ag.full()
    root = ag.root_index
    th = theta_vector(full, theta)
    want = _edge_key(full, edges)
    hits = 0
    for c, s in enumerate(range(0, n, chunk)):
        rs = Stream(derive_seed(seed, c, "tree-edge"))
        for _ in range(min(chunk, n - s)):
            state = VrjpState(full.W, th)
            parent = reinforced_pass(state, full.n, root, rs, cap=cap).parent
            if all(parent[i] == j or parent[j] == i for i, j in want):
                hits += 1
    p = hits / n
    return p, math.sqrt(p * (1 - p) / n)
