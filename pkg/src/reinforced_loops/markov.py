"""Continuous-time jump processes, loop erasure, Wilson's algorithms and GFF sampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConditioningError, GraphError, ReinforcedLoopsError, StepCapError
from .graph import AugmentedGraph, Graph, SpanningTree, as_full_graph, green_function
from .loops import Loop, LoopCollection
from .rng import Stream

DEFAULT_STEP_CAP = 10**7


class GeneratorSpec:
    """Jump rates on the full vertex set (root last for augmented graphs).

    Build with :meth:`plain` (rate W_ij) or :meth:`twisted`
    (rate W_ij e^{u_j-u_i} / 2).
    """

    def __init__(self, graph: Graph, rates: np.ndarray, root: int | None):
        rates = np.array(rates, dtype=float)
        if rates.shape != (graph.n, graph.n):
            raise GraphError("rate matrix shape does not match graph")
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise GraphError("rates must be finite and nonnegative")
        np.fill_diagonal(rates, 0.0)
        self.graph = graph
        self.root = root
        self.rates = rates
        self.rates.setflags(write=False)
        self.totals = rates.sum(axis=1)
        for i in range(graph.n):
            if i != root and self.totals[i] <= 0:
                raise GraphError(f"vertex {graph.vertices[i]} has zero exit rate")
        # per-vertex neighbour lists for the jump chain
        self.nbrs = []
        self.nbr_rates = []
        for i in range(graph.n):
            js = np.flatnonzero(rates[i] > 0)
            self.nbrs.append(js.tolist())
            self.nbr_rates.append(rates[i, js].tolist())

    @classmethod
    def plain(cls, g: Graph | AugmentedGraph) -> "GeneratorSpec":
        full, root = as_full_graph(g)
        return cls(full, full.W, root)

    @classmethod
    def twisted(cls, g: Graph | AugmentedGraph, u) -> "GeneratorSpec":
        full, root = as_full_graph(g)
        u = np.asarray(getattr(u, "u", u), dtype=float)
        if u.shape != (full.n,):
            raise GraphError(f"environment must cover all {full.n} vertices")
        rates = 0.5 * full.W * np.exp(u[None, :] - u[:, None])
        return cls(full, rates, root)

    @property
    def n(self) -> int:
        return self.graph.n

    def jump_matrix(self) -> np.ndarray:
        """Transition matrix of the jump chain (rows of the root left zero)."""
        P = np.zeros_like(self.rates)
        for i in range(self.n):
            if self.totals[i] > 0:
                P[i] = self.rates[i] / self.totals[i]
        return P

    def step(self, i: int, rs: Stream) -> tuple[float, int]:
        """Holding time at i and the next vertex."""
        h = rs.expo() / self.totals[i]
        js = self.nbrs[i]
        if len(js) == 1:
            return h, js[0]
        r = rs.uniform() * self.totals[i]
        acc = 0.0
        for j, w in zip(js, self.nbr_rates[i]):
            acc += w
            if r < acc:
                return h, j
        return h, js[-1]


@dataclass(frozen=True)
class StopRule:
    kind: str  # "kill", "duration" or "steps"
    value: float | None = None
    cap: int = DEFAULT_STEP_CAP

    def __post_init__(self):
        if self.kind not in ("kill", "duration", "steps"):
            raise ValueError(f"unknown stop rule {self.kind!r}")


def kill_at_root(cap: int = DEFAULT_STEP_CAP) -> StopRule:
    return StopRule("kill", None, cap)


def fixed_duration(t: float, cap: int = DEFAULT_STEP_CAP) -> StopRule:
    return StopRule("duration", float(t), cap)


def step_limit(n: int) -> StopRule:
    return StopRule("steps", int(n), int(n) + 1)


@dataclass
class JumpTrajectory:
    start: str
    steps: list = field(default_factory=list)
    end_reason: str = "killed_at_root"
    last_vertex_before_root: str | None = None

    @property
    def duration(self) -> float:
        return sum(h for _, h in self.steps)

    def local_times(self, vertices: Sequence[str] | None = None) -> dict:
        out = {v: 0.0 for v in vertices} if vertices is not None else {}
        for v, h in self.steps:
            out[v] = out.get(v, 0.0) + h
        return out

    def to_jsonl(self) -> str:
        import json

        return "".join(json.dumps({"vertex": v, "holding_time": h}) + "\n" for v, h in self.steps)


def simulate_jump(gen: GeneratorSpec, start, stop: StopRule, seed) -> JumpTrajectory:
    rs = seed if isinstance(seed, Stream) else Stream(seed)
    names = gen.graph.vertices
    i = i0 = gen.graph.index(start)
    if i == gen.root:
        raise GraphError("start must be a non-root vertex")
    if stop.kind == "kill" and gen.root is None:
        raise GraphError("kill-at-root needs an augmented graph")
    steps = []
    t = 0.0
    while True:
        if stop.kind == "steps" and len(steps) >= stop.value:
            return JumpTrajectory(names[i0], steps, "step_cap", None)
        if len(steps) >= stop.cap:
            raise StepCapError(f"jump cap {stop.cap} reached before the stop condition")
        h, j = gen.step(i, rs)
        if stop.kind == "duration" and t + h >= stop.value:
            steps.append((names[i], stop.value - t))
            return JumpTrajectory(names[i0], steps, "local_time_threshold_hit", None)
        steps.append((names[i], h))
        t += h
        if j == gen.root:
            return JumpTrajectory(names[i0], steps, "killed_at_root", names[i])
        i = j


# ---------------------------------------------------------------- loop erasure

def loop_erase(path: Sequence) -> tuple[list, list[Loop]]:
    """Chronological loop erasure of a path of vertices or (vertex, holding) pairs.

    When the path returns to a vertex on the current branch, the visits made
    since that earlier visit form the erased loop (based at that vertex) and
    the new visit continues the branch.
    """
    if len(path) == 0:
        raise ReinforcedLoopsError("path must be nonempty")
    stack: list = []
    pos: dict = {}
    loops: list[Loop] = []
    for item in path:
        v, h = (item if isinstance(item, tuple) else (item, 0.0))
        k = pos.get(v)
        if k is not None:
            erased = stack[k:]
            for w, _ in erased:
                del pos[w]
            del stack[k:]
            loops.append(Loop._make(v, tuple(erased)))
        pos[v] = len(stack)
        stack.append((v, h))
    return stack, loops


# ---------------------------------------------------------------- Wilson

@dataclass
class WilsonResult:
    """Index-level output of a Wilson run.

    ``parent[i]`` is the successor of i towards the root (-1 for the root);
    ``loops`` use integer vertices; ``segments`` and ``order`` are filled by
    the single-exploration variant only.
    """

    parent: list
    loops: list
    segments: list = field(default_factory=list)
    order: list = field(default_factory=list)
    position: int = -1
    jumps: int = 0

    def tree(self, names: Sequence[str]) -> SpanningTree:
        return SpanningTree.from_pairs(
            (names[i], names[p]) for i, p in enumerate(self.parent) if p >= 0
        )


def _erase_walk(step: Callable, start: int, in_tree: list, rs, cap: int, count: int):
    """Walk from start until the tree is hit, erasing loops on the fly."""
    stack: list = []
    pos: dict = {}
    loops = []
    raw = []
    v = start
    while not in_tree[v]:
        k = pos.get(v)
        if k is not None:
            erased = stack[k:]
            for w, _ in erased:
                del pos[w]
            del stack[k:]
            loops.append(Loop._make(v, tuple(erased)))
        h, nxt = step(v, rs)
        count += 1
        if count > cap:
            raise StepCapError(f"exploration exceeded {cap} jumps")
        pos[v] = len(stack)
        stack.append((v, h))
        raw.append((v, h))
        v = nxt
    return stack, loops, raw, v, count


def _attach_branch(stack, hit, in_tree, parent, loops):
    for k, (w, h) in enumerate(stack):
        in_tree[w] = True
        parent[w] = stack[k + 1][0] if k + 1 < len(stack) else hit
        loops.append(Loop._make(w, ((w, h),)))


def wilson_ordered(step: Callable, n_full: int, root: int, rs: Stream, cap: int = DEFAULT_STEP_CAP,
                   order: Sequence[int] | None = None) -> WilsonResult:
    in_tree = [False] * n_full
    in_tree[root] = True
    parent = [-1] * n_full
    loops: list = []
    count = 0
    for x in (order if order is not None else range(n_full)):
        if in_tree[x]:
            continue
        stack, erased, _, hit, count = _erase_walk(step, x, in_tree, rs, cap, count)
        loops.extend(erased)
        _attach_branch(stack, hit, in_tree, parent, loops)
    return WilsonResult(parent, loops, jumps=count)


def wilson_popping(step: Callable, n_full: int, root: int, rs: Stream, cap: int = DEFAULT_STEP_CAP) -> WilsonResult:
    """Cycle popping with lazily drawn stacks of (successor, holding) cards."""
    top = [None] * n_full
    for i in range(n_full):
        if i != root:
            h, j = step(i, rs)
            top[i] = (j, h)
    count = n_full - 1
    good = [False] * n_full
    good[root] = True
    loops: list = []
    for x in range(n_full):
        while not good[x]:
            path = []
            onpath: dict = {}
            v = x
            while not good[v] and v not in onpath:
                onpath[v] = len(path)
                path.append(v)
                v = top[v][0]
            if good[v]:
                for w in path:
                    good[w] = True
                break
            cycle = path[onpath[v]:]
            loops.append(Loop._make(v, tuple((w, top[w][1]) for w in cycle)))
            for w in cycle:
                h, j = step(w, rs)
                top[w] = (j, h)
            count += len(cycle)
            if count > cap:
                raise StepCapError(f"cycle popping exceeded {cap} cards")
    parent = [-1] * n_full
    for i in range(n_full):
        if i != root:
            parent[i] = top[i][0]
            loops.append(Loop._make(i, ((i, top[i][1]),)))
    return WilsonResult(parent, loops, jumps=count)


def single_exploration(step: Callable, n_full: int, root: int, rs: Stream, cap: int = DEFAULT_STEP_CAP,
                       start: int | None = None, on_invisible: Callable | None = None) -> WilsonResult:
    """One exploration from the root: invisible on the tree, loop erasure off it.

    Stops as soon as the tree spans. ``on_invisible`` (if given) is called with
    each invisible step; the reinforced algorithm uses the same ``step`` for
    both phases so reinforcement is never paused.
    """
    in_tree = [False] * n_full
    in_tree[root] = True
    parent = [-1] * n_full
    loops: list = []
    segments = []
    order = []
    remaining = n_full - 1
    v = root if start is None else start
    count = 0
    while remaining > 0:
        if in_tree[v]:
            h, v2 = step(v, rs)
            count += 1
            if count > cap:
                raise StepCapError(f"exploration exceeded {cap} jumps")
            if on_invisible is not None:
                on_invisible(v, h)
            v = v2
            continue
        stack, erased, raw, hit, count = _erase_walk(step, v, in_tree, rs, cap, count)
        loops.extend(erased)
        segments.append(raw)
        order.extend(w for w, _ in stack)
        remaining -= len(stack)
        _attach_branch(stack, hit, in_tree, parent, loops)
        v = hit
    return WilsonResult(parent, loops, segments, order, position=v, jumps=count)


VARIANTS = ("ordered", "popping", "single")


def wilson(ag: AugmentedGraph, gen: GeneratorSpec | None, variant: str, seed, cap: int = DEFAULT_STEP_CAP):
    """Spanning tree rooted at the root vertex and the erased-loop collection.

    Branch holding times are returned as trivial loops, so the occupation
    field of the collection is that of a loop soup of intensity one.
    """
    if not isinstance(ag, AugmentedGraph):
        raise GraphError("Wilson's algorithm needs a rooted graph")
    gen = gen or GeneratorSpec.plain(ag)
    rs = seed if isinstance(seed, Stream) else Stream(seed)
    res = run_wilson(gen, variant, rs, cap)
    names = gen.graph.vertices
    return res.tree(names), LoopCollection(l.relabel(names) for l in res.loops)


def run_wilson(gen: GeneratorSpec, variant: str, rs: Stream, cap: int = DEFAULT_STEP_CAP) -> WilsonResult:
    if gen.root is None:
        raise GraphError("Wilson's algorithm needs a rooted generator")
    if variant in ("ordered", "ordered-loop-erasure"):
        return wilson_ordered(gen.step, gen.n, gen.root, rs, cap)
    if variant in ("popping", "cycle-popping"):
        return wilson_popping(gen.step, gen.n, gen.root, rs, cap)
    if variant in ("single", "single-exploration"):
        if gen.totals[gen.root] <= 0:
            raise GraphError("single exploration needs positive rates out of the root")
        return single_exploration(gen.step, gen.n, gen.root, rs, cap)
    raise ValueError(f"unknown Wilson variant {variant!r}")


# ---------------------------------------------------------------- GFF

def sample_gff(generator: np.ndarray, pinned: Mapping[int, float] | None, n_fields: int, seed) -> np.ndarray:
    """Gaussian fields with precision ``generator`` on the free indices.

    Pinned indices hold their values; the free part has covariance
    green_function(generator, pinned) and mean propagated from the pins.
    Returns an array of shape (n_fields, n).
    """
    M = np.asarray(generator, dtype=float)
    n = M.shape[0]
    pinned = dict(pinned or {})
    free = [i for i in range(n) if i not in pinned]
    P = sorted(pinned)
    gen = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(int(seed)))
    out = np.zeros((n_fields, n))
    for p in P:
        out[:, p] = pinned[p]
    if not free:
        return out
    Mff = M[np.ix_(free, free)]
    try:
        C = np.linalg.cholesky(Mff)
    except np.linalg.LinAlgError:
        raise ConditioningError("generator is not positive definite on the free vertices") from None
    mean = np.zeros(len(free))
    if P:
        c = np.array([pinned[p] for p in P])
        mean = -np.linalg.solve(Mff, M[np.ix_(free, P)] @ c)
    z = gen.standard_normal((n_fields, len(free)))
    # x = C^{-T} z has covariance (C C^T)^{-1}
    x = np.linalg.solve(C.T, z.T).T
    out[:, free] = x + mean
    return out


def killed_green(gen: GeneratorSpec) -> np.ndarray:
    """Green function of the killed process on the non-root vertices."""
    Q = np.diag(gen.totals) - gen.rates
    keep = [i for i in range(gen.n) if i != gen.root]
    return green_function(Q, [gen.root] if gen.root is not None else [])[np.ix_(keep, keep)]
