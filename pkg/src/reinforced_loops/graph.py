"""Weighted graphs, rooted (augmented) graphs and their linear algebra."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ConditioningError,
    GraphError,
    InvalidTreeError,
    OracleLimitError,
    SingularityError,
)

ORACLE_MAX_VERTICES = 8

BUNDLED_GRAPHS = (
    "single-vertex+root",
    "2-path+root",
    "triangle",
    "triangle+root",
    "K4+root",
)


def _check_weight(w) -> float:
    if isinstance(w, bool) or not isinstance(w, (int, float)):
        raise GraphError(f"weight must be a number, got {w!r}")
    w = float(w)
    if not math.isfinite(w) or w < 0:
        raise GraphError(f"weight must be finite and >= 0, got {w}")
    return w


@dataclass(frozen=True)
class Graph:
    """Undirected graph with symmetric nonnegative weights.

    Vertex order is the load order and fixes every matrix index.
    Zero-weight edges are dropped.
    """

    vertices: tuple[str, ...]
    edges: tuple[tuple[str, str, float], ...] = ()
    _index: dict = field(init=False, repr=False, compare=False)
    _W: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        verts = tuple(str(v) for v in self.vertices)
        if len(verts) == 0:
            raise GraphError("graph needs at least one vertex")
        if len(set(verts)) != len(verts):
            raise GraphError("duplicate vertex ids")
        index = {v: k for k, v in enumerate(verts)}
        n = len(verts)
        W = np.zeros((n, n))
        kept = []
        seen = set()
        for e in self.edges:
            u, v, w = str(e[0]), str(e[1]), _check_weight(e[2])
            if u not in index or v not in index:
                raise GraphError(f"edge ({u},{v}) uses an unknown vertex")
            if u == v:
                raise GraphError(f"self-edge at {u}")
            key = frozenset((u, v))
            if key in seen:
                raise GraphError(f"duplicate edge ({u},{v})")
            seen.add(key)
            if w == 0.0:
                continue
            W[index[u], index[v]] = W[index[v], index[u]] = w
            kept.append((u, v, w))
        W.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple(kept))
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_W", W)
        if not _connected(W):
            raise GraphError("positive-weight subgraph is not connected")

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def W(self) -> np.ndarray:
        return self._W

    def index(self, v) -> int:
        try:
            return self._index[str(v)]
        except KeyError:
            raise GraphError(f"unknown vertex {v!r}") from None

    def weight(self, u, v) -> float:
        return float(self._W[self.index(u), self.index(v)])

    def neighbours(self, v) -> list[str]:
        row = self._W[self.index(v)]
        return [self.vertices[j] for j in np.flatnonzero(row > 0)]


@dataclass(frozen=True)
class AugmentedGraph:
    """A graph together with a root vertex attached by weights W_i,root."""

    base: Graph
    root: str
    root_weights: Mapping[str, float]
    _full: Graph = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        root = str(self.root)
        if root in self.base._index:
            raise GraphError("root must not be a base vertex")
        rw = {}
        for v, w in dict(self.root_weights).items():
            self.base.index(v)
            rw[str(v)] = _check_weight(w)
        if not any(w > 0 for w in rw.values()):
            raise GraphError("at least one root weight must be positive")
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "root_weights", rw)
        edges = list(self.base.edges) + [(v, root, w) for v, w in rw.items() if w > 0]
        object.__setattr__(self, "_full", Graph(self.base.vertices + (root,), tuple(edges)))

    @property
    def vertices(self) -> tuple[str, ...]:
        return self.base.vertices

    @property
    def n(self) -> int:
        return self.base.n

    def full(self) -> Graph:
        """The graph on V plus the root, root last in the vertex order."""
        return self._full

    @property
    def root_index(self) -> int:
        return self.base.n

    def H(self) -> np.ndarray:
        return np.diag([self.root_weights.get(v, 0.0) for v in self.base.vertices])

    def dirichlet_matrix(self) -> np.ndarray:
        """Laplacian of the base plus the diagonal of root weights."""
        return laplacian(self.base) + self.H()


def as_full_graph(g: Graph | AugmentedGraph) -> tuple[Graph, int | None]:
    """Return the graph on all vertices (root included) and the root index."""
    if isinstance(g, AugmentedGraph):
        return g.full(), g.root_index
    return g, None


def _connected(W: np.ndarray) -> bool:
    n = W.shape[0]
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(W[i] > 0):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return len(seen) == n


# ---------------------------------------------------------------- loading

_GRAPH_KEYS = {"vertices", "edges", "root", "root_weights"}
_EDGE_KEYS = {"u", "v", "w"}


def graph_from_dict(d: Mapping) -> Graph | AugmentedGraph:
    if not isinstance(d, Mapping):
        raise GraphError("graph document must be a JSON object")
    unknown = set(d) - _GRAPH_KEYS
    if unknown:
        raise GraphError(f"unknown keys in graph document: {sorted(unknown)}")
    if "vertices" not in d:
        raise GraphError("graph document needs 'vertices'")
    edges = []
    for e in d.get("edges", []) or []:
        if not isinstance(e, Mapping):
            raise GraphError("each edge must be an object")
        bad = set(e) - _EDGE_KEYS
        if bad:
            raise GraphError(f"unknown keys in edge: {sorted(bad)}")
        if not _EDGE_KEYS <= set(e):
            raise GraphError("edge needs 'u', 'v' and 'w'")
        edges.append((e["u"], e["v"], e["w"]))
    base = Graph(tuple(d["vertices"]), tuple(edges))
    root = d.get("root")
    rw = d.get("root_weights") or {}
    if root is None:
        if rw:
            raise GraphError("root_weights given without a root")
        return base
    return AugmentedGraph(base, str(root), dict(rw))


def graph_to_dict(g: Graph | AugmentedGraph) -> dict:
    base = g.base if isinstance(g, AugmentedGraph) else g
    out = {
        "vertices": list(base.vertices),
        "edges": [{"u": u, "v": v, "w": w} for u, v, w in base.edges],
        "root": None,
        "root_weights": {},
    }
    if isinstance(g, AugmentedGraph):
        out["root"] = g.root
        out["root_weights"] = dict(g.root_weights)
    return out


def load_graph(source) -> Graph | AugmentedGraph:
    """Load a graph from a JSON path, a bundled graph name, or a dict."""
    if isinstance(source, (Graph, AugmentedGraph)):
        return source
    if isinstance(source, Mapping):
        return graph_from_dict(source)
    name = str(source)
    if name in BUNDLED_GRAPHS:
        return bundled_graph(name)
    path = Path(name)
    if not path.exists():
        raise GraphError(f"no graph file or bundled graph named {name!r}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphError(f"invalid JSON in {path}: {exc}") from None
    return graph_from_dict(doc)


def bundled_graph(name: str) -> Graph | AugmentedGraph:
    if name not in BUNDLED_GRAPHS:
        raise GraphError(f"unknown bundled graph {name!r}")
    text = resources.files("reinforced_loops").joinpath(f"data/graphs/{name}.json").read_text()
    return graph_from_dict(json.loads(text))


def with_root_weight(ag: AugmentedGraph, h: float) -> AugmentedGraph:
    """Copy of ``ag`` with every positive root weight replaced by ``h``."""
    rw = {v: (h if w > 0 else 0.0) for v, w in ag.root_weights.items()}
    return AugmentedGraph(ag.base, ag.root, rw)


# ---------------------------------------------------------------- matrices

def laplacian(g: Graph) -> np.ndarray:
    W = g.W
    return np.diag(W.sum(axis=1)) - W


def weighted_laplacian(W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    L = -W.copy()
    idx = np.arange(W.shape[-1])
    L[..., idx, idx] = W.sum(axis=-1)
    return L


# ---------------------------------------------------------------- trees

@dataclass(frozen=True)
class SpanningTree:
    edges: frozenset

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[str]]) -> "SpanningTree":
        return cls(frozenset(frozenset((str(a), str(b))) for a, b in pairs))

    def contains(self, pairs: Iterable[Sequence[str]]) -> bool:
        return all(frozenset((str(a), str(b))) in self.edges for a, b in pairs)

    def key(self) -> tuple:
        """Canonical sortable form, used for frequency tables and serialisation."""
        return tuple(sorted(tuple(sorted(e)) for e in self.edges))

    def is_spanning_tree_of(self, g: Graph) -> bool:
        if len(self.edges) != g.n - 1:
            return False
        parent = list(range(g.n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in self.edges:
            if len(e) != 2:
                return False
            a, b = (g.index(v) for v in e)
            ra, rb = find(a), find(b)
            if ra == rb:
                return False
            parent[ra] = rb
        return True


def enumerate_spanning_trees(g: Graph) -> list[SpanningTree]:
    """All spanning trees of the positive-weight subgraph (brute force)."""
    if g.n > ORACLE_MAX_VERTICES:
        raise OracleLimitError(f"tree enumeration capped at {ORACLE_MAX_VERTICES} vertices, got {g.n}")
    if g.n == 1:
        return [SpanningTree(frozenset())]
    idx = [(g.index(u), g.index(v)) for u, v, _ in g.edges]
    trees = []
    for combo in itertools.combinations(range(len(idx)), g.n - 1):
        parent = list(range(g.n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        ok = True
        for k in combo:
            a, b = idx[k]
            ra, rb = find(a), find(b)
            if ra == rb:
                ok = False
                break
            parent[ra] = rb
        if ok:
            trees.append(SpanningTree.from_pairs((g.edges[k][0], g.edges[k][1]) for k in combo))
    return trees


def tree_weight(t: SpanningTree, g: Graph) -> float:
    w = 1.0
    for a, b in t.key():
        wab = g.weight(a, b)
        if wab <= 0:
            raise InvalidTreeError(f"tree edge ({a},{b}) is not an edge of the graph")
        w *= wab
    return w


def _as_field(g: Graph, u) -> np.ndarray:
    if isinstance(u, Mapping):
        return np.array([float(u[v]) for v in g.vertices])
    if hasattr(u, "u") and hasattr(u, "pinned"):
        u = u.u
    arr = np.asarray(u, dtype=float)
    if arr.shape[-1] != g.n:
        raise GraphError(f"field has {arr.shape[-1]} entries, graph has {g.n} vertices")
    return arr


def log_matrix_tree_values(W: np.ndarray, U: np.ndarray) -> np.ndarray:
    """log D(W, u) for a batch of fields ``U`` of shape (..., n)."""
    U = np.asarray(U, dtype=float)
    n = W.shape[0]
    if n == 1:
        return np.zeros(U.shape[:-1])
    E = np.exp(U)
    Wu = W * E[..., :, None] * E[..., None, :]
    L = weighted_laplacian(Wu)[..., 1:, 1:]
    sign, logdet = np.linalg.slogdet(L)
    if np.any(sign <= 0):
        raise ConditioningError("matrix-tree minor has non-positive determinant")
    return logdet


def matrix_tree_value(g: Graph, u=None) -> float:
    """D(W,u): sum over spanning trees of prod W_ij e^{u_i+u_j}, via a Laplacian minor."""
    u = np.zeros(g.n) if u is None else _as_field(g, u)
    return float(math.exp(log_matrix_tree_values(g.W, u)))


def matrix_tree_bruteforce(g: Graph, u=None) -> float:
    u = np.zeros(g.n) if u is None else _as_field(g, u)
    total = 0.0
    for t in enumerate_spanning_trees(g):
        w = 1.0
        for e in t.key():
            a, b = (g.index(v) for v in e)
            w *= g.W[a, b] * math.exp(u[a] + u[b])
        total += w
    return total


def green_function(M: np.ndarray, pinned: Iterable[int] = ()) -> np.ndarray:
    """Inverse of M restricted to the unpinned indices, zero-padded on pinned rows/cols."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    pinned = sorted({int(p) for p in pinned})
    free = [i for i in range(n) if i not in pinned]
    G = np.zeros((n, n))
    if not free:
        return G
    sub = M[np.ix_(free, free)]
    cond = np.linalg.cond(sub)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularityError(f"restricted matrix is singular (condition estimate {cond:.3g})")
    G[np.ix_(free, free)] = np.linalg.inv(sub)
    return G
