"""Vertex reinforced jump process in its natural (Y) time and the change to Z time."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import GraphError, StepCapError
from .graph import AugmentedGraph, Graph, as_full_graph
from .markov import DEFAULT_STEP_CAP, JumpTrajectory
from .rng import Stream


def theta_vector(full: Graph, theta) -> np.ndarray:
    """Initial local times on the full vertex set; scalars broadcast."""
    if theta is None:
        t = np.ones(full.n)
    elif isinstance(theta, Mapping):
        t = np.ones(full.n)
        for v, val in theta.items():
            t[full.index(v)] = float(val)
    else:
        t = np.broadcast_to(np.asarray(theta, dtype=float), (full.n,)).copy()
    if not np.all(t > 0) or not np.all(np.isfinite(t)):
        raise GraphError("initial local times must be positive and finite")
    return t


class VrjpState:
    """Mutable reinforcement state: rates out of i are W_ij L_j.

    Only the resident vertex's local time grows, so rates are constant between
    jumps and each holding time is an exact exponential draw.
    """

    def __init__(self, W: np.ndarray, theta: np.ndarray):
        self.n = W.shape[0]
        self.L = [float(x) for x in theta]
        self.nbrs = []
        self.wts = []
        for i in range(self.n):
            js = np.flatnonzero(W[i] > 0)
            self.nbrs.append(js.tolist())
            self.wts.append(W[i, js].tolist())

    def step(self, i: int, rs: Stream) -> tuple[float, int]:
        """Y-time holding at i and the next vertex; updates L_i."""
        L = self.L
        js = self.nbrs[i]
        ws = self.wts[i]
        rates = [w * L[j] for j, w in zip(js, ws)]
        total = sum(rates)
        y = rs.expo() / total
        L[i] += y
        if len(js) == 1:
            return y, js[0]
        r = rs.uniform() * total
        acc = 0.0
        for j, q in zip(js, rates):
            acc += q
            if r < acc:
                return y, j
        return y, js[-1]

    def step_s(self, i: int, rs: Stream) -> tuple[float, int]:
        """Same move, with the holding time reported on the S = L^2 scale."""
        l0 = self.L[i]
        y, j = self.step(i, rs)
        l1 = self.L[i]
        return (l1 - l0) * (l1 + l0), j


@dataclass(frozen=True)
class VrjpStop:
    kind: str  # "kill", "threshold", "steps" or "callback"
    vertex: str | None = None
    level: float | None = None
    callback: Callable | None = None
    cap: int = DEFAULT_STEP_CAP


def kill_at_root(cap: int = DEFAULT_STEP_CAP) -> VrjpStop:
    return VrjpStop("kill", cap=cap)


def local_time_threshold(vertex, level: float, cap: int = DEFAULT_STEP_CAP) -> VrjpStop:
    return VrjpStop("threshold", str(vertex), float(level), cap=cap)


def step_limit(n: int) -> VrjpStop:
    return VrjpStop("steps", level=int(n), cap=int(n) + 1)


def until(callback: Callable, cap: int = DEFAULT_STEP_CAP) -> VrjpStop:
    """Stop once ``callback(vertex_index, L)`` returns True (checked after each jump)."""
    return VrjpStop("callback", callback=callback, cap=cap)


@dataclass
class VrjpTrajectory:
    start: str
    theta: dict
    steps: list = field(default_factory=list)
    L: dict = field(default_factory=dict)
    end_reason: str = ""
    last_vertex_before_root: str | None = None

    @property
    def duration(self) -> float:
        return sum(y for _, y in self.steps)


def run_vrjp_idx(state: VrjpState, start: int, kind: str, rs: Stream, root: int | None = None,
                 a: int = -1, level: float = 0.0, cap: int = DEFAULT_STEP_CAP,
                 callback: Callable | None = None, record: list | None = None):
    """Index-level driver. Returns (end_reason, last_vertex, final_vertex)."""
    L = state.L
    i = start
    prev = -1
    n = 0
    while True:
        if kind == "threshold" and L[a] >= level:
            return "local_time_threshold_hit", prev, i
        if kind == "steps" and n >= level:
            return "step_cap", prev, i
        if n >= cap:
            raise StepCapError(f"VRJP exceeded {cap} jumps")
        if kind == "threshold" and i == a:
            # stop inside this stay if the level is crossed before the jump
            l0 = L[i]
            y, j = state.step(i, rs)
            if L[i] >= level:
                L[i] = level
                if record is not None:
                    record.append((i, level - l0))
                return "local_time_threshold_hit", prev, i
        else:
            y, j = state.step(i, rs)
        n += 1
        if record is not None:
            record.append((i, y))
        if kind == "kill" and j == root:
            return "killed_at_root", i, j
        prev, i = i, j
        if kind == "callback" and callback(i, L):
            return "tree_completed", prev, i


def simulate_vrjp(g: Graph | AugmentedGraph, start, theta=None, stop: VrjpStop | None = None,
                  seed=0) -> VrjpTrajectory:
    full, root = as_full_graph(g)
    stop = stop or kill_at_root()
    rs = seed if isinstance(seed, Stream) else Stream(seed)
    th = theta_vector(full, theta)
    state = VrjpState(full.W, th)
    i0 = full.index(start)
    if stop.kind == "kill":
        if root is None:
            raise GraphError("kill-at-root needs a rooted graph")
        if i0 == root:
            raise GraphError("start must differ from the root")
    a = full.index(stop.vertex) if stop.kind == "threshold" else -1
    rec: list = []
    reason, last, _ = run_vrjp_idx(state, i0, stop.kind, rs, root=root, a=a,
                                   level=stop.level or 0.0, cap=stop.cap,
                                   callback=stop.callback, record=rec)
    names = full.vertices
    return VrjpTrajectory(
        start=names[i0],
        theta={v: float(t) for v, t in zip(names, th)},
        steps=[(names[i], y) for i, y in rec],
        L={v: float(l) for v, l in zip(names, state.L)},
        end_reason=reason,
        last_vertex_before_root=names[last] if reason == "killed_at_root" else None,
    )


def time_change(y: VrjpTrajectory) -> tuple[JumpTrajectory, dict]:
    """Z-time trajectory: a stay raising L_i from l1 to l2 lasts l2^2 - l1^2."""
    L = dict(y.theta)
    steps = []
    for v, dt in y.steps:
        l1 = L[v]
        l2 = l1 + dt
        steps.append((v, (l2 - l1) * (l2 + l1)))
        L[v] = l2
    S = {v: 0.0 for v in y.theta}
    for v, h in steps:
        S[v] += h
    z = JumpTrajectory(y.start, steps, y.end_reason, y.last_vertex_before_root)
    return z, S


def vrjp_killing_threshold_statistics(g, start, theta=None, stop: VrjpStop | None = None, seed=0):
    """Final local times (and the last vertex before the root, if killed)."""
    tr = simulate_vrjp(g, start, theta, stop, seed)
    return tr.L, tr.last_vertex_before_root
