"""Based loops, occupation fields, regrouping of erased loops and PD(0,1) splitting."""
from __future__ import annotations

import json
from typing import Iterable, Sequence

import numpy as np

from .errors import ConsistencyError, ReinforcedLoopsError
from .rng import Stream


class Loop:
    """A based loop given by its visits ``steps = [(vertex, holding), ...]``.

    ``steps[0]`` is the base visit. If the last visited vertex is not the base
    the loop closes with an implicit jump back to the base; if it is the base,
    that final entry is the last stay at the base. Both forms describe the same
    kind of object and only differ in where base holding time is booked.
    """

    __slots__ = ("base", "steps")

    def __init__(self, base, steps: Sequence[tuple], validate: bool = True):
        self.base = base
        self.steps = tuple((v, float(h)) for v, h in steps)
        if validate:
            self._validate()

    @classmethod
    def _make(cls, base, steps):
        obj = cls.__new__(cls)
        obj.base = base
        obj.steps = steps
        return obj

    def _validate(self):
        if not self.steps:
            raise ReinforcedLoopsError("a loop needs at least one visit")
        if self.steps[0][0] != self.base:
            raise ReinforcedLoopsError("first visit of a loop must be its base")
        for (a, _), (b, _) in zip(self.steps, self.steps[1:]):
            if a == b:
                raise ReinforcedLoopsError("consecutive visits of a loop must differ")
        for _, h in self.steps:
            if not h > 0:
                raise ReinforcedLoopsError("holding times must be positive")

    @property
    def duration(self) -> float:
        return sum(h for _, h in self.steps)

    @property
    def jumps(self) -> int:
        n = len(self.steps) - 1
        return n + (1 if self.steps[-1][0] != self.base else 0)

    @property
    def is_trivial(self) -> bool:
        return self.jumps == 0

    @property
    def vertices(self) -> list:
        vs = [v for v, _ in self.steps]
        if vs[-1] != self.base or len(vs) == 1:
            vs.append(self.base)
        return vs

    def occupation(self) -> dict:
        out: dict = {}
        for v, h in self.steps:
            out[v] = out.get(v, 0.0) + h
        return out

    def relabel(self, names: Sequence) -> "Loop":
        return Loop._make(names[self.base], tuple((names[v], h) for v, h in self.steps))

    def to_dict(self) -> dict:
        return {
            "base": self.base,
            "steps": [[v, h] for v, h in self.steps],
            "duration": self.duration,
        }

    def __eq__(self, other):
        return isinstance(other, Loop) and self.base == other.base and self.steps == other.steps

    def __hash__(self):
        return hash((self.base, self.steps))

    def __repr__(self):
        return f"Loop(base={self.base!r}, steps={list(self.steps)!r})"


class LoopCollection(list):
    """Multiset of loops; a plain list with a few helpers."""

    def occupation(self, vertices: Iterable | None = None) -> dict:
        return occupation_field(self, vertices)

    def nontrivial(self) -> "LoopCollection":
        return LoopCollection(l for l in self if not l.is_trivial)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(l.to_dict()) + "\n" for l in self)


def occupation_field(c: Iterable[Loop], vertices: Iterable | None = None) -> dict:
    """Vertexwise total holding time of a loop collection."""
    out = {v: 0.0 for v in vertices} if vertices is not None else {}
    for l in c:
        for v, h in l.steps:
            out[v] = out.get(v, 0.0) + h
    return out


def occupation_array(c: Iterable[Loop], n: int) -> np.ndarray:
    """Occupation field for loops whose vertices are integer indices < n."""
    out = np.zeros(n)
    for l in c:
        for v, h in l.steps:
            out[v] += h
    return out


def regroup_loops(segments: Sequence[Sequence[tuple]]) -> list[Loop]:
    """Cut visible exploration segments into one large loop per discovered vertex.

    Each segment is the chronological list of (vertex, holding) visits made
    between entering the unexplored region and hitting the current tree.
    The k-th large loop runs from the first to the last visible visit of the
    k-th discovered vertex, so the pieces tile every segment.
    """
    large = []
    for seg in segments:
        seg = list(seg)
        last_at: dict = {}
        for k, (v, _) in enumerate(seg):
            last_at[v] = k
        pos = 0
        while pos < len(seg):
            v = seg[pos][0]
            end = last_at[v]
            if end < pos:
                raise ConsistencyError("regrouping visited a vertex after its last visit")
            large.append(Loop._make(v, tuple(seg[pos:end + 1])))
            pos = end + 1
    return large


def excursion_starts(l: Loop) -> list[int]:
    """Indices of the visits to the base."""
    return [k for k, (v, _) in enumerate(l.steps) if v == l.base]


def feller_blocks(e: int, rs: Stream) -> list[int]:
    """Block sizes of a uniform random permutation of e items (Feller coupling).

    Item i (1-based) closes a cycle with probability 1/i; cycles are read as
    consecutive runs, so sizes follow the PD(0,1) cycle-structure law.
    """
    sizes = []
    run = 0
    for i in range(e, 0, -1):
        run += 1
        if rs.uniform() * i < 1.0:
            sizes.append(run)
            run = 0
    return sizes


def pd_decompose(l: Loop, seed) -> list[Loop]:
    """Split a loop into blocks of consecutive excursions with PD(0,1) block sizes."""
    rs = seed if isinstance(seed, Stream) else Stream(seed)
    starts = excursion_starts(l)
    closed = l.steps[-1][0] == l.base and len(l.steps) > 1
    e = len(starts) - 1 if closed else len(starts)
    if e <= 1:
        return [l]
    sizes = feller_blocks(e, rs)
    out = []
    j = 0
    for k, s in enumerate(sizes):
        a = starts[j]
        j += s
        if k == len(sizes) - 1:
            piece = l.steps[a:]
        else:
            piece = l.steps[a:starts[j]]
        out.append(Loop._make(l.base, tuple(piece)))
    return out


def thin(c: Iterable[Loop], keep_prob: float, seed) -> LoopCollection:
    """Keep each loop independently with probability keep_prob."""
    if not 0.0 < keep_prob < 1.0:
        raise ValueError("keep_prob must lie in (0, 1)")
    rs = seed if isinstance(seed, Stream) else Stream(seed)
    return LoopCollection(l for l in c if rs.uniform() < keep_prob)
