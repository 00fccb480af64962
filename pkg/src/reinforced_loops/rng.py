"""Seed derivation and a buffered random stream for scalar-heavy simulation loops."""
from __future__ import annotations

import hashlib
import os

import numpy as np

_BUF = 4096


def derive_seed(master_seed: int, replica_index: int, stream_label: str = "") -> int:
    """Deterministic 63-bit seed from (master seed, replica index, label)."""
    msg = f"{int(master_seed)}|{int(replica_index)}|{stream_label}".encode()
    digest = hashlib.blake2b(msg, digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


class Stream:
    """Uniform and exponential draws served from pre-filled Python lists.

    Python floats from a list are much cheaper than one numpy call per draw,
    which matters in jump-by-jump simulation loops.
    """

    def __init__(self, seed):
        self.gen = seed if isinstance(seed, np.random.Generator) else make_generator(seed)
        self._u: list = []
        self._e: list = []

    def uniform(self) -> float:
        if not self._u:
            self._u = self.gen.random(_BUF).tolist()
        return self._u.pop()

    def expo(self) -> float:
        """Standard exponential variable (rate 1)."""
        if not self._e:
            self._e = self.gen.standard_exponential(_BUF).tolist()
        return self._e.pop()

    def exponential(self, rate: float) -> float:
        return self.expo() / rate

    def choice(self, weights, total=None) -> int:
        """Index drawn proportionally to nonnegative weights."""
        if total is None:
            total = sum(weights)
        r = self.uniform() * total
        acc = 0.0
        last = 0
        for k, w in enumerate(weights):
            if w > 0:
                acc += w
                last = k
                if r < acc:
                    return k
        return last


def stream(seed: int, label: str = "", index: int = 0) -> Stream:
    return Stream(derive_seed(seed, index, label))


def worker_count() -> int:
    env = os.environ.get("REINFORCED_LOOPS_THREADS")
    cpus = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpus))
        except ValueError:
            pass
    return cpus
