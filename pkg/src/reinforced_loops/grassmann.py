"""Exterior algebra over generators xi_1, eta_1, ..., xi_n, eta_n with real coefficients.

Generator k is bit k of a monomial mask: xi_i is bit 2i, eta_i is bit 2i+1
(0-based i). Monomials are stored in increasing generator order. Coefficients
may be numpy arrays, in which case one element holds a whole batch of
quadrature nodes or Monte Carlo draws.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import SingularBodyError


def _popcount(m: int) -> int:
    return bin(m).count("1")


@lru_cache(maxsize=None)
def _mul_sign(m1: int, m2: int) -> int:
    """Sign from sorting the concatenation m1 m2 into increasing order."""
    inv = 0
    a = m1
    while a:
        low = a & -a
        k = low.bit_length() - 1
        inv += _popcount(m2 & ((1 << k) - 1))
        a ^= low
    return -1 if inv & 1 else 1


def _is_zero(c) -> bool:
    if isinstance(c, np.ndarray):
        return False
    return c == 0


class GrassmannElement:
    __slots__ = ("n", "c")

    def __init__(self, n: int, coeffs: dict | None = None):
        self.n = n
        self.c = {} if coeffs is None else coeffs

    # ------------------------------------------------------------ builders
    @classmethod
    def scalar(cls, n: int, value) -> "GrassmannElement":
        return cls(n, {0: value})

    @classmethod
    def generator(cls, n: int, k: int) -> "GrassmannElement":
        if not 0 <= k < 2 * n:
            raise IndexError(f"generator {k} out of range for {2 * n} generators")
        return cls(n, {1 << k: 1.0})

    # ------------------------------------------------------------ queries
    def body(self):
        return self.c.get(0, 0.0)

    def nilpotent(self) -> "GrassmannElement":
        return GrassmannElement(self.n, {m: v for m, v in self.c.items() if m})

    def is_even(self) -> bool:
        return all(_popcount(m) % 2 == 0 for m, v in self.c.items() if not _is_zero(v))

    def coefficient(self, mask: int):
        return self.c.get(mask, 0.0)

    def degree(self) -> int:
        return max((_popcount(m) for m, v in self.c.items() if not _is_zero(v)), default=0)

    # ------------------------------------------------------------ arithmetic
    def _coerce(self, other) -> "GrassmannElement":
        if isinstance(other, GrassmannElement):
            if other.n != self.n:
                raise ValueError("Grassmann elements over different generator sets")
            return other
        return GrassmannElement(self.n, {0: other})

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.c)
        for m, v in other.c.items():
            out[m] = out[m] + v if m in out else v
        return GrassmannElement(self.n, out)

    __radd__ = __add__

    def __neg__(self):
        return GrassmannElement(self.n, {m: -v for m, v in self.c.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, GrassmannElement):
            return GrassmannElement(self.n, {m: v * other for m, v in self.c.items()})
        other = self._coerce(other)
        out: dict = {}
        for m1, v1 in self.c.items():
            for m2, v2 in other.c.items():
                if m1 & m2:
                    continue
                t = v1 * v2
                if _mul_sign(m1, m2) < 0:
                    t = -t
                m = m1 | m2
                out[m] = out[m] + t if m in out else t
        return GrassmannElement(self.n, out)

    def __rmul__(self, other):
        # scalars commute with everything
        return GrassmannElement(self.n, {m: other * v for m, v in self.c.items()})

    def __truediv__(self, other):
        if isinstance(other, GrassmannElement):
            return self * ginv(other)
        return GrassmannElement(self.n, {m: v / other for m, v in self.c.items()})

    def __rtruediv__(self, other):
        return ginv(self) * other

    def __pow__(self, k: int):
        if k < 0:
            return ginv(self) ** (-k)
        out = GrassmannElement.scalar(self.n, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def allclose(self, other, atol: float = 1e-12) -> bool:
        other = self._coerce(other)
        keys = set(self.c) | set(other.c)
        return all(np.allclose(self.c.get(m, 0.0), other.c.get(m, 0.0), atol=atol, rtol=0) for m in keys)

    def __repr__(self):
        terms = []
        for m in sorted(self.c):
            gens = "".join(
                (f"xi{k // 2 + 1}" if k % 2 == 0 else f"eta{k // 2 + 1}") for k in range(2 * self.n) if m >> k & 1
            )
            terms.append(f"{self.c[m]!r}{'*' + gens if gens else ''}")
        return "G(" + " + ".join(terms or ["0"]) + ")"


G = GrassmannElement


def xi(n: int, i: int) -> GrassmannElement:
    return GrassmannElement.generator(n, 2 * i)


def eta(n: int, i: int) -> GrassmannElement:
    return GrassmannElement.generator(n, 2 * i + 1)


def gmul(a: GrassmannElement, b) -> GrassmannElement:
    return a * b


# ---------------------------------------------------------------- functions of even elements

def gfunc(e: GrassmannElement, derivs: Callable[[object, int], Sequence]) -> GrassmannElement:
    """f(b + N) = sum_k f^(k)(b) N^k / k!, which terminates since N is nilpotent.

    ``derivs(b, kmax)`` returns [f(b), f'(b), ..., f^(kmax)(b)].
    """
    if not e.is_even():
        raise ValueError("functions are only defined on even elements")
    b = e.body()
    N = e.nilpotent()
    kmax = e.n  # N has degree >= 2, so N^(n+1) = 0
    powers = [GrassmannElement.scalar(e.n, 1.0)]
    while len(powers) <= kmax:
        nxt = powers[-1] * N
        if not any(not _is_zero(v) for v in nxt.c.values()):
            break
        powers.append(nxt)
    d = derivs(b, len(powers) - 1)
    out = GrassmannElement(e.n, {})
    for k, Pk in enumerate(powers):
        out = out + Pk * (d[k] / math.factorial(k))
    return out


def _check_body(b):
    bad = np.any(np.asarray(b) == 0)
    if bad:
        raise SingularBodyError("function requested at a zero body")


def gexp(e: GrassmannElement) -> GrassmannElement:
    return gfunc(e, lambda b, k: [np.exp(b)] * (k + 1))


def gsqrt(e: GrassmannElement) -> GrassmannElement:
    b = e.body()
    _check_body(b)
    if np.any(np.asarray(b) < 0):
        raise SingularBodyError("square root of an element with negative body")

    def d(b, k):
        out = []
        coef = 1.0
        for j in range(k + 1):
            out.append(coef * np.power(b, 0.5 - j))
            coef *= 0.5 - j
        return out

    return gfunc(e, d)


def ginv(e: GrassmannElement) -> GrassmannElement:
    b = e.body()
    _check_body(b)

    def d(b, k):
        return [((-1) ** j) * math.factorial(j) * np.power(b, -(j + 1.0)) for j in range(k + 1)]

    return gfunc(e, d)


def gpow(e: GrassmannElement, p: float) -> GrassmannElement:
    b = e.body()
    _check_body(b)

    def d(b, k):
        out = []
        coef = 1.0
        for j in range(k + 1):
            out.append(coef * np.power(b, p - j))
            coef *= p - j
        return out

    return gfunc(e, d)


# ---------------------------------------------------------------- integration

def left_derivative(e: GrassmannElement, k: int) -> GrassmannElement:
    bit = 1 << k
    low = bit - 1
    out = {}
    for m, v in e.c.items():
        if m & bit:
            out[m ^ bit] = -v if _popcount(m & low) & 1 else v
    return GrassmannElement(e.n, out)


def default_order(n: int) -> list[int]:
    """Differentials d xi_1 d eta_1 ... d xi_n d eta_n as generator indices."""
    return list(range(2 * n))


def berezin(e: GrassmannElement, order: Iterable[int] | None = None):
    """Integral with differentials written left to right as ``order``.

    Each differential acts as a left derivative, the rightmost one first.
    """
    order = default_order(e.n) if order is None else list(order)
    for k in reversed(order):
        e = left_derivative(e, k)
    return e.body()


def fermion_quadratic(A, n: int | None = None, free: Sequence[int] | None = None) -> GrassmannElement:
    """xi A eta = sum_ij A_ij xi_i eta_j (coefficients may be batched arrays)."""
    A = np.asarray(A)
    k = A.shape[-1]
    n = k if n is None else n
    free = list(range(k)) if free is None else list(free)
    out = {}
    for a, i in enumerate(free):
        for b, j in enumerate(free):
            v = A[..., a, b]
            if not isinstance(v, np.ndarray) or v.ndim == 0:
                v = float(v)
                if v == 0:
                    continue
            t = xi(n, i) * eta(n, j)
            for m, s in t.c.items():
                out[m] = out[m] + s * v if m in out else s * v
    return GrassmannElement(n, out)
