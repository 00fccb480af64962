"""Supersymmetric free field and H^{2|2} expectations on tiny graphs.

Fermions are handled exactly by the Grassmann engine at every bosonic node;
the bosonic variables are integrated by tensor quadrature or Monte Carlo.
"""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .environment import MixingMeasure, au_matrix, quadrature_expectation
from .errors import BudgetError, ConditioningError, GraphError
from .grassmann import GrassmannElement, berezin, eta, fermion_quadratic, gexp, ginv, gsqrt, xi
from .graph import AugmentedGraph, Graph, as_full_graph, log_matrix_tree_values

LOG_2PI = math.log(2 * math.pi)


# ---------------------------------------------------------------- points and boosts

class SuperPoint:
    """Spin at one vertex: bosons (x, y) and, for free vertices, the pair xi, eta.

    ``z`` is the positive-branch solution of the hyperbolic constraint.
    """

    __slots__ = ("x", "y", "n", "index", "xi", "eta")

    def __init__(self, x, y, n: int = 0, index: int | None = None):
        self.x = x
        self.y = y
        self.n = n
        self.index = index
        if index is None:
            self.xi = self.eta = None
        else:
            self.xi = xi(n, index)
            self.eta = eta(n, index)

    def pair(self) -> GrassmannElement:
        if self.index is None:
            return GrassmannElement(self.n, {})
        return self.xi * self.eta

    def r(self):
        return np.sqrt(1.0 + self.x ** 2 + self.y ** 2)

    def z(self) -> GrassmannElement:
        r = self.r()
        return self.pair() * (1.0 / r) + r

    def z2(self) -> GrassmannElement:
        return self.pair() * 2.0 + (1.0 + self.x ** 2 + self.y ** 2)


def lorentz_boost(p, s: float):
    """theta_s(x, y, z, xi, eta) = (x cosh s + z sinh s, y, z cosh s + x sinh s, xi, eta)."""
    if isinstance(p, SuperPoint):
        x, y, z = p.x, p.y, p.z()
        fx, fe = p.xi, p.eta
    else:
        x, y, z, fx, fe = p
    c, sh = math.cosh(s), math.sinh(s)
    return (z * sh + x * c, y, x * sh + z * c, fx, fe)


def boosted_origin(s: float) -> tuple:
    """theta_s applied to the hyperboloid origin: (sinh s, 0, cosh s, 0, 0)."""
    return lorentz_boost((0.0, 0.0, 1.0, 0.0, 0.0), s)


def h22_pin(s: float = 0.0) -> tuple:
    x, y, z, _, _ = boosted_origin(s)
    return (x, y, z)


def free_field_pin(s: float = 0.0) -> tuple:
    """Flat-space pin (sinh s, 0) with vanishing fermions."""
    return (math.sinh(s), 0.0)


# ---------------------------------------------------------------- evaluation context

class FieldContext:
    """Batch of bosonic configurations with symbolic fermions on free vertices."""

    def __init__(self, vertices: Sequence[str], free: Sequence[int], x: np.ndarray, y: np.ndarray,
                 W: np.ndarray | None = None):
        self.vertices = tuple(vertices)
        self.N = len(self.vertices)
        self.free = list(free)
        self.k = len(self.free)
        self.x = x
        self.y = y
        self.W = W
        slot = {v: a for a, v in enumerate(self.free)}
        self.points = [
            SuperPoint(x[:, i], y[:, i], self.k, slot.get(i)) for i in range(self.N)
        ]
        self._z: dict = {}

    def index(self, v) -> int:
        if isinstance(v, (int, np.integer)):
            return int(v)
        return self.vertices.index(v)

    def vec(self, lam) -> np.ndarray:
        if isinstance(lam, Mapping):
            out = np.zeros(self.N)
            for v, val in lam.items():
                out[self.index(v)] = val
            return out
        lam = np.asarray(lam, dtype=float)
        if lam.ndim == 0:
            return np.full(self.N, float(lam))
        if lam.shape != (self.N,):
            raise ValueError(f"expected {self.N} vertex weights")
        return lam

    def one(self) -> GrassmannElement:
        return GrassmannElement.scalar(self.k, 1.0)

    def z(self, i: int) -> GrassmannElement:
        if i not in self._z:
            self._z[i] = self.points[i].z()
        return self._z[i]

    def z2(self, i: int) -> GrassmannElement:
        return self.points[i].z2()

    def inner(self, i: int, j: int) -> GrassmannElement:
        """Flat inner product x_i x_j + y_i y_j + xi_i eta_j + xi_j eta_i."""
        p, q = self.points[i], self.points[j]
        out = GrassmannElement.scalar(self.k, p.x * q.x + p.y * q.y)
        if p.index is not None and q.index is not None:
            out = out + p.xi * q.eta + q.xi * p.eta
        return out


# ---------------------------------------------------------------- observables

class Observable:
    def __call__(self, ctx: FieldContext) -> GrassmannElement:
        raise NotImplementedError

    def quadratic(self, ctx_n: int, index) -> np.ndarray:
        """Weights c_i of any factor exp(-sum c_i (x_i^2 + y_i^2)) in the body.

        The free-field quadrature folds these into its Gaussian envelope.
        """
        return np.zeros(ctx_n)

    def invariant(self) -> "Observable | None":
        """An observable with the same expectation under rotation-invariant
        pinning and invariant under rotations of (x, y), if one is known."""
        return None

    def __mul__(self, other: "Observable") -> "Observable":
        return Product(self, other)


class One(Observable):
    def __call__(self, ctx):
        return ctx.one()

    def invariant(self):
        return self


def _lam_vector(lam, n: int, index) -> np.ndarray:
    if isinstance(lam, Mapping):
        out = np.zeros(n)
        for v, val in lam.items():
            out[index(v)] = val
        return out
    lam = np.asarray(lam, dtype=float)
    return np.full(n, float(lam)) if lam.ndim == 0 else lam


class ExpLinearXY(Observable):
    def __init__(self, lam):
        self.lam = lam

    def quadratic(self, n, index):
        return _lam_vector(self.lam, n, index)

    def __call__(self, ctx):
        lam = ctx.vec(self.lam)
        if np.any(lam < 0):
            raise ValueError("lambda must be nonnegative")
        e = sum(lam[i] * (ctx.x[:, i] ** 2 + ctx.y[:, i] ** 2) for i in range(ctx.N) if lam[i])
        return GrassmannElement.scalar(ctx.k, np.exp(-e) if not isinstance(e, int) else np.ones(len(ctx.x)))

    def invariant(self):
        return self


class ExpLinearZ(Observable):
    """exp(-sum lam_i z_i), or exp(-sum lam_i z_i^2) when ``squared``."""

    def __init__(self, lam, squared: bool = False):
        self.lam = lam
        self.squared = squared

    def quadratic(self, n, index):
        return _lam_vector(self.lam, n, index) if self.squared else np.zeros(n)

    def __call__(self, ctx):
        lam = ctx.vec(self.lam)
        if np.any(lam < 0):
            raise ValueError("lambda must be nonnegative")
        e = GrassmannElement.scalar(ctx.k, 0.0)
        for i in range(ctx.N):
            if lam[i]:
                e = e + (ctx.z2(i) if self.squared else ctx.z(i)) * lam[i]
        return gexp(-e)

    def invariant(self):
        return self


class Insertion(Observable):
    """x_a x_b, or its rotation average (x_a x_b + y_a y_b)/2 when ``symmetric``."""

    def __init__(self, a, b, symmetric: bool = False):
        self.a, self.b, self.symmetric = a, b, symmetric

    def __call__(self, ctx):
        a, b = ctx.index(self.a), ctx.index(self.b)
        v = ctx.x[:, a] * ctx.x[:, b]
        if self.symmetric:
            v = 0.5 * (v + ctx.y[:, a] * ctx.y[:, b])
        return GrassmannElement.scalar(ctx.k, v)

    def invariant(self):
        return Insertion(self.a, self.b, symmetric=True)


class BoostedZ(Observable):
    """exp(-sum lam_i (z_i cosh s + x_i sinh s))."""

    def __init__(self, lam, s: float):
        self.lam, self.s = lam, s

    def __call__(self, ctx):
        lam = ctx.vec(self.lam)
        c, sh = math.cosh(self.s), math.sinh(self.s)
        e = GrassmannElement.scalar(ctx.k, 0.0)
        for i in range(ctx.N):
            if lam[i]:
                e = e + (ctx.z(i) * c + ctx.x[:, i] * sh) * lam[i]
        return gexp(-e)

    def invariant(self):
        return ExpLinearZ(self.lam) if self.s == 0 else None


class RatioXaXd(Observable):
    """x_a / x_d with x_d a pinned value bounded away from zero."""

    MIN_PIN = math.sinh(0.1)

    def __init__(self, a, d):
        self.a, self.d = a, d

    def __call__(self, ctx):
        a, d = ctx.index(self.a), ctx.index(self.d)
        if d in ctx.free:
            raise ValueError("the denominator vertex must be pinned")
        xd = ctx.x[:, d]
        if np.any(np.abs(xd) <= self.MIN_PIN):
            raise ValueError("pinned denominator too close to zero")
        return GrassmannElement.scalar(ctx.k, ctx.x[:, a] / xd)


class ZRatio(Observable):
    """z_a / z_d."""

    def __init__(self, a, d):
        self.a, self.d = a, d

    def __call__(self, ctx):
        return ctx.z(ctx.index(self.a)) * ginv(ctx.z(ctx.index(self.d)))

    def invariant(self):
        return self


class NuWeight(Observable):
    """Density of the mixing measure with initial local times z, pinned at i0.

    With ``u`` given (full vector, u[i0] = 0) this is the pointwise density.
    With ``u=None`` the density is integrated over the single free coordinate
    by Gauss-Legendre, centred per node at the body's peak.
    """

    def __init__(self, i0, u=None, n_nodes: int = 96, half_width: float = 12.0):
        self.i0 = i0
        self.u = None if u is None else np.asarray(u, dtype=float)
        self.n_nodes = n_nodes
        self.half_width = half_width

    def density(self, ctx, i0: int, u: np.ndarray) -> GrassmannElement:
        W = ctx.W
        N = ctx.N
        expo = GrassmannElement.scalar(ctx.k, 0.0)
        for i in range(N):
            for j in range(i + 1, N):
                if W[i, j] > 0:
                    d = u[..., i] - u[..., j]
                    t = ctx.z2(j) * np.exp(d) + ctx.z2(i) * np.exp(-d) - ctx.z(i) * ctx.z(j) * 2.0
                    expo = expo + t * W[i, j]
        logD = log_matrix_tree_values(W, np.asarray(u)[..., :])
        out = gexp(expo * -0.5) * np.exp(0.5 * logD)
        for i in range(N):
            if i != i0:
                out = out * ctx.z(i) * (np.exp(-u[..., i]) / math.sqrt(2 * math.pi))
        return out

    def __call__(self, ctx):
        if ctx.W is None:
            raise ValueError("NuWeight needs the edge weights in the context")
        i0 = ctx.index(self.i0)
        if self.u is not None:
            return self.density(ctx, i0, np.broadcast_to(self.u, (len(ctx.x), ctx.N)))
        others = [i for i in range(ctx.N) if i != i0]
        if len(others) != 1:
            raise ValueError("integrated NuWeight supports one free coordinate")
        f = others[0]
        rf = ctx.points[f].r()
        r0 = ctx.points[i0].r()
        wf = ctx.W[f].sum()
        centre = np.log(rf) - np.log(r0)
        scale = np.minimum(1.0, 1.0 / np.sqrt(wf * rf * r0))
        v, w = np.polynomial.legendre.leggauss(self.n_nodes)
        m = len(ctx.x)
        total = GrassmannElement.scalar(ctx.k, np.zeros(m))
        for vk, wk in zip(v * self.half_width, w * self.half_width):
            u = np.zeros((m, ctx.N))
            u[:, f] = centre + scale * vk
            total = total + self.density(ctx, i0, u) * (wk * scale)
        return total

    def invariant(self):
        return self


class Product(Observable):
    def __init__(self, *factors: Observable):
        self.factors = factors

    def quadratic(self, n, index):
        return sum((f.quadratic(n, index) for f in self.factors), np.zeros(n))

    def __call__(self, ctx):
        out = ctx.one()
        for f in self.factors:
            out = out * f(ctx)
        return out

    def invariant(self):
        inv = [f.invariant() for f in self.factors]
        return None if any(f is None for f in inv) else Product(*inv)


# ---------------------------------------------------------------- free field

def _pin_arrays(N: int, pinning: Mapping[int, tuple]):
    cx = np.zeros(N)
    cy = np.zeros(N)
    for i, p in pinning.items():
        cx[i] = p[0]
        cy[i] = p[1] if len(p) > 1 else 0.0
    return cx, cy


def _resolve_pins(vertices, pinning) -> dict:
    out = {}
    for v, p in (pinning or {}).items():
        i = v if isinstance(v, (int, np.integer)) else list(vertices).index(v)
        out[int(i)] = tuple(p)
    return out


def _hermite_nodes(n: int, dim: int):
    z, w = np.polynomial.hermite_e.hermegauss(n)
    w = w / w.sum()
    mesh = np.meshgrid(*([z] * dim), indexing="ij")
    Z = np.stack([m.ravel() for m in mesh], axis=-1)
    wm = np.meshgrid(*([w] * dim), indexing="ij")
    Wt = np.prod(np.stack([m.ravel() for m in wm], axis=-1), axis=-1)
    return Z, Wt


class FreeField:
    """Pinned supersymmetric free field with symmetric precision ``M``.

    ``scale`` (optional, per vertex) realizes the twisted convention: the
    observable sees scale * X while the Gaussian weight uses M. Bosonic
    nodes are drawn in an envelope Gaussian with precision M + 2 diag(lam)
    on the free block and reweighted by the density ratio, so that
    observables carrying exp(-lam (x^2 + y^2)) stay well resolved.
    """

    def __init__(self, M, pinning: Mapping, vertices: Sequence[str] | None = None, scale=None,
                 envelope=None):
        M = np.asarray(M, dtype=float)
        if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise ValueError("precision matrix must be symmetric")
        self.M = M
        self.N = M.shape[0]
        self.vertices = tuple(vertices) if vertices is not None else tuple(str(i) for i in range(self.N))
        self.pins = _resolve_pins(self.vertices, pinning)
        self.free = F = [i for i in range(self.N) if i not in self.pins]
        self.k = len(F)
        self.scale = np.ones(self.N) if scale is None else np.asarray(scale, dtype=float)
        P = sorted(self.pins)
        Mff = M[np.ix_(F, F)]
        lam = np.zeros(self.N) if envelope is None else np.asarray(envelope, dtype=float)
        Eff = Mff + 2 * np.diag(lam[F] * self.scale[F] ** 2)
        try:
            np.linalg.cholesky(Mff)
            self.chol_cov = np.linalg.cholesky(np.linalg.inv(Eff))
        except np.linalg.LinAlgError:
            raise ConditioningError("precision is not positive definite on the free vertices") from None
        self.Mff, self.Eff = Mff, Eff
        self.det = float(np.linalg.det(Mff))
        self._log_ratio_const = 0.5 * (np.linalg.slogdet(Mff)[1] - np.linalg.slogdet(Eff)[1])
        cx, cy = _pin_arrays(self.N, self.pins)
        self.cx, self.cy = cx, cy
        self.mean_x = np.zeros(self.k)
        self.mean_y = np.zeros(self.k)
        self.env_x = np.zeros(self.k)
        self.env_y = np.zeros(self.k)
        self.pin_factor = 1.0
        if P:
            Mfp = M[np.ix_(F, P)]
            S = M[np.ix_(P, P)] - Mfp.T @ np.linalg.solve(Mff, Mfp)
            self.mean_x = -np.linalg.solve(Mff, Mfp @ cx[P])
            self.mean_y = -np.linalg.solve(Mff, Mfp @ cy[P])
            self.env_x = -np.linalg.solve(Eff, Mfp @ cx[P])
            self.env_y = -np.linalg.solve(Eff, Mfp @ cy[P])
            self.pin_factor = math.exp(-0.5 * (cx[P] @ S @ cx[P] + cy[P] @ S @ cy[P]))
        self._fermion = gexp(-fermion_quadratic(Mff, self.k))

    def _log_ratio(self, v: np.ndarray, mean: np.ndarray, env: np.ndarray) -> np.ndarray:
        d, e = v - mean, v - env
        return (self._log_ratio_const - 0.5 * np.einsum("mi,ij,mj->m", d, self.Mff, d)
                + 0.5 * np.einsum("mi,ij,mj->m", e, self.Eff, e))

    def values(self, obs: Observable, zx: np.ndarray, zy: np.ndarray, W: np.ndarray | None = None) -> np.ndarray:
        """Berezin-integrated, reweighted observable at whitened envelope nodes (m, k) each."""
        m = len(zx)
        x = np.tile(self.cx, (m, 1))
        y = np.tile(self.cy, (m, 1))
        xf = self.env_x + zx @ self.chol_cov.T
        yf = self.env_y + zy @ self.chol_cov.T
        x[:, self.free] = xf
        y[:, self.free] = yf
        ctx = FieldContext(self.vertices, self.free, x * self.scale, y * self.scale, W)
        if np.any(self.scale != 1.0):
            # xi eta scale like x^2 under X -> e^u X
            for i in self.free:
                p = ctx.points[i]
                p.xi = p.xi * self.scale[i] ** 2
        val = np.broadcast_to(np.asarray(berezin(obs(ctx) * self._fermion), dtype=float), (m,))
        w = np.exp(self._log_ratio(xf, self.mean_x, self.env_x) + self._log_ratio(yf, self.mean_y, self.env_y))
        return val * w * (self.pin_factor / self.det)


MAX_HERMITE = 120


def susy_free_expectation(matrix, obs: Observable, pinning: Mapping | None = None, vertices=None,
                          integrator: str = "quadrature", tol: float = 1e-8, n_start: int = 8,
                          max_nodes: int = 2**21, n_mc: int = 20000, seed=0, u=None, chunk: int = 2**15,
                          W: np.ndarray | None = None):
    """Supersymmetric free field expectation with precision ``matrix``.

    ``matrix`` may be A^u itself (symmetric). Passing ``u`` instead treats
    ``matrix`` as A^u and evaluates through B^u = e^u A^u e^u with the
    observable applied to e^u X, pins being stated for X.
    Returns (value, error_bound); the MC integrator returns a standard error.
    """
    M = np.asarray(matrix, dtype=float)
    names = tuple(vertices) if vertices is not None else tuple(str(i) for i in range(M.shape[0]))
    pins = _resolve_pins(names, pinning)
    scale = None
    if u is not None:
        e = np.exp(np.asarray(u, dtype=float))
        M = e[:, None] * M * e[None, :]
        M = 0.5 * (M + M.T)
        pins = {i: tuple(np.asarray(p[:2], dtype=float) / e[i]) for i, p in pins.items()}
        scale = e
    env = obs.quadratic(len(names), lambda v: v if isinstance(v, (int, np.integer)) else names.index(v))
    ff = FreeField(M, pins, names, scale, envelope=env)
    k = ff.k
    if k == 0:
        v = float(ff.values(obs, np.zeros((1, 0)), np.zeros((1, 0)), W)[0])
        return v, 0.0
    if integrator in ("mc", "importance-MC"):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(int(seed)))
        Z = rng.standard_normal((n_mc, 2 * k))
        vals = np.concatenate([
            ff.values(obs, Z[s:s + chunk, :k], Z[s:s + chunk, k:], W) for s in range(0, n_mc, chunk)
        ])
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_mc))
    if integrator not in ("quadrature", "tensor-quadrature"):
        raise ValueError(f"unknown integrator {integrator!r}")
    prev = None
    err = math.inf
    n = n_start
    while True:
        if n ** (2 * k) > max_nodes or n > MAX_HERMITE:
            raise BudgetError(f"free-field quadrature did not reach tol={tol:g}", achieved=err)
        Z, wt = _hermite_nodes(n, 2 * k)
        total = 0.0
        for s in range(0, len(wt), chunk):
            total += float(wt[s:s + chunk] @ ff.values(obs, Z[s:s + chunk, :k], Z[s:s + chunk, k:], W))
        if prev is not None:
            err = abs(total - prev)
            if err < tol:
                return total, err
        prev = total
        n = int(math.ceil(n * 1.5))


# ---------------------------------------------------------------- H^{2|2}

class H22Model:
    """Pinned H^{2|2} model on a full graph with at most two free vertices."""

    def __init__(self, g: Graph | AugmentedGraph, pinning: Mapping | None = None):
        full, root = as_full_graph(g)
        self.graph = full
        self.W = full.W
        self.N = full.n
        self.vertices = full.vertices
        if pinning is None:
            if root is None:
                raise GraphError("an unrooted graph needs an explicit pinning")
            pinning = {root: h22_pin(0.0)}
        self.pins = {}
        for i, p in _resolve_pins(self.vertices, pinning).items():
            x, y = float(p[0]), float(p[1])
            z = float(p[2]) if len(p) > 2 else math.sqrt(1 + x * x + y * y)
            if abs(z * z - x * x - y * y - 1) > 1e-9 or z <= 0:
                raise ValueError("pinned spin must lie on the upper hyperboloid sheet")
            self.pins[i] = (x, y, z)
        self.free = [i for i in range(self.N) if i not in self.pins]
        self.k = len(self.free)
        self.cx, self.cy = _pin_arrays(self.N, self.pins)
        iu, ju = np.nonzero(np.triu(self.W) > 0)
        self.edges = list(zip(iu.tolist(), ju.tolist()))
        # scale of the free marginals from the flat Laplacian restricted to free vertices
        L = np.diag(self.W.sum(axis=1)) - self.W
        self.green = np.linalg.inv(L[np.ix_(self.free, self.free)]) if self.k else np.zeros((0, 0))
        self.boost = max([p[2] + math.hypot(p[0], p[1]) for p in self.pins.values()] + [1.0])

    def rotation_invariant_pins(self) -> bool:
        return all(p[0] == 0 and p[1] == 0 for p in self.pins.values())

    def integrand(self, obs: Observable, xf: np.ndarray, yf: np.ndarray) -> np.ndarray:
        """Berezin integral of the full integrand at bosonic nodes (m, k)."""
        m = len(xf)
        x = np.tile(self.cx, (m, 1))
        y = np.tile(self.cy, (m, 1))
        x[:, self.free] = xf
        y[:, self.free] = yf
        ctx = FieldContext(self.vertices, self.free, x, y, self.W)
        S = GrassmannElement.scalar(self.k, np.zeros(m))
        for i, j in self.edges:
            t = ctx.inner(i, j) - ctx.z(i) * ctx.z(j) + 1.0
            S = S + t * self.W[i, j]
        out = obs(ctx) * gexp(S)
        for i in self.free:
            out = out * ginv(ctx.z(i))
        val = berezin(out)
        return np.broadcast_to(np.asarray(val, dtype=float), (m,)) / (2 * math.pi) ** self.k

    def t_max(self) -> np.ndarray:
        return np.arccosh(1.0 + 40.0 * np.diag(self.green) * self.boost) + 1.0

    def grid(self, n_t: int, n_phi: int, invariant: bool, T=None):
        """Polar nodes x = sinh t cos phi, y = sinh t sin phi per free vertex."""
        T = self.t_max() if T is None else np.broadcast_to(np.asarray(T, dtype=float), (self.k,))
        gl_x, gl_w = np.polynomial.legendre.leggauss(n_t)
        axes = []
        for a in range(self.k):
            t = 0.5 * T[a] * (gl_x + 1.0)
            wt = 0.5 * T[a] * gl_w * np.sinh(t) * np.cosh(t)
            if invariant and a == 0:
                phi = np.zeros(1)
                wp = np.array([2 * math.pi])
            else:
                phi = 2 * math.pi * np.arange(n_phi) / n_phi
                wp = np.full(n_phi, 2 * math.pi / n_phi)
            tt, pp = np.meshgrid(t, phi, indexing="ij")
            ww = np.outer(wt, wp)
            axes.append((np.sinh(tt.ravel()) * np.cos(pp.ravel()), np.sinh(tt.ravel()) * np.sin(pp.ravel()),
                         ww.ravel()))
        return axes

    def quadrature(self, obs: Observable, n_t: int, n_phi: int, invariant: bool, T=None,
                   chunk: int = 2**15) -> float:
        axes = self.grid(n_t, n_phi, invariant, T)
        if self.k == 0:
            return float(self.integrand(obs, np.zeros((1, 0)), np.zeros((1, 0)))[0])
        sizes = [len(a[2]) for a in axes]
        total_n = int(np.prod(sizes))
        total = 0.0
        for s in range(0, total_n, chunk):
            idx = np.unravel_index(np.arange(s, min(s + chunk, total_n)), sizes)
            xf = np.stack([axes[a][0][idx[a]] for a in range(self.k)], axis=-1)
            yf = np.stack([axes[a][1][idx[a]] for a in range(self.k)], axis=-1)
            w = np.prod(np.stack([axes[a][2][idx[a]] for a in range(self.k)], axis=-1), axis=-1)
            total += float(w @ self.integrand(obs, xf, yf))
        return total

    def importance_mc(self, obs: Observable, n: int, rng: np.random.Generator, chunk: int = 2**14,
                      nu: float = 3.0):
        """Defensive mixture proposal: radial exponentials and a multivariate t."""
        k = self.k
        g = np.diag(self.green)
        rate = 0.5 / (g * self.boost)
        S = np.kron(np.eye(2), self.green)  # scale for (x_free, y_free)
        Sc = np.linalg.cholesky(S)
        Sinv = np.linalg.inv(S)
        logdetS = float(np.linalg.slogdet(S)[1])
        d = 2 * k
        lc_t = (math.lgamma((nu + d) / 2) - math.lgamma(nu / 2) - 0.5 * d * math.log(nu * math.pi)
                - 0.5 * logdetS)
        vals = []
        for s in range(0, n, chunk):
            m = min(chunk, n - s)
            comp = rng.random(m) < 0.5
            r = rng.exponential(1.0 / rate, size=(m, k))
            phi = rng.random((m, k)) * 2 * math.pi
            xe, ye = r * np.cos(phi), r * np.sin(phi)
            gz = rng.standard_normal((m, d)) @ Sc.T
            chi = rng.chisquare(nu, size=(m, 1))
            tz = gz / np.sqrt(chi / nu)
            xf = np.where(comp[:, None], xe, tz[:, :k])
            yf = np.where(comp[:, None], ye, tz[:, k:])
            rr = np.sqrt(xf ** 2 + yf ** 2)
            q_exp = np.prod(rate * np.exp(-rate * rr) / (2 * math.pi * np.maximum(rr, 1e-300)), axis=-1)
            v = np.concatenate([xf, yf], axis=-1)
            quad = np.einsum("ij,jk,ik->i", v, Sinv, v)
            q_t = np.exp(lc_t - 0.5 * (nu + d) * np.log1p(quad / nu))
            q = 0.5 * q_exp + 0.5 * q_t
            vals.append(self.integrand(obs, xf, yf) / q)
        vals = np.concatenate(vals)
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def h22_expectation(g: Graph | AugmentedGraph, obs: Observable, pinning: Mapping | None = None,
                    integrator: str = "quadrature", tol: float = 1e-7, n_t: int | None = None,
                    n_phi: int | None = None, max_nodes: int = 2**23, n_mc: int = 200000, seed=0, T=None):
    """H^{2|2} expectation with the root pinned at the origin unless ``pinning`` says otherwise.

    Quadrature refines the polar grid by factors of 1.5 until two successive
    values agree to ``tol``; the reported bound is that difference.
    """
    model = H22Model(g, pinning)
    if model.k > 2:
        raise BudgetError("the Grassmann engine path handles at most two free vertices")
    if integrator in ("mc", "importance-MC"):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(int(seed)))
        return model.importance_mc(obs, n_mc, rng)
    if integrator not in ("quadrature", "tensor-quadrature"):
        raise ValueError(f"unknown integrator {integrator!r}")
    invariant = False
    if model.rotation_invariant_pins() and model.k > 0:
        inv = obs.invariant()
        if inv is not None:
            obs, invariant = inv, True
    n_t = n_t or (32 if model.k == 1 else 24)
    n_phi = n_phi or (32 if model.k == 1 else 24)
    prev = None
    err = math.inf
    while True:
        nodes = (n_t * n_phi) ** model.k // (n_phi if invariant else 1)
        if nodes > max_nodes:
            raise BudgetError(f"H22 quadrature did not reach tol={tol:g}", achieved=err)
        val = model.quadrature(obs, n_t, n_phi, invariant, T)
        if model.k == 0:
            return val, 0.0
        if prev is not None:
            err = abs(val - prev)
            if err < tol:
                return val, err
        prev = val
        n_t = int(math.ceil(n_t * 1.5))
        n_phi = int(math.ceil(n_phi * 1.5))


def h22_bosonic_expectation(ag: AugmentedGraph, lam, tol: float = 1e-8):
    """<exp(-sum lam (x^2 + y^2))> through the random-environment representation.

    Integrates det(I + 2 (A^u)^{-1} lam)^{-1} over the mixing measure pinned
    at the root with unit initial local times.
    """
    full, root = as_full_graph(ag)
    lam = np.asarray([lam.get(v, 0.0) for v in full.vertices] if isinstance(lam, Mapping) else lam, dtype=float)
    if lam.ndim == 0:
        lam = np.full(full.n, float(lam))
    keep = [i for i in range(full.n) if i != root]
    L = np.diag(lam[keep])

    def f(U):
        A = au_matrix(full.W, U)[:, keep][:, :, keep]
        return 1.0 / np.linalg.det(np.eye(len(keep)) + 2 * np.linalg.solve(A, np.broadcast_to(L, A.shape)))

    return quadrature_expectation(MixingMeasure(ag, full.vertices[root], 1.0), f=f, tol=tol)


def h2k_bosonic_expectation(generator, g, k: int, pinning: Mapping[int, float] | None = None,
                            n_mc: int = 100000, seed=0, chunk: int = 2**15):
    """E[g(sum_{j<=2k} phi_j^2)] over 2k independent Gaussian fields.

    ``g`` maps an (m, n) array of vertex sums to (m,). Returns (mean, standard_error).
    """
    M = np.asarray(generator, dtype=float)
    n = M.shape[0]
    pinning = dict(pinning or {})
    free = [i for i in range(n) if i not in pinning]
    Mff = M[np.ix_(free, free)]
    try:
        C = np.linalg.cholesky(Mff)
    except np.linalg.LinAlgError:
        raise ConditioningError("generator is not positive definite on the free vertices") from None
    mean = np.zeros(len(free))
    P = sorted(pinning)
    if P:
        c = np.array([pinning[p] for p in P], dtype=float)
        mean = -np.linalg.solve(Mff, M[np.ix_(free, P)] @ c)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.PCG64(int(seed)))
    vals = []
    for s in range(0, n_mc, chunk):
        m = min(chunk, n_mc - s)
        tot = np.zeros((m, n))
        for p in P:
            tot[:, p] = 2 * k * pinning[p] ** 2
        for _ in range(2 * k):
            z = rng.standard_normal((m, len(free)))
            phi = np.linalg.solve(C.T, z.T).T + mean
            tot[:, free] += phi ** 2
        vals.append(np.asarray(g(tot), dtype=float))
    vals = np.concatenate(vals)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0


# ---------------------------------------------------------------- Bayes formula, direct

def susy_bayes_check(ag: AugmentedGraph, i0, obs: Observable | None = None, s: float = 0.0,
                     tol: float = 1e-7):
    """Both sides of the susy Bayes identity on a graph with one free vertex plus root.

    Left: H^{2|2} expectation of (z_a/z_root) obs times the mixing density with
    initial local times z, integrated over u. Right: free field expectations
    under A^u averaged over the mixing measure with unit initial local times.
    Returns (lhs, rhs, combined_error).
    """
    full, root = as_full_graph(ag)
    if full.n != 2:
        raise ValueError("the direct check is limited to one free vertex plus root")
    obs = obs or One()
    a = full.index(i0)
    lhs_obs = Product(ZRatio(a, root), obs, NuWeight(a))
    lhs, e1 = h22_expectation(ag, lhs_obs, pinning={root: h22_pin(s)}, tol=tol)
    pin = {root: free_field_pin(s)}

    def f(U):
        out = np.empty(len(U))
        for m in range(len(U)):
            out[m] = susy_free_expectation(au_matrix(full.W, U[m]), obs, pin, full.vertices, tol=tol * 0.1,
                                           W=full.W)[0]
        return out

    rhs, e2 = quadrature_expectation(MixingMeasure(ag, full.vertices[a], 1.0), f=f, tol=tol)
    return lhs, float(rhs), e1 + e2
