"""The mixing measure of the VRJP: log-density, quadrature, sampling and A^u / B^u."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import BudgetError, GraphError, TuningError
from .graph import AugmentedGraph, Graph, as_full_graph, log_matrix_tree_values
from .rng import make_generator
from .vrjp import theta_vector

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_BOX = 12.0


@dataclass(frozen=True)
class Environment:
    """Field u on an ordered vertex list with u[pinned] = 0."""

    vertices: tuple
    u: np.ndarray
    pinned: str

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).copy()
        if u.shape != (len(self.vertices),):
            raise GraphError("environment length does not match vertex list")
        k = list(self.vertices).index(self.pinned)
        if u[k] != 0.0:
            raise GraphError("environment must vanish at its pinned vertex")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    def __getitem__(self, v) -> float:
        return float(self.u[list(self.vertices).index(v)])

    def as_dict(self) -> dict:
        return {v: float(x) for v, x in zip(self.vertices, self.u)}


def make_environment(g: Graph | AugmentedGraph, u, pinned) -> Environment:
    full, _ = as_full_graph(g)
    if isinstance(u, Mapping):
        arr = np.zeros(full.n)
        for v, x in u.items():
            arr[full.index(v)] = float(x)
    else:
        arr = np.asarray(u, dtype=float)
    return Environment(full.vertices, arr, str(pinned))


def shift_transform(env: Environment, b) -> Environment:
    """Re-pin at b: u'_i = u_i - u_b."""
    k = list(env.vertices).index(b)
    return Environment(env.vertices, env.u - env.u[k], b)


@dataclass(frozen=True)
class EnvMatrices:
    A: np.ndarray
    B: np.ndarray
    vertices: tuple

    def restrict(self, keep: Sequence[int]) -> "EnvMatrices":
        ix = np.ix_(keep, keep)
        return EnvMatrices(self.A[ix], self.B[ix], tuple(self.vertices[i] for i in keep))


def au_matrix(W: np.ndarray, u: np.ndarray) -> np.ndarray:
    """A^u: off-diagonal -W_ij, diagonal sum_k W_ik e^{u_k-u_i}. Batched over u."""
    u = np.asarray(u, dtype=float)
    E = np.exp(u[..., None, :] - u[..., :, None])
    A = np.broadcast_to(-W, u.shape[:-1] + W.shape).copy()
    idx = np.arange(W.shape[0])
    A[..., idx, idx] = (W * E).sum(axis=-1)
    return A


def env_matrices(g: Graph | AugmentedGraph, u) -> EnvMatrices:
    full, _ = as_full_graph(g)
    u = np.asarray(getattr(u, "u", u), dtype=float)
    if u.shape != (full.n,):
        raise GraphError(f"environment must cover all {full.n} vertices")
    A = au_matrix(full.W, u)
    e = np.exp(u)
    B = e[:, None] * A * e[None, :]
    B = 0.5 * (B + B.T)
    return EnvMatrices(A, B, full.vertices)


class MixingMeasure:
    """Log-density of nu_{i0}^{W,theta} in the free coordinates u_i, i != i0.

    Built from a plain Graph (vertex set V) or an AugmentedGraph (vertex set
    V plus root); the two are deliberately kept as distinct choices.
    """

    def __init__(self, g: Graph | AugmentedGraph, i0, theta=None):
        full, _ = as_full_graph(g)
        self.graph = full
        self.W = full.W
        self.n = full.n
        self.i0 = full.index(i0)
        self.theta = theta_vector(full, theta)
        self.free = [i for i in range(self.n) if i != self.i0]
        self.dim = len(self.free)
        iu, ju = np.nonzero(np.triu(self.W) > 0)
        self._ei, self._ej = iu, ju
        self._ew = self.W[iu, ju]
        self._const = float(np.sum(np.log(self.theta[self.free]))) - 0.5 * LOG_2PI * self.dim

    def embed(self, U_free: np.ndarray) -> np.ndarray:
        U_free = np.asarray(U_free, dtype=float)
        U = np.zeros(U_free.shape[:-1] + (self.n,))
        U[..., self.free] = U_free
        return U

    def log_density_full(self, U: np.ndarray) -> np.ndarray:
        """log density at full fields U (..., n); U[..., i0] must be 0."""
        U = np.asarray(U, dtype=float)
        th = self.theta
        i, j, w = self._ei, self._ej, self._ew
        d = U[..., i] - U[..., j]
        expo = -0.5 * np.sum(
            w * (np.exp(d) * th[j] ** 2 + np.exp(-d) * th[i] ** 2 - 2 * th[i] * th[j]), axis=-1
        )
        logD = log_matrix_tree_values(self.W, U)
        return expo + 0.5 * logD - np.sum(U[..., self.free], axis=-1) + self._const

    def log_density(self, U_free: np.ndarray) -> np.ndarray:
        return self.log_density_full(self.embed(U_free))

    def grid(self, n: int, box: float = DEFAULT_BOX):
        """Tensor Gauss-Legendre nodes on [-box, box]^dim and weights times density."""
        x, w = np.polynomial.legendre.leggauss(n)
        x = x * box
        w = w * box
        if self.dim == 0:
            return np.zeros((1, self.n)), np.ones(1)
        mesh = np.meshgrid(*([x] * self.dim), indexing="ij")
        Uf = np.stack([m.ravel() for m in mesh], axis=-1)
        wm = np.meshgrid(*([w] * self.dim), indexing="ij")
        W = np.prod(np.stack([m.ravel() for m in wm], axis=-1), axis=-1)
        U = self.embed(Uf)
        lw = np.log(W) + self.log_density_full(U)
        return U, np.exp(lw)


def auto_box(nu: "MixingMeasure", drop: float = 50.0, cap: float = DEFAULT_BOX) -> float:
    """Half-width of the box outside which the log-density is ``drop`` below its peak.

    Located on a coarse lattice over [-cap, cap]^dim; the density decays like
    exp(-c e^{|u|}) so one extra unit of margin leaves a negligible tail.
    """
    if nu.dim == 0:
        return 1.0
    t = np.linspace(-cap, cap, 49 if nu.dim <= 2 else 33)
    mesh = np.meshgrid(*([t] * nu.dim), indexing="ij")
    Uf = np.stack([m.ravel() for m in mesh], axis=-1)
    lp = nu.log_density(Uf)
    inside = Uf[lp > lp.max() - drop]
    return float(min(np.max(np.abs(inside)) + 1.5, cap))


def _node_counts(n_start: int):
    n = n_start
    while True:
        yield n
        n = int(math.ceil(n * 1.5 / 2.0) * 2)


def quadrature_expectation(g, i0=None, theta=None, f: Callable[[np.ndarray], np.ndarray] | None = None,
                           tol: float = 1e-8, box: float | None = None, n_start: int = 16,
                           max_nodes: int = 2**22, chunk: int = 2**16):
    """Integral of f(u) against the mixing measure by tensor Gauss-Legendre.

    ``f`` receives full fields of shape (m, n) and returns (m,) or (m, k).
    The node count per axis grows geometrically until successive estimates
    agree to ``tol``. Returns (value, error_estimate).
    """
    nu = g if isinstance(g, MixingMeasure) else MixingMeasure(g, i0, theta)
    if nu.dim > 3:
        raise BudgetError("tensor quadrature limited to 3 free coordinates")
    f = f or (lambda U: np.ones(U.shape[0]))
    box = auto_box(nu) if box is None else box
    prev = None
    err = math.inf
    for n in _node_counts(n_start):
        if n ** max(nu.dim, 1) > max_nodes:
            raise BudgetError(f"quadrature did not reach tol={tol:g}", achieved=err)
        U, w = nu.grid(n, box)
        total = 0.0
        for s in range(0, len(w), chunk):
            fv = np.asarray(f(U[s:s + chunk]), dtype=float)
            total = total + np.tensordot(w[s:s + chunk], fv, axes=(0, 0))
        if prev is not None:
            err = float(np.max(np.abs(total - prev)))
            if err < tol:
                return total, err
        prev = total


def grid_sample(nu: MixingMeasure, n_samples: int, rng: np.random.Generator, n_nodes: int = 96,
                box: float | None = None) -> np.ndarray:
    """Draws from the quadrature discretization of nu (dims <= 3).

    Sample means of any smooth functional reproduce the quadrature value, which
    is what the mixture checks need.
    """
    U, w = nu.grid(n_nodes, auto_box(nu) if box is None else box)
    p = w / w.sum()
    idx = rng.choice(len(p), size=n_samples, p=p)
    return U[idx]


@dataclass
class McmcResult:
    samples: np.ndarray
    acceptance: float
    ess: float
    step_scale: float
    vertices: tuple
    pinned: str

    def environments(self) -> list[Environment]:
        return [Environment(self.vertices, u, self.pinned) for u in self.samples]


def _ess(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or np.var(x) == 0:
        return float(n)
    x = x - x.mean()
    f = np.fft.rfft(x, 2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n]
    ac /= ac[0]
    s = 0.0
    for k in range(1, n - 1, 2):
        pair = ac[k] + ac[k + 1]
        if pair < 0:
            break
        s += pair
    tau = -1.0 + 2.0 * (1.0 + s) if s > 0 else 1.0
    return float(n / max(tau, 1.0))


def mcmc_sample(g, i0, theta, n: int, seed: int, step_scale: float | None = None,
                burn_in: int = 10_000, thin: int = 10, target: float = 0.4) -> McmcResult:
    """Random-walk Metropolis on the free coordinates with tuned Gaussian steps."""
    nu = g if isinstance(g, MixingMeasure) else MixingMeasure(g, i0, theta)
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_generator(seed)
    d = nu.dim
    if d == 0:
        return McmcResult(np.zeros((n, nu.n)), 1.0, float(n), 0.0, nu.graph.vertices,
                          nu.graph.vertices[nu.i0])
    scale = step_scale if step_scale is not None else 2.4 / math.sqrt(d)
    x = np.zeros(d)
    lp = float(nu.log_density(x))
    acc_window = 0
    for t in range(1, burn_in + 1):
        y = x + scale * rng.standard_normal(d)
        ly = float(nu.log_density(y))
        if math.log(rng.random()) < ly - lp:
            x, lp = y, ly
            acc_window += 1
        if step_scale is None and t % 100 == 0:
            rate = acc_window / 100
            scale *= math.exp(rate - target)
            acc_window = 0
    out = np.empty((n, d))
    accepted = 0
    total = n * thin
    # proposals and uniforms in bulk; the chain itself stays sequential
    steps = scale * rng.standard_normal((total, d))
    logu = np.log(rng.random(total))
    k = 0
    for s in range(n):
        for _ in range(thin):
            y = x + steps[k]
            ly = float(nu.log_density(y))
            if logu[k] < ly - lp:
                x, lp = y, ly
                accepted += 1
            k += 1
        out[s] = x
    rate = accepted / total
    if not 0.05 <= rate <= 0.95:
        raise TuningError(f"acceptance rate {rate:.3f} outside [0.05, 0.95]")
    ess = min(_ess(out[:, j]) for j in range(d))
    return McmcResult(nu.embed(out), rate, ess, scale, nu.graph.vertices, nu.graph.vertices[nu.i0])


def log_mixing_density(g, i0, theta, u) -> float:
    """log of the mixing density at a pinned environment u (full vertex field)."""
    nu = MixingMeasure(g, i0, theta)
    arr = np.asarray(getattr(u, "u", u), dtype=float)
    if isinstance(u, Mapping):
        arr = np.zeros(nu.n)
        for v, x in u.items():
            arr[nu.graph.index(v)] = float(x)
    if arr[nu.i0] != 0.0:
        raise GraphError("environment must vanish at the pinned vertex")
    return float(nu.log_density_full(arr))
