import math

import numpy as np
import pytest

from reinforced_loops.environment import (
    Environment, MixingMeasure, au_matrix, env_matrices, grid_sample, log_mixing_density, make_environment,
    mcmc_sample, quadrature_expectation, shift_transform,
)
from reinforced_loops.errors import BudgetError, GraphError, TuningError
from reinforced_loops.graph import BUNDLED_GRAPHS, as_full_graph, bundled_graph, with_root_weight

from conftest import within_3se


def test_log_density_at_zero(single):
    for w in (1.0, 2.5):
        ag = with_root_weight(single, w)
        assert math.isclose(log_mixing_density(ag, "d", 1.0, [0.0, 0.0]),
                            0.5 * math.log(w) - 0.5 * math.log(2 * math.pi), rel_tol=1e-13)


def test_exponent_vanishes_at_zero():
    g = bundled_graph("K4+root")
    nu = MixingMeasure(g, "d", 1.0)
    full = g.full()
    from reinforced_loops.graph import matrix_tree_value
    expect = 0.5 * math.log(matrix_tree_value(full)) - 0.5 * nu.dim * math.log(2 * math.pi)
    assert math.isclose(float(nu.log_density_full(np.zeros(full.n))), expect, rel_tol=1e-12)


def test_pin_must_vanish(single):
    with pytest.raises(GraphError):
        log_mixing_density(single, "d", 1.0, [0.2, 0.1])


def test_normalization(single):
    val, err = quadrature_expectation(single, "d", 1.0, tol=1e-10)
    assert abs(val - 1) <= 1e-8
    for name in ("2-path+root", "triangle"):
        g = bundled_graph(name)
        full, root = as_full_graph(g)
        val, _ = quadrature_expectation(g, full.vertices[root if root is not None else 0], 1.0, tol=1e-6)
        assert abs(val - 1) <= 1e-4


def test_shift_consequence_integrates_to_one(path2):
    nu = MixingMeasure(path2, "1", 1.0)
    val, _ = quadrature_expectation(nu, f=lambda U: np.exp(U[:, 1] - U[:, 0]), tol=1e-8)
    assert abs(val - 1) <= 1e-6


def test_gradient_functional_under_tilt(path2):
    # the tilted integral against nu_a is the plain integral against nu_b
    F = lambda U: np.exp(-0.3 * (U[:, 0] - U[:, 1]) ** 2 - 0.2 * (U[:, 1] - U[:, 2]) ** 2)
    tilted, _ = quadrature_expectation(MixingMeasure(path2, "1", 1.0), f=lambda U: F(U) * np.exp(U[:, 2] - U[:, 0]),
                                       tol=1e-9)
    plain_b, _ = quadrature_expectation(MixingMeasure(path2, "d", 1.0), f=F, tol=1e-9)
    plain_a, _ = quadrature_expectation(MixingMeasure(path2, "1", 1.0), f=F, tol=1e-9)
    assert abs(tilted - plain_b) <= 1e-6
    # the measures at different pins do give different answers here
    assert abs(plain_a - plain_b) > 1e-3


def test_half_space_against_mcmc(path2):
    nu = MixingMeasure(path2, "d", 1.0)
    q, _ = quadrature_expectation(nu, f=lambda U: (U[:, 0] > 0.0).astype(float), tol=1e-4)
    res = mcmc_sample(nu, None, None, 6000, 3)
    f = float(np.mean(res.samples[:, 0] > 0.0))
    assert within_3se(f, math.sqrt(f * (1 - f) / res.ess), q)


def test_mcmc_one_dimensional_mean(single):
    res = mcmc_sample(single, "d", 1.0, 5000, 11)
    q, _ = quadrature_expectation(single, "d", 1.0, f=lambda U: U[:, 0], tol=1e-9)
    x = res.samples[:, 0]
    assert within_3se(x.mean(), x.std(ddof=1) / math.sqrt(res.ess), q)
    nu = MixingMeasure(single, "d", 1.0)
    assert np.all(np.isfinite(nu.log_density_full(res.samples)))
    again = mcmc_sample(single, "d", 1.0, 5000, 11)
    assert np.array_equal(res.samples, again.samples)
    assert 0.05 <= res.acceptance <= 0.95
    assert len(res.environments()) == 5000


def test_mcmc_tuning_error(single):
    with pytest.raises(TuningError):
        mcmc_sample(single, "d", 1.0, 200, 0, step_scale=1e-6, burn_in=10)


def test_quadrature_budget():
    with pytest.raises(BudgetError):
        quadrature_expectation(bundled_graph("K4+root"), "d", 1.0)
    with pytest.raises(BudgetError):
        quadrature_expectation(bundled_graph("2-path+root"), "d", 1.0, tol=1e-15, max_nodes=2000)


def test_env_matrices():
    ag = bundled_graph("triangle+root")
    full = ag.full()
    M = env_matrices(ag, np.zeros(4))
    assert np.allclose(M.A[:3, :3], ag.dirichlet_matrix())
    u = np.array([0.4, -1.1, 0.7, 0.0])
    M = env_matrices(ag, u)
    assert np.max(np.abs(M.B - M.B.T)) <= 1e-12
    W = full.W
    for i in range(4):
        for j in range(4):
            if i != j:
                assert M.A[i, j] == -W[i, j]
        assert math.isclose(M.A[i, i], sum(W[i, k] * math.exp(u[k] - u[i]) for k in range(4)))
    # generator 1/2 e^{-u} A e^{u}: off-diagonal entries are minus the quenched rates
    Q = 0.5 * np.exp(-u)[:, None] * M.A * np.exp(u)[None, :]
    for i in range(4):
        for j in range(4):
            if i != j:
                assert math.isclose(-Q[i, j], 0.5 * W[i, j] * math.exp(u[j] - u[i]), abs_tol=1e-15)
        assert abs(Q[i].sum()) < 1e-12
    assert np.allclose(au_matrix(W, np.stack([u, u]))[1], M.A)


def test_shift_transform():
    ag = bundled_graph("triangle+root")
    env = make_environment(ag, {"1": 0.3, "2": -0.4, "3": 1.2}, "d")
    assert np.array_equal(shift_transform(env, "d").u, env.u)
    b = shift_transform(env, "2")
    assert b["2"] == 0.0
    back = shift_transform(b, "d")
    assert np.allclose(back.u, env.u, atol=1e-15)
    d1, d2 = np.subtract.outer(env.u, env.u), np.subtract.outer(b.u, b.u)
    assert np.allclose(d1, d2, atol=1e-15)
    with pytest.raises(GraphError):
        Environment(("a", "b"), np.array([1.0, 0.0]), "a")


@pytest.mark.parametrize("name", BUNDLED_GRAPHS)
def test_shift_lemma_pointwise(name, rng):
    g = bundled_graph(name)
    full, _ = as_full_graph(g)
    for _ in range(100):
        a, b = rng.choice(full.n, size=2, replace=False)
        u = rng.normal(0.0, 1.0, full.n)
        u[a] = 0.0
        lhs = float(MixingMeasure(g, full.vertices[b]).log_density_full(u - u[b]))
        rhs = float(MixingMeasure(g, full.vertices[a]).log_density_full(u)) + u[b] - u[a]
        assert abs(lhs - rhs) <= 1e-10


def test_grid_sample_mean(single):
    nu = MixingMeasure(single, "d", 1.0)
    U = grid_sample(nu, 200_000, np.random.default_rng(4))
    q, _ = quadrature_expectation(nu, f=lambda X: X[:, 0], tol=1e-9)
    x = U[:, 0]
    assert within_3se(x.mean(), x.std(ddof=1) / math.sqrt(len(x)), q)
