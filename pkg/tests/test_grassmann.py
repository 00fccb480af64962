import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reinforced_loops.errors import SingularBodyError
from reinforced_loops.grassmann import (
    GrassmannElement as G, berezin, eta, fermion_quadratic, gexp, ginv, gmul, gpow, gsqrt, xi,
)

N = 2
coef = st.floats(-3.0, 3.0, allow_nan=False)


def element(draw_coeffs, n=N):
    return G(n, {m: c for m, c in enumerate(draw_coeffs) if c != 0.0})


elements = st.lists(coef, min_size=2 ** (2 * N), max_size=2 ** (2 * N)).map(element)
even_elements = st.lists(coef, min_size=2 ** (2 * N), max_size=2 ** (2 * N)).map(
    lambda cs: G(N, {m: c for m, c in enumerate(cs) if bin(m).count("1") % 2 == 0 and c != 0.0}))


@settings(max_examples=80, deadline=None)
@given(elements, elements, elements)
def test_associative_and_distributive(a, b, c):
    assert ((a * b) * c).allclose(a * (b * c), atol=1e-9)
    assert (a * (b + c)).allclose(a * b + a * c, atol=1e-9)


def test_generators_anticommute_and_square_to_zero():
    gens = [xi(3, i) for i in range(3)] + [eta(3, i) for i in range(3)]
    for a, b in itertools.product(gens, repeat=2):
        assert (a * b).allclose(-(b * a))
    for a in gens:
        assert (a * a).allclose(G.scalar(3, 0.0))


@settings(max_examples=80, deadline=None)
@given(even_elements, elements)
def test_even_elements_commute(e, a):
    assert e.is_even
    assert (e * a).allclose(a * e, atol=1e-9)


def test_function_examples():
    n = 1
    pair = xi(n, 0) * eta(n, 0)
    assert gexp(G.scalar(n, 0.0)).allclose(G.scalar(n, 1.0))
    a = 1.7
    assert gexp(pair * (-a)).allclose(1 - pair * a)
    r = gsqrt(1 + pair * 2)
    assert r.allclose(1 + pair)
    assert (r * r).allclose(1 + pair * 2)
    assert (ginv(2 + pair) * (2 + pair)).allclose(G.scalar(n, 1.0), atol=1e-15)
    assert gpow(4 + pair, 0.5).allclose(gsqrt(4 + pair))


def test_singular_body():
    pair = xi(1, 0) * eta(1, 0)
    with pytest.raises(SingularBodyError):
        ginv(pair)
    with pytest.raises(SingularBodyError):
        gsqrt(pair * 3.0)


def test_nilpotent_series_terminates():
    n = 3
    e = sum((xi(n, i) * eta(n, i) for i in range(n)), G.scalar(n, 0.0))
    ex = gexp(e)
    # exp of a sum of commuting nilpotent pairs is the product of (1 + pair)
    prod = G.scalar(n, 1.0)
    for i in range(n):
        prod = prod * (1 + xi(n, i) * eta(n, i))
    assert ex.allclose(prod)
    assert ex.degree() == 2 * n


def test_berezin_examples():
    assert math.isclose(berezin(gexp(-fermion_quadratic(np.array([[2.5]])))), 2.5)
    assert math.isclose(berezin(gexp(-fermion_quadratic(np.eye(2)))), 1.0)
    A = np.array([[0.3, -1.2], [2.0, 0.7]])
    assert abs(berezin(gexp(-fermion_quadratic(A))) - np.linalg.det(A)) <= 1e-12


def test_berezin_determinant_random_matrices():
    rng = np.random.default_rng(17)
    for k in range(200):
        n = 1 + k % 3
        A = rng.normal(size=(n, n))
        assert abs(berezin(gexp(-fermion_quadratic(A))) - np.linalg.det(A)) <= 1e-10


def test_berezin_of_body_only_vanishes():
    assert berezin(G.scalar(2, 5.0)) == 0.0


def test_batched_coefficients():
    # the normalization fixes berezin(1 - a xi eta) = a, also coefficientwise
    x = np.linspace(0.5, 2.0, 5)
    pair = xi(1, 0) * eta(1, 0)
    assert np.allclose(berezin(G.scalar(1, 1.0) - pair * x), x)
    assert np.allclose(berezin(gexp(-(pair * x))), x)
