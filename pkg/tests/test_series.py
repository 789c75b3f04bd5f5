from math import factorial

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from bautin_dde.series import QuasiPoly, Series2, particular_solution

seeds = st.integers(0, 100_000)


def random_series(rng, N, max_deg, vshape=()):
    s = Series2.zeros(N, vshape)
    for j in range(N + 1):
        for k in range(N + 1 - j):
            if j + k <= max_deg:
                s.c[j, k] = rng.normal(size=vshape) + 1j * rng.normal(size=vshape)
    return s


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_product_matches_pointwise(seed):
    rng = np.random.default_rng(seed)
    a = random_series(rng, 4, 2)
    b = random_series(rng, 4, 2)
    z = complex(*rng.normal(size=2)) * 0.3
    assert abs((a * b)(z) - a(z) * b(z)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_vector_times_scalar_series(seed):
    rng = np.random.default_rng(seed)
    a = random_series(rng, 3, 1, (2,))
    b = random_series(rng, 3, 2)
    z = complex(*rng.normal(size=2)) * 0.3
    assert np.allclose((a * b)(z), a(z) * b(z), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_conj_swap_and_derivatives(seed):
    rng = np.random.default_rng(seed)
    a = random_series(rng, 5, 5)
    z = complex(*rng.normal(size=2)) * 0.4
    assert abs(a.conj_swap()(z) - np.conj(a(z))) < 1e-12
    # d/dz at fixed zbar from the explicit coefficient sum
    d = sum(
        a.c[j, k] * j * z ** (j - 1) * np.conj(z) ** k / (factorial(j) * factorial(k))
        for j in range(1, 6)
        for k in range(6 - j)
    )
    assert abs(a.dz().truncate(4)(z) - d) < 1e-12


def test_factorial_convention():
    # z^2 zbar with unit coefficient has c_21 = 2! 1! = 2
    z = Series2.from_dict(3, {(1, 0): 1.0})
    zb = Series2.from_dict(3, {(0, 1): 1.0})
    assert (z * z * zb)[(2, 1)] == 2


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from(["generic", "exact", "near"]))
def test_particular_solution_solves_ode(seed, mode):
    rng = np.random.default_rng(seed)
    n, r = 2, 1.0 + rng.random()
    c = complex(rng.normal(), 3 * rng.normal())
    terms = []
    for _ in range(3):
        nu = complex(rng.normal(), 3 * rng.normal())
        if mode == "exact":
            nu = c
        elif mode == "near":
            nu = c + complex(*rng.normal(size=2)) * 1e-5
        deg = int(rng.integers(0, 3))
        terms.append((nu, rng.normal(size=(deg + 1, n)) + 1j * rng.normal(size=(deg + 1, n))))
    G = QuasiPoly(n, terms)
    P = particular_solution(c, G, r)
    s = np.linspace(-r, 0, 21)
    res = P.derivative()(s) - c * P(s) - G(s)
    assert np.max(np.abs(res)) <= 1e-9 * (1 + G.magnitude() + P.magnitude())
