import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bautin_dde.errors import ConfigError
from bautin_dde.system_model import (
    AlphaPoly,
    DelaySystem,
    eval_matrices,
    parse_system,
    serialize_system,
    system_from_dict,
    system_to_dict,
    taylor_f,
)

WRIGHT_DOC = {
    "n": 1,
    "r": 1,
    "A": [[[]]],
    "B": [[[{"c": -1, "i": 1, "j": 0}]]],
    "f": [{"eq": 1, "c": [{"c": -1, "i": 1, "j": 0}], "kx": [1], "ky": [1]}],
}


def test_parse_wright():
    sys = parse_system(json.dumps(WRIGHT_DOC))
    assert sys.n == 1 and sys.r == 1.0
    assert len(sys.f_terms) == 1
    t = sys.f_terms[0]
    assert t.degree == 2 and t.kx == (1,) and t.ky == (1,) and t.eq == 0


def test_reject_linear_f_term():
    doc = dict(WRIGHT_DOC, f=[{"eq": 1, "c": [{"c": 1, "i": 0, "j": 0}], "kx": [1], "ky": [0]}])
    with pytest.raises(ConfigError, match="degree 1"):
        system_from_dict(doc)


def test_reject_degree_six():
    doc = dict(WRIGHT_DOC, f=[{"eq": 1, "c": 1, "kx": [6], "ky": [0]}])
    with pytest.raises(ConfigError, match="degree 6"):
        system_from_dict(doc)


def test_empty_f_is_linear_system():
    sys = system_from_dict(dict(WRIGHT_DOC, f=[]))
    assert sys.f_terms == ()
    assert taylor_f(sys, (1, 0)).is_zero


@pytest.mark.parametrize(
    "patch, msg",
    [
        ({"r": 0}, "r must be"),
        ({"r": -1.0}, "r must be"),
        ({"A": [[0, 0]]}, "A must be"),
        ({"B": [[[{"c": 1, "i": -1, "j": 0}]]]}, "exponent i"),
        ({"B": [[[{"x": 1}]]]}, "malformed"),
        ({"n": 0}, "n must be"),
        ({"f": [{"eq": 2, "c": 1, "kx": [2], "ky": [0]}]}, "eq must be"),
    ],
)
def test_config_errors(patch, msg):
    with pytest.raises(ConfigError, match=msg):
        system_from_dict(dict(WRIGHT_DOC, **patch))


def test_invalid_json():
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_system("{not json")


def test_eval_matrices():
    sys = DelaySystem.build(1, 1.0, [[[(1, 1, 0), (2, 0, 1)]]], [[0]])
    A, B = eval_matrices(sys, (1, 0.5))
    assert A[0, 0] == 2.0 and B[0, 0] == 0.0
    wsys = system_from_dict(WRIGHT_DOC)
    A, B = eval_matrices(wsys, (math.pi / 2, 0))
    assert A[0, 0] == 0.0 and B[0, 0] == -math.pi / 2


def test_taylor_f():
    wsys = system_from_dict(WRIGHT_DOC)
    tf = taylor_f(wsys, (math.pi / 2, 0))
    assert tf.terms == ((0, -math.pi / 2, (1, 1)),)
    cubic = DelaySystem.build(1, 1.0, [[0]], [[0]], [(0, [(1, 0, 1)], (3,), (0,))])
    tf = taylor_f(cubic, (0, 2))
    assert tf.terms == ((0, 2.0, (3, 0)),)
    assert tf(np.array([2.0]), np.array([5.0]))[0] == 16.0


def test_duplicate_terms_merge():
    sys = DelaySystem.build(1, 1.0, [[0]], [[0]], [(0, 1.0, (2,), (0,)), (0, 2.0, (2,), (0,))])
    assert len(sys.f_terms) == 1
    assert sys.f_terms[0].coef.terms == ((3.0, 0, 0),)


def test_evaluator_matches_reference():
    from bautin_dde.catalog import golden

    tf = taylor_f(golden(), (0.3, -0.7))
    fast = tf.evaluator()
    rng = np.random.default_rng(1)
    for _ in range(5):
        x, y = rng.normal(size=2), rng.normal(size=2)
        assert np.allclose(fast(x, y), tf(x, y), rtol=1e-14, atol=1e-14)


coef = st.floats(-5, 5, allow_nan=False).filter(lambda c: c != 0)
poly_terms = st.lists(st.tuples(coef, st.integers(0, 3), st.integers(0, 3)), max_size=3)


@st.composite
def systems(draw):
    n = draw(st.integers(1, 3))
    r = draw(st.floats(0.1, 5))
    A = [[draw(poly_terms) for _ in range(n)] for _ in range(n)]
    B = [[draw(poly_terms) for _ in range(n)] for _ in range(n)]
    exps = st.tuples(
        st.lists(st.integers(0, 3), min_size=n, max_size=n),
        st.lists(st.integers(0, 2), min_size=n, max_size=n),
    ).filter(lambda e: 2 <= sum(e[0]) + sum(e[1]) <= 5)
    terms = []
    for _ in range(draw(st.integers(0, 4))):
        kx, ky = draw(exps)
        terms.append((draw(st.integers(0, n - 1)), draw(poly_terms) or [(1.0, 0, 0)], kx, ky))
    return DelaySystem.build(n, r, A, B, terms)


@settings(max_examples=60, deadline=None)
@given(systems())
def test_round_trip_identity(sys):
    again = parse_system(serialize_system(sys))
    assert again == sys
    assert system_to_dict(again) == system_to_dict(sys)


@settings(max_examples=60, deadline=None)
@given(poly_terms, st.integers(-4, 4), st.integers(-4, 4))
def test_alpha_poly_exact_on_rationals(terms, p, q):
    a1, a2 = p / 2, q / 4
    poly = AlphaPoly.from_terms(terms)
    expect = sum(c * a1**i * a2**j for c, i, j in terms)
    assert poly((a1, a2)) == pytest.approx(expect, rel=1e-12, abs=1e-12)
