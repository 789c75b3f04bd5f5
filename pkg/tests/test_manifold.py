import math

import numpy as np
import pytest

from bautin_dde import catalog
from bautin_dde.errors import MissingOrder
from bautin_dde.manifold import (
    compose_F,
    embed_series,
    expand,
    expansion_dump,
    orders,
    residuals,
)
from bautin_dde.system_model import taylor_f

from .conftest import WRIGHT_HOPF, pipeline

SYSTEMS = [
    ("wright", catalog.wright, WRIGHT_HOPF),
    ("golden", catalog.golden, (0.0, 0.0)),
    ("golden-off", catalog.golden, (0.01, -0.25)),
    ("cubic-quintic", catalog.cubic_quintic, (0.0, 0.388760464924107)),
    ("cubic-quintic-off", catalog.cubic_quintic, (0.02, 0.2)),
]


def test_embed_degree_one(wright):
    basis, _ = pipeline(wright, WRIGHT_HOPF, order=2)
    x0 = embed_series(basis, {}, 0.0, 1)
    assert np.allclose(x0[(1, 0)], basis.u) and np.allclose(x0[(0, 1)], basis.u.conj())
    xr = embed_series(basis, {}, -1.0, 1)
    assert xr[(1, 0)][0] == pytest.approx(-1j, abs=1e-15)
    x = embed_series(basis, {}, 0.0, 3, need_w=1)
    assert not np.any(x.c[2:]) and not np.any(x.c[:, 2:])
    with pytest.raises(MissingOrder):
        embed_series(basis, {}, 0.0, 3)


def test_wright_second_order(wright):
    basis, _ = pipeline(wright, WRIGHT_HOPF, order=2)
    tf = taylor_f(wright, WRIGHT_HOPF)
    x0 = embed_series(basis, {}, 0.0, 2, need_w=1)
    F = compose_F(tf, x0, embed_series(basis, {}, -1.0, 2, need_w=1))
    assert F[(2, 0)][0] == pytest.approx(1j * math.pi, abs=1e-14)
    assert abs(F[(1, 1)][0]) < 1e-14
    assert F[(0, 2)][0] == pytest.approx(-1j * math.pi, abs=1e-14)
    _, exp = pipeline(wright, WRIGHT_HOPF)
    assert exp.g[(2, 0)] == pytest.approx(1j * math.pi / (1 + 1j * math.pi / 2), abs=1e-14)


def test_zero_nonlinearity():
    sys = catalog.hopf_ode(0.0)
    _, exp = pipeline(sys, (0, 0))
    assert all(abs(g) == 0 for g in exp.g.values())
    assert all(wc.func.magnitude() == 0 for wc in exp.w.values())
    res = residuals(exp, sys, (0, 0))
    assert res["ode"] == res["boundary"] == res["range"] == 0


def test_golden_normal_form(golden):
    for a2 in (0.0, -0.25, 0.4):
        _, exp = pipeline(golden, (0.0, a2))
        assert abs(exp.g[(2, 1)] - 2 * (a2 + 0.5j)) <= 1e-8
        assert abs(exp.g[(3, 2)] - 12) <= 1e-8
        for jk, g in exp.g.items():
            if jk not in ((2, 1), (3, 2)):
                assert abs(g) <= 1e-8, jk
        # cubic-only forcing: second-order w vanish
        for jk in orders(2):
            assert exp.w[jk].func.magnitude() == 0


def test_resonant_orders_use_bordered_solve(golden, wright):
    for sys, alpha in [(golden, (0, 0)), (wright, WRIGHT_HOPF)]:
        _, exp = pipeline(sys, alpha)
        assert exp.w[(2, 1)].method == "bordered"
        assert exp.w[(1, 2)].method == "bordered"
        assert exp.w[(2, 0)].method == "direct"


@pytest.mark.parametrize("name, make, alpha", SYSTEMS, ids=[s[0] for s in SYSTEMS])
def test_residuals(name, make, alpha):
    sys = make()
    _, exp = pipeline(sys, alpha)
    res = residuals(exp, sys, alpha, m=21)
    assert res["ode"] <= 1e-8
    assert res["boundary"] <= 1e-8
    assert res["range"] <= 1e-8
    assert res["g_consistency"] <= 1e-10


def test_residuals_detect_corruption(wright):
    _, exp = pipeline(wright, WRIGHT_HOPF)
    f20 = abs(exp.F[(2, 0)][0])
    for jk in list(exp.w):
        exp.w[jk] = type(exp.w[jk])(*jk, exp.w[jk].exponent, exp.w[jk].func * 0.0, "direct", 1.0)
    res = residuals(exp, wright, WRIGHT_HOPF)
    assert res["ode"] + res["boundary"] >= f20 / 2


@pytest.mark.parametrize("name, make, alpha", SYSTEMS, ids=[s[0] for s in SYSTEMS])
def test_conjugation_symmetry(name, make, alpha):
    sys = make()
    basis, exp = pipeline(sys, alpha)
    s = np.linspace(-sys.r, 0, 11)
    for (j, k), wc in exp.w.items():
        assert np.max(np.abs(wc.func(s) - np.conj(exp.w[(k, j)].func(s)))) <= 1e-10
    for (j, k), F in exp.F.items():
        assert np.max(np.abs(F - np.conj(exp.F[(k, j)]))) <= 1e-10 * (1 + np.max(np.abs(F)))
        # the zbar equation carries conj(g_kj): the reality relation for g
        assert abs(basis.v.conj() @ F - np.conj(exp.g[(k, j)])) <= 1e-10 * (1 + abs(exp.g[(k, j)]))
    w11 = exp.w[(1, 1)].func(s)
    assert np.max(np.abs(w11.imag)) <= 1e-10


@pytest.mark.parametrize("name, make, alpha", SYSTEMS, ids=[s[0] for s in SYSTEMS])
def test_phase_equivariance(name, make, alpha):
    sys = make()
    theta = math.pi / 3
    basis, exp = pipeline(sys, alpha, order=3)
    _, rot = pipeline(sys, alpha, order=3, basis=basis.rotated(theta))
    for (j, k), g in exp.g.items():
        assert abs(rot.g[(j, k)] - np.exp(1j * (j - k - 1) * theta) * g) <= 1e-10 * (1 + abs(g))


@pytest.mark.parametrize("name, make, alpha", SYSTEMS, ids=[s[0] for s in SYSTEMS])
def test_second_order_g_independent_of_w(name, make, alpha):
    sys = make()
    basis, exp = pipeline(sys, alpha)
    tf = taylor_f(sys, alpha)
    w = exp.w_funcs()
    noisy = {jk: (lambda s, f=f: 3 * f(s) + 1.0) for jk, f in w.items()}
    for table in (w, noisy, {}):
        x0 = embed_series(basis, table, 0.0, 2, need_w=1)
        xr = embed_series(basis, table, -sys.r, 2, need_w=1)
        F = compose_F(tf, x0, xr, 2)
        for jk in orders(2):
            assert abs(basis.v @ F[jk] - exp.g[jk]) <= 1e-13 * (1 + abs(exp.g[jk]))


def test_linear_system_all_zero():
    sys = catalog.linear_scalar(0.0, -math.pi / 2)
    basis, exp = pipeline(sys, (0, 0))
    assert max(abs(g) for g in exp.g.values()) == 0


def test_expand_order_bookkeeping(wright):
    basis, _ = pipeline(wright, WRIGHT_HOPF, order=2)
    exp = expand(wright, WRIGHT_HOPF, basis, 5)
    assert exp.g_order == 5 and exp.w_order == 4
    assert set(exp.w) == {jk for d in (2, 3, 4) for jk in orders(d)}
    assert set(exp.g) == {jk for d in (2, 3, 4, 5) for jk in orders(d)}


def test_expansion_dump(wright):
    _, exp = pipeline(wright, WRIGHT_HOPF)
    dump = expansion_dump(exp)
    assert set(dump["g"]) >= {"20", "11", "02", "21", "32"}
    assert dump["w"]["20"]["s"] == [-1.0, -0.5, 0.0]
    assert len(dump["w"]["20"]["values"]) == 3
