"""Order-by-order expansion of the two-dimensional invariant manifold.

On the manifold the state segment is

    x_t(s) = z e^{lam s} u + zbar e^{conj(lam) s} conj(u) + sum w_jk(s) z^j zbar^k / (j! k!)

and ``z' = lam z + g(z, zbar)`` with ``g = v f(x_t(0), x_t(-r))``.  Matching
powers of ``(z, zbar)`` in the invariance equation gives, for each ``(j, k)``,

    w_jk'(s) = (j lam + k conj(lam)) w_jk(s) + g_jk phi(s) + conj(g_kj) conj(phi(s)) + C_jk(s)
    w_jk'(0) = A w_jk(0) + B w_jk(-r) + F_jk

where ``C_jk`` collects products of lower-order ``w`` with ``g``.  The
boundary condition fixes the homogeneous constant ``K`` through
``Delta(j lam + k conj(lam)) K = rhs``.  At resonant orders that matrix is
singular and the two range conditions ``(psi, w_jk) = (conj psi, w_jk) = 0``
are appended.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eigenbasis import EigenBasis, _exp_weight, bilinear_quadrature
from .errors import MissingOrder, Unresolvable
from .series import QuasiPoly, Series2, binom2, particular_solution
from .spectrum import _char_matrix
from .system_model import DelaySystem, TaylorF, eval_matrices, taylor_f

MAX_G_ORDER = 5
# Delta(c) counts as resonant when its smallest singular value is below this
# fraction of its natural size; the bordered system is consistent at every
# parameter point, so using it on a wide band around resonance is harmless and
# avoids the 1/(c - lam) cancellation of the direct solve.
RESONANCE_TOL = 1e-3


@dataclass(frozen=True)
class WCoeff:
    j: int
    k: int
    exponent: complex  # j lam + k conj(lam)
    func: QuasiPoly
    method: str  # "direct" or "bordered"
    cond: float

    def __call__(self, s) -> np.ndarray:
        return self.func(s)


@dataclass
class ManifoldExpansion:
    basis: EigenBasis
    r: float
    w: dict = field(default_factory=dict)  # (j, k) -> WCoeff, 2 <= j+k <= 4
    g: dict = field(default_factory=dict)  # (j, k) -> complex, 2 <= j+k <= 5
    F: dict = field(default_factory=dict)  # (j, k) -> complex n-vector
    g_order: int = 1
    w_order: int = 1

    def g_series(self, N: int = MAX_G_ORDER) -> Series2:
        return Series2.from_dict(N, self.g)

    def gbar(self, j: int, k: int) -> complex:
        """Coefficient of ``z^j zbar^k / (j! k!)`` in ``conj(g)``."""
        return np.conj(self.g[(k, j)])

    def w_funcs(self) -> dict:
        return {jk: wc.func for jk, wc in self.w.items()}


def orders(d: int) -> list[tuple[int, int]]:
    return [(d - k, k) for k in range(d + 1)]


# -- composition -----------------------------------------------------------------


def embed_series(basis: EigenBasis, w: dict, s: float, N: int, need_w: int | None = None) -> Series2:
    """Vector series of ``x_t(s)`` in ``(z, zbar)`` through total order ``N``.

    ``w`` maps ``(j, k)`` to callables of ``s``; orders ``2..need_w`` must be
    present (default ``N``), higher ones are used when available.
    """
    n = basis.u.shape[0]
    need_w = N if need_w is None else need_w
    out = Series2.zeros(N, (n,))
    lam = basis.lambda1
    if N >= 1:
        out.c[1, 0] = np.exp(lam * s) * basis.u
        out.c[0, 1] = np.exp(np.conj(lam) * s) * basis.u.conj()
    for d in range(2, N + 1):
        for jk in orders(d):
            if jk in w:
                val = w[jk]
                out.c[jk] = val(np.array([s]))[0] if callable(val) else val
            elif d <= need_w:
                raise MissingOrder(f"w_{jk[0]}{jk[1]} needed for order {N} is missing")
    return out


def compose_F(tf: TaylorF, x0: Series2, xr: Series2, N: int | None = None) -> Series2:
    """Substitute ``x = x0``, ``y = xr`` into the polynomial ``f``; truncate at ``N``."""
    N = x0.N if N is None else N
    n = tf.n
    out = Series2.zeros(N, (n,))
    if tf.is_zero:
        return out
    variables = [x0.truncate(N).component(i) for i in range(n)] + [xr.truncate(N).component(i) for i in range(n)]
    powers: dict[tuple[int, int], Series2] = {}

    def power(idx, e):
        if (idx, e) not in powers:
            powers[(idx, e)] = variables[idx] if e == 1 else power(idx, e - 1) * variables[idx]
        return powers[(idx, e)]

    for eq, coef, exps in tf.terms:
        prod = None
        for idx, e in enumerate(exps):
            if e:
                prod = power(idx, e) if prod is None else prod * power(idx, e)
        out.c[..., eq] += coef * prod.c
    return out


def g_from_F(F: dict, basis: EigenBasis) -> dict:
    return {jk: complex(basis.v @ Fjk) for jk, Fjk in F.items()}


# -- homological equations --------------------------------------------------------


def cross_terms(j: int, k: int, w: dict, g: dict, n: int) -> QuasiPoly:
    """``C_jk``: order-(j,k) part of ``dW/dz g + dW/dzbar conj(g)`` (lower-order w only)."""
    acc = QuasiPoly.zero(n)
    for l in range(j + 1):
        for m in range(k + 1):
            a, b = j - l, k - m
            if a + b < 2:
                continue
            c = binom2(j, k, l, m)
            wz = w.get((l + 1, m))
            if wz is not None and (a, b) in g:
                acc = acc + (c * g[(a, b)]) * wz
            wzb = w.get((l, m + 1))
            if wzb is not None and (b, a) in g:
                acc = acc + (c * np.conj(g[(b, a)])) * wzb
    return acc


def forcing(j: int, k: int, exp: ManifoldExpansion) -> QuasiPoly:
    lam = exp.basis.lambda1
    u = exp.basis.u
    n = u.shape[0]
    G = QuasiPoly.exp(lam, exp.g[(j, k)] * u) + QuasiPoly.exp(np.conj(lam), np.conj(exp.g[(k, j)]) * u.conj())
    return G + cross_terms(j, k, exp.w_funcs(), exp.g, n)


def _range_row(v: np.ndarray, lam: complex, c: complex, B: np.ndarray, r: float) -> np.ndarray:
    """Row ``R`` with ``(psi, e^{c s} K) = R K`` for ``psi(xi) = v e^{-lam xi}``."""
    return v + _exp_weight(lam, c, r) * (v @ B)


def solve_w_order(j: int, k: int, exp: ManifoldExpansion, sys: DelaySystem, alpha) -> WCoeff:
    """Solve the order-(j,k) homological problem given all lower orders and ``g_jk``."""
    basis = exp.basis
    A, B = eval_matrices(sys, alpha)
    r = sys.r
    lam = basis.lambda1
    c = j * lam + k * np.conj(lam)
    G = forcing(j, k, exp)
    P = particular_solution(c, G, r)
    dP = P.derivative()
    rhs = A @ P.at(0.0) + B @ P.at(-r) + exp.F[(j, k)] - dP.at(0.0)
    M = _char_matrix(A, B, r, c)
    sv_m = np.linalg.svd(M, compute_uv=False)
    size = 1.0 + abs(c) + np.linalg.norm(A, 2) + np.exp(-c.real * r) * np.linalg.norm(B, 2)
    cond = float(sv_m[0] / sv_m[-1]) if sv_m[-1] > 0 else float("inf")
    if sv_m[-1] > RESONANCE_TOL * size:
        K = np.linalg.solve(M, rhs)
        method = "direct"
    else:
        v = basis.v
        vb = v.conj()
        rows = np.vstack([M, _range_row(v, lam, c, B, r), _range_row(vb, np.conj(lam), c, B, r)])
        pr = lambda s: P(s)
        b = np.concatenate(
            [
                rhs,
                [-bilinear_quadrature(v, lam, pr, B, r), -bilinear_quadrature(vb, np.conj(lam), pr, B, r)],
            ]
        )
        sv = np.linalg.svd(rows, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            raise Unresolvable(
                f"order ({j},{k}): bordered system is rank deficient (exponent {c:.6g} resonates "
                "with more than the critical pair)"
            )
        K, *_ = np.linalg.lstsq(rows, b, rcond=None)
        mismatch = np.linalg.norm(rows @ K - b)
        if mismatch > 1e-7 * (1 + np.linalg.norm(b)):
            raise Unresolvable(f"order ({j},{k}): inconsistent resonant system (mismatch {mismatch:.3e})")
        method = "bordered"
    func = P + QuasiPoly.exp(c, K)
    return WCoeff(j, k, complex(c), func, method, cond)


def expand(sys: DelaySystem, alpha, basis: EigenBasis, max_order: int = MAX_G_ORDER) -> ManifoldExpansion:
    """Run g(2) -> w(2) -> g(3) -> ... -> g(max_order).

    The recursion is purely algebraic, so it is also evaluated at parameter
    points with ``mu < 0`` (finite-difference stencils need them).
    """
    tf = taylor_f(sys, alpha)
    exp = ManifoldExpansion(basis=basis, r=sys.r)
    for d in range(2, max_order + 1):
        # F at order d only involves w of order < d
        x0 = embed_series(basis, exp.w_funcs(), 0.0, d, need_w=d - 1)
        xr = embed_series(basis, exp.w_funcs(), -sys.r, d, need_w=d - 1)
        Fd = compose_F(tf, x0, xr, d).order(d)
        for jk, val in Fd.items():
            exp.F[jk] = np.array(val)
        exp.g.update(g_from_F(Fd, basis))
        exp.g_order = d
        if d < max_order:
            for jk in orders(d):
                exp.w[jk] = solve_w_order(*jk, exp, sys, alpha)
            exp.w_order = d
    return exp


def expand_to_order5(sys: DelaySystem, alpha, basis: EigenBasis) -> ManifoldExpansion:
    return expand(sys, alpha, basis, 5)


# -- verification -------------------------------------------------------------------


def residuals(exp: ManifoldExpansion, sys: DelaySystem, alpha, m: int = 21) -> dict:
    """Absolute residuals of the invariance equations at ``m`` points of ``[-r, 0]``.

    The cross terms and ``F`` are rebuilt numerically from the stored tables
    (series arithmetic on sampled values), not from the solver's own
    quasi-polynomial intermediates.
    """
    basis = exp.basis
    A, B = eval_matrices(sys, alpha)
    r = sys.r
    n = sys.n
    lam = basis.lambda1
    s_grid = np.linspace(-r, 0.0, m)
    N = exp.w_order + 1
    tf = taylor_f(sys, alpha)
    gser = Series2.from_dict(N, {jk: v for jk, v in exp.g.items() if sum(jk) <= N})
    gbar = gser.conj_swap()

    w_vals = {jk: wc.func(s_grid) for jk, wc in exp.w.items()}
    dw_vals = {jk: wc.func.derivative()(s_grid) for jk, wc in exp.w.items()}
    per_order = {}
    # cross terms sample by sample
    cross = {jk: np.zeros((m, n), dtype=complex) for jk in exp.w}
    for i in range(m):
        W = Series2.from_dict(N, {jk: w_vals[jk][i] for jk in exp.w}, (n,))
        T = W.dz() * gser + W.dzbar() * gbar
        for jk in exp.w:
            cross[jk][i] = T.c[jk]

    funcs = {jk: (lambda s, jk=jk: exp.w[jk].func(s)) for jk in exp.w}
    x0 = embed_series(basis, funcs, 0.0, N, need_w=exp.w_order)
    xr = embed_series(basis, funcs, -r, N, need_w=exp.w_order)
    Fser = compose_F(tf, x0, xr, N)

    phi = np.exp(lam * s_grid)[:, None] * basis.u
    for jk, wc in exp.w.items():
        j, k = jk
        c = j * lam + k * np.conj(lam)
        ode = dw_vals[jk] - c * w_vals[jk] - exp.g[jk] * phi - np.conj(exp.g[(k, j)]) * phi.conj() - cross[jk]
        w0 = w_vals[jk][-1]
        wr = w_vals[jk][0]
        bc = dw_vals[jk][-1] - A @ w0 - B @ wr - Fser.c[jk]
        rng1 = bilinear_quadrature(basis.v, lam, wc.func, B, r)
        rng2 = bilinear_quadrature(basis.v.conj(), np.conj(lam), wc.func, B, r)
        per_order[jk] = {
            "ode": float(np.max(np.abs(ode))),
            "boundary": float(np.max(np.abs(bc))),
            "range": float(max(abs(rng1), abs(rng2))),
            "method": wc.method,
        }
    g_cons = 0.0
    for d in range(2, exp.g_order + 1):
        if d > N:
            break
        for jk in orders(d):
            g_cons = max(g_cons, abs(exp.g[jk] - basis.v @ Fser.c[jk]))
    return {
        "per_order": per_order,
        "ode": max((v["ode"] for v in per_order.values()), default=0.0),
        "boundary": max((v["boundary"] for v in per_order.values()), default=0.0),
        "range": max((v["range"] for v in per_order.values()), default=0.0),
        "g_consistency": float(g_cons),
        "samples": m,
    }


def expansion_dump(exp: ManifoldExpansion) -> dict:
    """Regression snapshot: ``g_jk`` and ``w_jk`` at ``s in {-r, -r/2, 0}``."""
    r = exp.r
    pts = np.array([-r, -r / 2, 0.0])
    return {
        "g": {f"{j}{k}": complex(val) for (j, k), val in sorted(exp.g.items())},
        "w": {
            f"{j}{k}": {"s": pts.tolist(), "values": wc.func(pts).tolist()}
            for (j, k), wc in sorted(exp.w.items())
        },
    }
