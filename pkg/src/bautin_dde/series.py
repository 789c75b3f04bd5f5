"""Truncated bivariate series in ``(z, zbar)`` and exponential quasi-polynomials.

``Series2`` stores coefficients in the factorial convention

    S(z, zbar) = sum_{j+k<=N} c_jk z^j zbar^k / (j! k!)

so that ``d/dz`` is an index shift and products follow the Leibniz rule
``(a b)_jk = sum C(j,l) C(k,m) a_lm b_{j-l,k-m}``.

``QuasiPoly`` holds vector functions ``sum_m p_m(s) exp(mu_m s)`` with
polynomial ``p_m``; the class is closed under everything the invariant
manifold recursion needs, including solving ``w' = c w + G``.
"""

from __future__ import annotations

from math import comb, factorial

import numpy as np


def _fact_table(N: int) -> np.ndarray:
    f = np.array([float(factorial(i)) for i in range(N + 1)])
    return np.outer(f, f)


class Series2:
    __slots__ = ("N", "c")

    def __init__(self, N: int, c: np.ndarray):
        self.N = N
        self.c = c

    @classmethod
    def zeros(cls, N: int, vshape: tuple = ()) -> "Series2":
        return cls(N, np.zeros((N + 1, N + 1) + tuple(vshape), dtype=complex))

    @classmethod
    def one(cls, N: int) -> "Series2":
        s = cls.zeros(N)
        s.c[0, 0] = 1.0
        return s

    @classmethod
    def from_dict(cls, N: int, coeffs: dict, vshape: tuple = ()) -> "Series2":
        s = cls.zeros(N, vshape)
        for (j, k), val in coeffs.items():
            if j + k <= N:
                s.c[j, k] = val
        return s

    @property
    def vshape(self) -> tuple:
        return self.c.shape[2:]

    def __getitem__(self, jk):
        j, k = jk
        if j + k > self.N:
            raise IndexError(f"order {j + k} beyond truncation {self.N}")
        return self.c[j, k]

    def component(self, i: int) -> "Series2":
        return Series2(self.N, self.c[..., i])

    def _mask(self) -> np.ndarray:
        j, k = np.indices((self.N + 1, self.N + 1))
        return (j + k <= self.N).reshape((self.N + 1, self.N + 1) + (1,) * len(self.vshape))

    def __add__(self, other):
        if isinstance(other, Series2):
            return Series2(self.N, self.c + other.c)
        out = self.c.copy()
        out[0, 0] += other
        return Series2(self.N, out)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1) * other

    def __neg__(self):
        return Series2(self.N, -self.c)

    def __mul__(self, other):
        if not isinstance(other, Series2):
            return Series2(self.N, self.c * other)
        N = self.N
        fac = _fact_table(N)
        ex = (slice(None), slice(None)) + (None,) * len(self.vshape)
        eo = (slice(None), slice(None)) + (None,) * len(other.vshape)
        a = self.c / fac[ex]
        b = other.c / fac[eo]
        vs = np.broadcast_shapes(self.vshape, other.vshape)
        b = b.reshape(b.shape + (1,) * (len(vs) - len(other.vshape)))
        out = np.zeros((N + 1, N + 1) + vs, dtype=complex)
        for l in range(N + 1):
            for m in range(N + 1 - l):
                alm = a[l, m]
                if not np.any(alm):
                    continue
                out[l:, m:] += alm * b[: N + 1 - l, : N + 1 - m]
        oo = (slice(None), slice(None)) + (None,) * (out.ndim - 2)
        out *= fac[oo]
        res = Series2(N, out)
        res.c *= res._mask()
        return res

    __rmul__ = __mul__

    def __pow__(self, e: int) -> "Series2":
        out = Series2.one(self.N) if not self.vshape else None
        base = self
        for _ in range(e):
            out = base if out is None else out * base
        return out

    def dz(self) -> "Series2":
        """Coefficients of ``dS/dz`` (shift ``c_{j+1,k}``)."""
        out = np.zeros_like(self.c)
        out[:-1] = self.c[1:]
        return Series2(self.N, out)

    def dzbar(self) -> "Series2":
        out = np.zeros_like(self.c)
        out[:, :-1] = self.c[:, 1:]
        return Series2(self.N, out)

    def conj_swap(self) -> "Series2":
        """Series of ``conj(S(z, zbar))`` as a function of ``(z, zbar)``."""
        return Series2(self.N, np.swapaxes(self.c, 0, 1).conj())

    def truncate(self, N: int) -> "Series2":
        out = Series2(N, np.zeros((N + 1, N + 1) + self.vshape, dtype=complex))
        M = min(N, self.N)
        out.c[: M + 1, : M + 1] = self.c[: M + 1, : M + 1]
        out.c *= out._mask()
        return out

    def order(self, d: int) -> dict:
        return {(j, d - j): self.c[j, d - j] for j in range(d + 1)}

    def __call__(self, z: complex):
        zb = np.conj(z)
        fac = _fact_table(self.N)
        total = 0
        for j in range(self.N + 1):
            for k in range(self.N + 1 - j):
                total = total + self.c[j, k] * z**j * zb**k / fac[j, k]
        return total


def binom2(j: int, k: int, l: int, m: int) -> int:
    return comb(j, l) * comb(k, m)


# -- quasi-polynomials ---------------------------------------------------------

_SAME_EXP = 1e-12


def _polyval(P: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Horner for vector polynomial ``P`` (deg+1, n) at points ``s`` -> (len(s), n)."""
    out = np.zeros((s.shape[0], P.shape[1]), dtype=complex)
    for coeff in P[::-1]:
        out = out * s[:, None] + coeff[None, :]
    return out


def _polyder(P: np.ndarray) -> np.ndarray:
    if P.shape[0] == 1:
        return np.zeros_like(P)
    return P[1:] * np.arange(1, P.shape[0])[:, None]


def _polyint0(P: np.ndarray) -> np.ndarray:
    """Antiderivative vanishing at ``s = 0``."""
    out = np.zeros((P.shape[0] + 1, P.shape[1]), dtype=complex)
    out[1:] = P / np.arange(1, P.shape[0] + 1)[:, None]
    return out


def _polymul_scalar(P: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros((P.shape[0] + t.shape[0] - 1, P.shape[1]), dtype=complex)
    for i, ti in enumerate(t):
        out[i : i + P.shape[0]] += ti * P
    return out


def _trim(P: np.ndarray) -> np.ndarray:
    k = P.shape[0]
    while k > 1 and not np.any(P[k - 1]):
        k -= 1
    return P[:k]


class QuasiPoly:
    """Vector-valued ``s -> sum_m p_m(s) exp(mu_m s)``."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms=()):
        self.n = n
        merged: list[list] = []
        for mu, P in terms:
            mu = complex(mu)
            P = np.asarray(P, dtype=complex).reshape(-1, n)
            for entry in merged:
                if abs(entry[0] - mu) <= _SAME_EXP * (1 + abs(mu)):
                    Q = entry[1]
                    if Q.shape[0] < P.shape[0]:
                        Q, P = P, Q
                    Q = Q.copy()
                    Q[: P.shape[0]] += P
                    entry[1] = Q
                    break
            else:
                merged.append([mu, P])
        self.terms = tuple((mu, _trim(P)) for mu, P in merged if np.any(P))

    @classmethod
    def zero(cls, n: int) -> "QuasiPoly":
        return cls(n)

    @classmethod
    def exp(cls, mu: complex, vec) -> "QuasiPoly":
        vec = np.asarray(vec, dtype=complex)
        return cls(vec.shape[0], [(mu, vec[None, :])])

    def __add__(self, other: "QuasiPoly") -> "QuasiPoly":
        if other is None:
            return self
        return QuasiPoly(self.n, self.terms + other.terms)

    def __sub__(self, other: "QuasiPoly") -> "QuasiPoly":
        return self + (-1.0) * other

    def __mul__(self, a) -> "QuasiPoly":
        return QuasiPoly(self.n, [(mu, a * P) for mu, P in self.terms])

    __rmul__ = __mul__

    def conj(self) -> "QuasiPoly":
        return QuasiPoly(self.n, [(mu.conjugate(), P.conj()) for mu, P in self.terms])

    def __call__(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros((s.shape[0], self.n), dtype=complex)
        for mu, P in self.terms:
            out += np.exp(mu * s)[:, None] * _polyval(P, s)
        return out

    def at(self, s: float) -> np.ndarray:
        return self(np.array([s]))[0]

    def derivative(self) -> "QuasiPoly":
        return QuasiPoly(self.n, [(mu, _add_padded(mu * P, _polyder(P))) for mu, P in self.terms])

    @property
    def exponents(self) -> list[complex]:
        return [mu for mu, _ in self.terms]

    @property
    def max_degree(self) -> int:
        return max((P.shape[0] - 1 for _, P in self.terms), default=0)

    def magnitude(self) -> float:
        return max((float(np.max(np.abs(P))) for _, P in self.terms), default=0.0)


def _add_padded(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    if P.shape[0] < Q.shape[0]:
        P, Q = Q, P
    out = P.copy()
    out[: Q.shape[0]] += Q
    return out


def _taylor_exp(d: complex, r: float) -> np.ndarray:
    """Coefficients of ``exp(d s)`` truncated where ``|d r|^K / K!`` drops below 1e-18."""
    coeffs = [1.0 + 0j]
    term = 1.0
    x = abs(d) * r
    k = 0
    while term * x > 1e-18 and k < 60:
        k += 1
        term = term * x / k
        coeffs.append(coeffs[-1] * d / k)
    return np.array(coeffs)


def particular_solution(c: complex, G: QuasiPoly, r: float, merge: float = 0.05) -> QuasiPoly:
    """A particular solution ``P`` of ``P' = c P + G`` on ``[-r, 0]``.

    A forcing exponent ``nu`` with ``|nu - c| r <= merge`` is rewritten on the
    homogeneous exponent through the Taylor series of ``exp((nu - c) s)``
    (exact to 1e-18 on the interval), then integrated as a polynomial; this
    covers exact resonance (secular terms) and removes the ``1/(nu - c)``
    cancellation near it.  Other exponents use the closed form
    ``q = sum_k (-1)^k p^{(k)} / d^{k+1}``.
    """
    out = []
    for nu, p in G.terms:
        d = nu - c
        if abs(d) * r <= merge:
            pt = _polymul_scalar(p, _taylor_exp(d, r))
            out.append((c, _polyint0(pt)))
        else:
            q = np.zeros_like(p)
            deriv = p
            sign = 1.0
            for k in range(p.shape[0]):
                q[: deriv.shape[0]] += sign * deriv / d ** (k + 1)
                deriv = _polyder(deriv)
                sign = -sign
            out.append((nu, q))
    return QuasiPoly(G.n, out)
