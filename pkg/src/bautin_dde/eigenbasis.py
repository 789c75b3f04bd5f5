"""Critical eigenfunction, adjoint eigenfunction and their bilinear normalization.

For ``phi(s) = u e^{lam s}`` on ``[-r, 0]`` and ``psi(xi) = v e^{-lam xi}`` on
``[0, r]`` the bilinear form reduces to

    (psi, phi) = v u + int_{-r}^{0} psi(xi + r) B phi(xi) dxi

which for equal exponents is ``v Delta'(lam) u``.  The closed form is what the
pipeline uses; the Gauss-Legendre path is an independent check and also
serves arbitrary (sampled) ``phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import Degenerate, NormalizationSingular, NotARoot
from .spectrum import _char_matrix, scale
from .system_model import DelaySystem, ParamPoint, eval_matrices

NULL_RESIDUAL_TOL = 1e-8
SIMPLE_GAP = 1e6
QUAD_NODES = 64


@dataclass(frozen=True)
class EigenBasis:
    lambda1: complex
    u: np.ndarray  # phi_1(0), column
    v: np.ndarray  # psi_1(0), row, normalized so (psi_1, phi_1) = 1
    alpha: ParamPoint

    def phi(self, s) -> np.ndarray:
        """``phi_1(s)`` for an array of ``s``; shape ``(len(s), n)``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.exp(self.lambda1 * s)[:, None] * self.u[None, :]

    def rotated(self, theta: float) -> "EigenBasis":
        """Same basis with ``u -> e^{i theta} u`` (and ``v`` compensating)."""
        ph = np.exp(1j * theta)
        return replace(self, u=self.u * ph, v=self.v / ph)


def _null_vectors(D: np.ndarray, n: int, lam: complex):
    U, S, Vh = np.linalg.svd(D)
    smin = S[-1]
    if smin > NULL_RESIDUAL_TOL * scale(lam, n):
        raise NotARoot(f"{lam} is not a characteristic root (smallest singular value {smin:.3e})")
    if n > 1 and S[-2] < max(SIMPLE_GAP * smin, NULL_RESIDUAL_TOL * scale(lam, n)):
        raise Degenerate(f"null space of Delta({lam}) has dimension > 1")
    return Vh[-1].conj(), U[:, -1].conj()


def _fix_phase(x: np.ndarray) -> np.ndarray:
    x = x / np.linalg.norm(x)
    mags = np.abs(x)
    k = int(np.nonzero(mags >= mags.max() * (1 - 1e-9))[0][0])
    return x * (np.abs(x[k]) / x[k])


def right_eigenvector(sys: DelaySystem, alpha, lam1: complex) -> np.ndarray:
    """Unit ``u`` with ``Delta(lam1) u = 0``; largest component real positive."""
    A, B = eval_matrices(sys, alpha)
    u, _ = _null_vectors(_char_matrix(A, B, sys.r, lam1), sys.n, lam1)
    return _fix_phase(u)


def adjoint_eigenvector(sys: DelaySystem, alpha, lam1: complex) -> np.ndarray:
    """Unit row ``v`` with ``v Delta(lam1) = 0`` (before normalization)."""
    A, B = eval_matrices(sys, alpha)
    _, v = _null_vectors(_char_matrix(A, B, sys.r, lam1), sys.n, lam1)
    return _fix_phase(v)


def _exp_weight(lam_a: complex, lam_b: complex, r: float) -> complex:
    """``int_{-r}^0 e^{-lam_a (xi + r)} e^{lam_b xi} dxi`` in closed form."""
    d = lam_b - lam_a
    if abs(d * r) < 1e-6:
        # series of (1 - e^{-d r}) / d
        return np.exp(-lam_a * r) * r * (1 - d * r / 2 + (d * r) ** 2 / 6 - (d * r) ** 3 / 24)
    return np.exp(-lam_a * r) * (1 - np.exp(-d * r)) / d


def gauss_legendre(a: float, b: float, m: int = QUAD_NODES):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def bilinear_form(v, lam_a, u, lam_b, sys: DelaySystem, alpha, method: str = "closed") -> complex:
    """``(psi, phi)`` for ``psi(xi) = v e^{-lam_a xi}``, ``phi(s) = u e^{lam_b s}``."""
    _, B = eval_matrices(sys, alpha)
    return _bilinear(np.asarray(v), lam_a, np.asarray(u), lam_b, B, sys.r, method)


def _bilinear(v, lam_a, u, lam_b, B, r, method="closed"):
    head = v @ u
    if method == "closed":
        return complex(head + _exp_weight(lam_a, lam_b, r) * (v @ B @ u))
    if method == "quadrature":
        return complex(head + bilinear_quadrature(v, lam_a, lambda s: np.exp(lam_b * s)[:, None] * u, B, r, include_head=False))
    raise ValueError(f"unknown method {method!r}")


def bilinear_quadrature(v, lam_a, phi: Callable[[np.ndarray], np.ndarray], B, r, m: int = QUAD_NODES, include_head: bool = True, panels: int = 1) -> complex:
    """``(psi, phi)`` for ``psi(xi) = v e^{-lam_a xi}`` and an arbitrary ``phi``.

    ``phi`` maps an array of ``s in [-r, 0]`` to shape ``(len(s), n)``.
    ``panels > 1`` uses composite Gauss-Legendre (for piecewise-smooth ``phi``).
    """
    edges = np.linspace(-r, 0.0, panels + 1)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(a, b, m)
        nodes.append(x)
        weights.append(w)
    s = np.concatenate(nodes)
    w = np.concatenate(weights)
    vals = np.asarray(phi(s))
    kern = np.exp(-lam_a * (s + r))
    integral = np.sum(w * kern * (vals @ (v @ B)))
    if include_head:
        integral = integral + v @ np.asarray(phi(np.array([0.0])))[0]
    return complex(integral)


def normalize_basis(u, v_raw, lam1: complex, sys: DelaySystem, alpha) -> EigenBasis:
    """Scale ``v_raw`` so that ``v Delta'(lam1) u = 1``."""
    A, B = eval_matrices(sys, alpha)
    _, dD = _char_matrix(A, B, sys.r, lam1, derivative=True)
    u = np.asarray(u, dtype=complex)
    v_raw = np.asarray(v_raw, dtype=complex)
    k = v_raw @ dD @ u
    if abs(k) < 1e-12 * np.linalg.norm(v_raw) * np.linalg.norm(u):
        raise NormalizationSingular(f"v Delta'(lam) u = {k:.3e}: root is not simple")
    return EigenBasis(complex(lam1), u, v_raw / k, ParamPoint.of(alpha))


def build_basis(sys: DelaySystem, alpha, lam1: complex) -> EigenBasis:
    u = right_eigenvector(sys, alpha, lam1)
    v = adjoint_eigenvector(sys, alpha, lam1)
    return normalize_basis(u, v, lam1, sys, alpha)


def basis_checks(basis: EigenBasis, sys: DelaySystem) -> dict:
    """Residuals of every ``EigenBasis`` invariant (all should be ~0)."""
    A, B = eval_matrices(sys, basis.alpha)
    lam, u, v, r = basis.lambda1, basis.u, basis.v, sys.r
    D = _char_matrix(A, B, r, lam)
    pp = _bilinear(v, lam, u, lam, B, r)
    pq = _bilinear(v, lam, u.conj(), lam.conjugate(), B, r)
    pp_q = _bilinear(v, lam, u, lam, B, r, "quadrature")
    pq_q = _bilinear(v, lam, u.conj(), lam.conjugate(), B, r, "quadrature")
    return {
        "right_residual": float(np.linalg.norm(D @ u)),
        "left_residual": float(np.linalg.norm(v @ D)),
        "psi_phi_minus_1": abs(pp - 1),
        "psi_phibar": abs(pq),
        "closed_vs_quadrature": max(abs(pp - pp_q), abs(pq - pq_q)),
    }
