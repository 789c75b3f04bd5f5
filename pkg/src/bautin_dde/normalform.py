"""Lyapunov coefficients, the (nu, beta) coordinates and Bautin region geometry.

All ``g_jk`` follow the factorial convention of :mod:`bautin_dde.manifold`
(``g = sum g_jk z^j zbar^k / (j! k!)``).  That is also the convention of the
closed formulas below, so no conversion happens anywhere.

Normalization of ``l2``: for ``z' = i w z + c1 z|z|^2 + c2 z|z|^4`` the
formula returns ``Re(c2) / w`` (pinned by the planar normal-form oracle in the
test suite), the same scale as ``l1 = Re(c1) / w``.  With that scale the radial
equation near the Hopf point reads, in time ``w t``,

    rho' = rho (nu1 + nu2 rho^2 + l2 rho^4)

and the substitution ``rho -> |l2|^{-1/4} rho`` gives the unit-quintic form
``rho' = rho (beta1 + beta2 rho^2 + s rho^4)`` with ``beta2 = nu2 / sqrt|l2|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .eigenbasis import EigenBasis, build_basis
from .errors import (
    BautinError,
    DegenerateL2,
    NoConvergence,
    NoCycles,
    StencilFailure,
    UnsupportedSign,
)
from .manifold import ManifoldExpansion, expand
from .spectrum import H1Report, ScanWindow, check_H1, find_leading_pair
from .system_model import DelaySystem, ParamPoint

REGION_TAGS = ("BautinPoint", "NoCycleUnstable", "TwoCycles", "FoldCurve", "OutOfScope")
REGION_TOL = 1e-9
H2_DET_TOL = 1e-6
L2_TOL = 1e-10
MU_TOL = 1e-10
L1_TOL = 1e-8


@dataclass(frozen=True)
class LyapunovPair:
    l1: float
    l2: float


@dataclass(frozen=True)
class NuCoords:
    nu1: float
    nu2: float


@dataclass(frozen=True)
class BetaCoords:
    beta1: float
    beta2: float
    s: int


@dataclass(frozen=True)
class RegionClass:
    tag: str
    rho1: float | None = None
    rho2: float | None = None

    @property
    def cycle_count(self) -> int:
        return {"TwoCycles": 2, "FoldCurve": 1}.get(self.tag, 0)


# -- Lyapunov coefficients ---------------------------------------------------------


def _g(g: dict, j: int, k: int) -> complex:
    return complex(g.get((j, k), 0.0))


def first_lyapunov(g: dict, omega: float) -> float:
    g20, g11, g21 = _g(g, 2, 0), _g(g, 1, 1), _g(g, 2, 1)
    return float((1j * g20 * g11 + omega * g21).real / (2 * omega**2))


def second_lyapunov(g: dict, omega: float) -> float:
    """Second Lyapunov coefficient at a Hopf point (Kuznetsov's closed formula)."""
    G = lambda j, k: _g(g, j, k)  # noqa: E731
    c = np.conj
    g20, g11, g02 = G(2, 0), G(1, 1), G(0, 2)
    g30, g21, g12, g03 = G(3, 0), G(2, 1), G(1, 2), G(0, 3)
    g40, g31, g22, g13 = G(4, 0), G(3, 1), G(2, 2), G(1, 3)
    g32 = G(3, 2)
    w = omega
    t1 = g32.real / w
    t2 = (g20 * c(g31) - g11 * (4 * g31 + 3 * c(g22)) - g02 * (g40 + c(g13)) / 3 - g30 * g12).imag / w**2
    t3 = (
        (
            g20 * (c(g11) * (3 * g12 - c(g30)) + g02 * (c(g12) - g30 / 3) + c(g02) * g03 / 3)
            + g11 * (c(g02) * (5 * c(g30) / 3 + 3 * g12) + g02 * c(g03) / 3 - 4 * g11 * g30)
        ).real
        + 3 * (g20 * g11).imag * g21.imag
    ) / w**3
    t4 = (
        (g11 * c(g02) * (c(g20) ** 2 - 3 * c(g20) * g11 - 4 * g11**2)).imag
        + (g20 * g11).imag * (3 * (g20 * g11).real - 2 * abs(g02) ** 2)
    ) / w**4
    return float((t1 + t2 + t3 + t4) / 12)


# -- pointwise pipeline ----------------------------------------------------------------


@dataclass
class HopfData:
    """Everything the pipeline knows at one parameter point."""

    alpha: ParamPoint
    lambda1: complex
    basis: EigenBasis
    expansion: ManifoldExpansion
    l1: float
    l2: float | None
    h1: H1Report | None = None

    @property
    def mu(self) -> float:
        return self.lambda1.real

    @property
    def omega(self) -> float:
        return self.lambda1.imag

    @property
    def nu(self) -> NuCoords:
        return NuCoords(self.mu / self.omega, self.l1)


def hopf_data(
    sys: DelaySystem,
    alpha,
    order: int = 5,
    delta: float | None = None,
    window: ScanWindow | None = None,
    require_h1: bool = False,
) -> HopfData:
    """Spectrum -> eigenbasis -> manifold -> Lyapunov coefficients at ``alpha``.

    ``order`` 3 is enough for ``l1``; 5 adds ``l2``.  With ``require_h1`` the
    full H1 check runs first and its failure raises ``StencilFailure``.
    """
    alpha = ParamPoint.of(alpha)
    h1 = None
    if require_h1:
        h1 = check_H1(sys, alpha, delta, window)
        if not h1.holds:
            raise StencilFailure(f"H1 fails at ({alpha.alpha1:.6g}, {alpha.alpha2:.6g}): {h1.reason}")
        lam = h1.lambda1
    else:
        lam = find_leading_pair(sys, alpha, window).lam
    basis = build_basis(sys, alpha, lam)
    exp = expand(sys, alpha, basis, order)
    l1 = first_lyapunov(exp.g, lam.imag)
    l2 = second_lyapunov(exp.g, lam.imag) if order >= 5 else None
    return HopfData(alpha, lam, basis, exp, l1, l2, h1)


def nu_map(sys: DelaySystem, alpha, window: ScanWindow | None = None) -> NuCoords:
    return hopf_data(sys, alpha, order=3, window=window).nu


@dataclass(frozen=True)
class H2Result:
    jacobian: np.ndarray
    det: float
    regular: bool
    step: float


def default_fd_step(alpha0) -> float:
    return 1e-4 * (1 + float(np.linalg.norm(ParamPoint.of(alpha0).as_array())))


def check_H2(sys: DelaySystem, alpha0, h: float | None = None, delta: float | None = None, window: ScanWindow | None = None) -> H2Result:
    """Central-difference Jacobian of ``alpha -> nu`` and the regularity verdict."""
    alpha0 = ParamPoint.of(alpha0)
    h = default_fd_step(alpha0) if h is None else float(h)
    a = alpha0.as_array()
    J = np.zeros((2, 2))
    for col in range(2):
        e = np.zeros(2)
        e[col] = h
        plus = hopf_data(sys, a + e, 3, delta, window, require_h1=True).nu
        minus = hopf_data(sys, a - e, 3, delta, window, require_h1=True).nu
        J[0, col] = (plus.nu1 - minus.nu1) / (2 * h)
        J[1, col] = (plus.nu2 - minus.nu2) / (2 * h)
    det = float(np.linalg.det(J))
    return H2Result(J, det, abs(det) > H2_DET_TOL, h)


# -- beta coordinates and geometry -------------------------------------------------------


def beta_map(nu: NuCoords, l2_at_alpha: float) -> BetaCoords:
    """``beta1 = nu1``, ``beta2 = nu2 / sqrt|l2|``, ``s = sign l2``."""
    if not math.isfinite(l2_at_alpha) or abs(l2_at_alpha) < L2_TOL:
        raise DegenerateL2(f"|l2| = {abs(l2_at_alpha):.3e} is below {L2_TOL:g}")
    return BetaCoords(float(nu.nu1), float(nu.nu2 / math.sqrt(abs(l2_at_alpha))), 1 if l2_at_alpha > 0 else -1)


def classify_region(beta: BetaCoords, tol: float = REGION_TOL) -> RegionClass:
    if beta.s != 1:
        raise UnsupportedSign("l2 < 0 (s = -1) is outside the analyzed case")
    b1, b2 = beta.beta1, beta.beta2
    if math.hypot(b1, b2) <= tol:
        return RegionClass("BautinPoint")
    if b1 < -tol:
        return RegionClass("OutOfScope")
    root = math.sqrt(max(b1, 0.0))
    if abs(b2 + 2 * root) <= tol:
        rho = math.sqrt(max(-b2 / 2, 0.0))
        return RegionClass("FoldCurve", rho, rho)
    if b2 < -2 * root - tol:
        rho1, rho2 = _positive_roots(b1, b2)
        return RegionClass("TwoCycles", rho1, rho2)
    return RegionClass("NoCycleUnstable")


def _positive_roots(b1: float, b2: float) -> tuple[float, float]:
    # roots in q = rho^2 of q^2 + b2 q + b1, computed without cancellation
    disc = math.sqrt(max(b2 * b2 - 4 * b1, 0.0))
    q2 = (-b2 + disc) / 2
    q1 = b1 / q2 if q2 > 0 else 0.0
    return math.sqrt(max(q1, 0.0)), math.sqrt(max(q2, 0.0))


def cycle_amplitudes(beta: BetaCoords, tol: float = REGION_TOL) -> tuple[float, float]:
    """``(rho1, rho2)``, the positive roots of ``beta1 + beta2 rho^2 + rho^4``.

    ``rho1`` is the attracting (inner) cycle and ``rho2`` the repelling one.
    """
    region = classify_region(beta, tol)
    if region.tag not in ("TwoCycles", "FoldCurve"):
        raise NoCycles(f"no limit cycles in region {region.tag}")
    return region.rho1, region.rho2


def z_amplitudes(rho: tuple[float, float], l2: float) -> tuple[float, float]:
    """Undo the quintic rescaling: amplitudes in the ``z`` coordinate."""
    k = abs(l2) ** -0.25
    return rho[0] * k, rho[1] * k


# -- locating the Bautin point -------------------------------------------------------------


@dataclass(frozen=True)
class BautinSearch:
    alpha0: ParamPoint
    iterations: int
    mu: float
    l1: float


def _hopf_residual(sys, a, window) -> np.ndarray:
    d = hopf_data(sys, a, order=3, window=window)
    return np.array([d.mu, d.l1])


def find_bautin(
    sys: DelaySystem,
    alpha_guess,
    max_iter: int = 40,
    window: ScanWindow | None = None,
    fd_step: float = 1e-6,
    return_info: bool = False,
):
    """Damped Newton on ``(mu(alpha), l1(alpha)) = (0, 0)``."""
    a = ParamPoint.of(alpha_guess).as_array()
    F = _hopf_residual(sys, a, window)
    it = 0
    while not (abs(F[0]) <= MU_TOL and abs(F[1]) <= L1_TOL):
        if it >= max_iter:
            raise NoConvergence(f"no Bautin point after {max_iter} iterations (mu = {F[0]:.3e}, l1 = {F[1]:.3e})")
        it += 1
        h = fd_step * (1 + np.linalg.norm(a))
        J = np.zeros((2, 2))
        for col in range(2):
            e = np.zeros(2)
            e[col] = h
            J[:, col] = (_hopf_residual(sys, a + e, window) - _hopf_residual(sys, a - e, window)) / (2 * h)
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] <= 1e-10 * max(sv[0], 1e-300):
            raise NoConvergence(
                f"Jacobian of (mu, l1) is singular at ({a[0]:.6g}, {a[1]:.6g}); the two parameters "
                "do not unfold a Bautin point here"
            )
        step = np.linalg.solve(J, -F)
        norm0 = np.linalg.norm(F)
        t = 1.0
        while True:
            trial = a + t * step
            try:
                Ft = _hopf_residual(sys, trial, window)
            except BautinError:
                Ft = None
            if Ft is not None and np.linalg.norm(Ft) < (1 - 1e-4 * t) * norm0:
                break
            t /= 2
            if t < 1e-6:
                raise NoConvergence(f"line search stalled at ({a[0]:.6g}, {a[1]:.6g}), |F| = {norm0:.3e}")
        a, F = trial, Ft
    out = ParamPoint(float(a[0]), float(a[1]))
    if return_info:
        return out, BautinSearch(out, it, float(F[0]), float(F[1]))
    return out


# -- assembled analysis ------------------------------------------------------------------


@dataclass
class PointRecord:
    alpha: ParamPoint
    lambda1: complex | None
    h1: bool
    nu: NuCoords | None
    lyapunov: LyapunovPair | None
    beta: BetaCoords | None
    region: RegionClass | None
    z_amplitudes: tuple[float, float] | None = None
    note: str = ""


@dataclass
class BautinAnalysis:
    alpha0: ParamPoint | None
    omega0: float | None
    l1: float | None
    l2: float | None
    h1: H1Report | None
    h2: H2Result | None
    h1_holds: bool
    h2_holds: bool
    h3_holds: bool
    search: BautinSearch | None = None
    notes: list = field(default_factory=list)

    @property
    def bautin(self) -> bool:
        return self.h1_holds and self.h2_holds and self.h3_holds


def analyze_bautin(
    sys: DelaySystem,
    alpha0=None,
    guess=None,
    delta: float | None = None,
    window: ScanWindow | None = None,
    fd_step: float | None = None,
) -> BautinAnalysis:
    """H1/H2/H3 at ``alpha0`` (located by :func:`find_bautin` from ``guess`` if absent).

    Hypothesis failures are verdicts, not exceptions: the returned record says
    which one failed and why.
    """
    notes = []
    search = None
    if alpha0 is None:
        try:
            alpha0, search = find_bautin(sys, guess, window=window, return_info=True)
        except BautinError as exc:
            notes.append(f"bautin search: {exc}")
            return BautinAnalysis(None, None, None, None, None, None, False, False, False, None, notes)
    alpha0 = ParamPoint.of(alpha0)
    h1 = check_H1(sys, alpha0, delta, window)
    if not h1.holds:
        notes.append(f"H1: {h1.reason}")
    data = hopf_data(sys, alpha0, 5, delta, window)
    h2 = None
    h2_ok = abs(data.l1) <= L1_TOL and abs(data.l2) > L2_TOL
    if abs(data.l1) > L1_TOL:
        notes.append(f"H2: l1(alpha0) = {data.l1:.6g} is not zero")
    if abs(data.l2) <= L2_TOL:
        notes.append("H2: l2(alpha0) vanishes")
    try:
        h2 = check_H2(sys, alpha0, fd_step, delta, window)
        if not h2.regular:
            notes.append(f"H2: |det J| = {abs(h2.det):.3e} <= {H2_DET_TOL:g}")
        h2_ok = h2_ok and h2.regular
    except BautinError as exc:
        notes.append(f"H2: {exc}")
        h2_ok = False
    h3_ok = data.l2 > L2_TOL
    if not h3_ok:
        notes.append(f"H3: l2(alpha0) = {data.l2:.6g} is not positive")
    return BautinAnalysis(alpha0, data.omega, data.l1, data.l2, h1, h2, h1.holds, h2_ok, h3_ok, search, notes)


def classify_point(sys: DelaySystem, alpha, s: int = 1, delta: float | None = None, window: ScanWindow | None = None, tol: float = REGION_TOL) -> PointRecord:
    """``{alpha, nu, beta, region}`` at one query point; ``s`` is ``sign l2(alpha0)``."""
    alpha = ParamPoint.of(alpha)
    h1 = check_H1(sys, alpha, delta, window)
    if h1.lambda1 is None:
        return PointRecord(alpha, None, False, None, None, None, None, note=h1.reason)
    data = hopf_data(sys, alpha, 5, delta, window)
    rec = PointRecord(alpha, data.lambda1, h1.holds, data.nu, LyapunovPair(data.l1, data.l2), None, None)
    if not h1.holds:
        rec.note = f"H1: {h1.reason}"
    try:
        beta = beta_map(data.nu, data.l2)
    except DegenerateL2 as exc:
        rec.note = str(exc)
        return rec
    rec.beta = beta
    if s != 1 or beta.s != 1:
        rec.note = "l2 < 0: outside the analyzed case"
        return rec
    rec.region = classify_region(beta, tol)
    if rec.region.rho1 is not None:
        rec.z_amplitudes = z_amplitudes((rec.region.rho1, rec.region.rho2), data.l2)
    return rec
