"""Characteristic roots of ``det(lam I - A - exp(-lam r) B) = 0``.

Roots are located by recursive subdivision of a scan window, using the
argument principle to count roots per rectangle, then polished with Newton
on the determinant.  The count over the whole window is compared against the
located roots, so a missed root is an error rather than a silent omission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryRoot, NoLeadingPair, SpectrumError
from .system_model import DelaySystem, ParamPoint, eval_matrices

SIMPLE_TOL = 1e-8
RESIDUAL_TOL = 1e-10
POLISH_TOL = 1e-12
TIE_TOL = 1e-9
_MAX_PHASE_STEP = math.pi / 5
_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class CharRoot:
    lam: complex
    residual: float
    simple: bool
    multiplicity: int = 1

    @property
    def real(self) -> float:
        return self.lam.real

    @property
    def imag(self) -> float:
        return self.lam.imag


@dataclass(frozen=True)
class ScanWindow:
    """Rectangle ``[-sigma, sigma] x [0, omega]`` in the upper half plane.

    Roots below the real axis are the conjugates of those found.
    """

    sigma: float
    omega: float

    @classmethod
    def default(cls, r: float) -> "ScanWindow":
        return cls(5.0 / r, 20.0 * math.pi / r)


@dataclass(frozen=True)
class H1Report:
    lambda1: complex | None
    mu: float | None
    omega: float | None
    others: tuple[CharRoot, ...]
    margin: float
    holds: bool
    delta: float
    window: ScanWindow
    window_covers_critical_disk: bool
    reason: str = ""
    roots: tuple[CharRoot, ...] = field(default=(), repr=False)


def scale(lam: complex, n: int) -> float:
    return (1.0 + abs(lam)) ** n


def char_matrix(sys: DelaySystem, alpha, lam: complex, derivative: bool = False):
    """``Delta(lam)``; with ``derivative=True`` return ``(Delta, Delta')``."""
    A, B = eval_matrices(sys, alpha)
    return _char_matrix(A, B, sys.r, lam, derivative)


def _char_matrix(A, B, r, lam, derivative=False):
    n = A.shape[0]
    e = np.exp(-lam * r)
    D = lam * np.eye(n) - A - e * B
    if derivative:
        return D, np.eye(n) + r * e * B
    return D


def _det_batch(A, B, r, lams: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    lams = np.asarray(lams, dtype=complex)
    if n == 1:
        return lams - A[0, 0] - np.exp(-lams * r) * B[0, 0]
    M = lams[:, None, None] * np.eye(n) - A - np.exp(-lams * r)[:, None, None] * B
    return np.linalg.det(M)


def _adjugate(M: np.ndarray) -> np.ndarray:
    n = M.shape[0]
    if n == 1:
        return np.ones((1, 1), dtype=M.dtype)
    adj = np.empty_like(M)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(M, j, axis=0), i, axis=1)
            adj[i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return adj


def det_and_derivative(A, B, r, lam):
    """``det Delta(lam)`` and its derivative via Jacobi's formula with the adjugate.

    The adjugate form stays finite at a root, where ``Delta^{-1}`` does not.
    """
    D, dD = _char_matrix(A, B, r, lam, derivative=True)
    return np.linalg.det(D), np.trace(_adjugate(D) @ dD)


# -- argument principle ------------------------------------------------------


def _edge_points(z0: complex, z1: complex, m: int) -> np.ndarray:
    return z0 + (z1 - z0) * np.linspace(0.0, 1.0, m + 1)[:-1]


def _winding(detf, corners, n: int, min_pts: int = 16):
    """Winding number of ``detf`` along the closed polygon ``corners``."""
    total = 0.0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        m = max(min_pts, int(math.ceil(abs(b - a) * 4)))
        pts = np.append(_edge_points(a, b, m), b)
        vals = detf(pts)
        for _ in range(30):
            sc = (1.0 + np.abs(pts)) ** n
            if np.any(np.abs(vals) < _BOUNDARY_TOL * sc) or not np.all(np.isfinite(vals)):
                raise BoundaryRoot(f"characteristic root on or next to contour segment {a}..{b}")
            steps = np.angle(vals[1:] / vals[:-1])
            bad = np.nonzero(np.abs(steps) > _MAX_PHASE_STEP)[0]
            if bad.size == 0:
                break
            mids = 0.5 * (pts[bad] + pts[bad + 1])
            if np.min(np.abs(pts[bad + 1] - pts[bad])) < 1e-13 * (1 + abs(a)):
                raise BoundaryRoot(f"contour refinement stalled near {mids[0]}")
            pts = np.insert(pts, bad + 1, mids)
            vals = np.insert(vals, bad + 1, detf(mids))
        else:
            raise BoundaryRoot("contour refinement did not converge")
        total += float(np.sum(steps))
    w = total / (2 * math.pi)
    k = int(round(w))
    if abs(w - k) > 1e-3:
        raise BoundaryRoot(f"non-integral winding number {w}")
    return k


def _rect_corners(rect):
    x0, x1, y0, y1 = rect
    return [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]


def count_roots(sys: DelaySystem, alpha, rect) -> int:
    """Number of roots (with multiplicity) inside ``rect = (re_lo, re_hi, im_lo, im_hi)``.

    Raises :class:`BoundaryRoot` when the contour passes through or too close
    to a root; perturbing the rectangle slightly resolves it.
    """
    A, B = eval_matrices(sys, alpha)
    return _count(A, B, sys.r, rect)


def _count(A, B, r, rect) -> int:
    n = A.shape[0]
    return _winding(lambda z: _det_batch(A, B, r, z), _rect_corners(rect), n)


# -- Newton polish -----------------------------------------------------------


def _newton(A, B, r, lam0: complex, mult: int = 1, maxit: int = 60, leash: float | None = None) -> complex:
    """Newton on ``det Delta``; with ``leash``, wandering that far from ``lam0`` is a failure."""
    lam = complex(lam0)
    n = A.shape[0]
    for _ in range(maxit):
        if leash is not None and abs(lam - lam0) > leash:
            raise SpectrumError(f"Newton left the neighbourhood of {lam0}")
        d, dd = det_and_derivative(A, B, r, lam)
        if d == 0:
            break
        if dd == 0 or not np.isfinite(dd):
            raise SpectrumError(f"Newton derivative vanished at {lam}")
        step = mult * d / dd
        lam -= step
        if abs(step) <= 4e-16 * (1 + abs(lam)) or abs(d) <= 1e-15 * scale(lam, n):
            # one more step for good measure, then stop
            d, dd = det_and_derivative(A, B, r, lam)
            if dd != 0 and d != 0:
                lam -= mult * d / dd
            break
    return lam


def _make_root(A, B, r, lam, mult) -> CharRoot:
    n = A.shape[0]
    d, dd = det_and_derivative(A, B, r, lam)
    sc = scale(lam, n)
    return CharRoot(complex(lam), float(abs(d)), bool(abs(dd) > SIMPLE_TOL * sc) and mult == 1, mult)


def _locate(A, B, r, rect, count, depth=0):
    """Recursive subdivision; returns a list of ``(lam, multiplicity)``."""
    if count == 0:
        return []
    x0, x1, y0, y1 = rect
    width, height = x1 - x0, y1 - y0
    center = complex(0.5 * (x0 + x1), 0.5 * (y0 + y1))
    size = max(width, height)
    if count == 1:
        try:
            lam = _newton(A, B, r, center, leash=2 * size)
        except SpectrumError:
            lam = None
        slack = 1e-9 * (1 + abs(center))
        if lam is not None and x0 - slack <= lam.real <= x1 + slack and y0 - slack <= lam.imag <= y1 + slack:
            return [(lam, 1)]
    if size < 1e-7 * (1 + abs(center)) or depth > 60:
        lam = _newton(A, B, r, center, mult=count)
        return [(lam, count)]
    # split along the longer side; nudge the cut off any root sitting on it
    for frac in (0.5, 0.5 + 1 / 64, 0.5 - 1 / 37, 0.5 + 1 / 9):
        if width >= height:
            cut = x0 + frac * width
            halves = [(x0, cut, y0, y1), (cut, x1, y0, y1)]
        else:
            cut = y0 + frac * height
            halves = [(x0, x1, y0, cut), (x0, x1, cut, y1)]
        try:
            counts = [_count(A, B, r, h) for h in halves]
        except BoundaryRoot:
            continue
        if sum(counts) == count:
            break
    else:
        if count >= 2:
            # every cut passes next to a root: a multiple root (or tight cluster)
            lam = _newton(A, B, r, center, mult=count)
            return [(lam, count)]
        raise SpectrumError(f"could not subdivide rectangle {rect} consistently")
    out = []
    for h, c in zip(halves, counts):
        out.extend(_locate(A, B, r, h, c, depth + 1))
    return out


def find_roots(sys: DelaySystem, alpha, window: ScanWindow | None = None) -> list[CharRoot]:
    """All roots with ``|Re| <= sigma`` and ``|Im| <= omega``, conjugates included.

    Sorted by ``(Re, Im)``.  The scan rectangle straddles the real axis
    slightly so real roots are interior points; its count certifies the result.
    """
    A, B = eval_matrices(sys, alpha)
    r = sys.r
    n = A.shape[0]
    window = window or ScanWindow.default(r)
    pad = min(0.25, 0.05 * window.omega)
    for attempt in range(6):
        bump = 1.0 + 1.3e-3 * attempt
        rect = (-window.sigma * bump, window.sigma * bump, -pad * (1 + 0.7e-3 * attempt), window.omega * bump)
        try:
            total = _count(A, B, r, rect)
            found = _locate(A, B, r, rect, total)
            break
        except BoundaryRoot:
            continue
    else:
        raise BoundaryRoot("scan window boundary hits characteristic roots after perturbation")
    if sum(m for _, m in found) != total:
        raise NoLeadingPair(f"root certification failed: {total} counted, {len(found)} located")

    roots: list[CharRoot] = []
    upper = []
    for lam, mult in found:
        if abs(lam.imag) <= 1e-9 * (1 + abs(lam)):
            lam = complex(lam.real, 0.0)
            lam = complex(_newton(A, B, r, lam, mult).real, 0.0)
            roots.append(_make_root(A, B, r, lam, mult))
        elif lam.imag > 0:
            upper.append((lam, mult))
        # roots with Im < 0 inside the pad strip mirror upper-half roots
    for lam, mult in upper:
        root = _make_root(A, B, r, lam, mult)
        roots.append(root)
        roots.append(CharRoot(root.lam.conjugate(), root.residual, root.simple, root.multiplicity))
    roots.sort(key=lambda c: (c.lam.real, c.lam.imag))
    for c in roots:
        if c.residual > RESIDUAL_TOL * scale(c.lam, n):
            raise SpectrumError(f"root {c.lam} has residual {c.residual:.3e}")
    return roots


def _leading(roots: list[CharRoot]) -> CharRoot:
    if not roots:
        raise NoLeadingPair("no characteristic roots in the scan window")
    top = max(c.lam.real for c in roots)
    cands = [c for c in roots if c.lam.real >= top - TIE_TOL * (1 + abs(top))]
    upper = [c for c in cands if c.lam.imag > 0]
    real = [c for c in cands if c.lam.imag == 0]
    if real and not upper:
        raise NoLeadingPair(f"rightmost root {real[0].lam} is real")
    if real or len(upper) > 1:
        raise NoLeadingPair(
            "rightmost roots tie: " + ", ".join(f"{c.lam:.6g}" for c in cands)
        )
    return upper[0]


def find_leading_pair(sys: DelaySystem, alpha, window: ScanWindow | None = None) -> CharRoot:
    """The root with ``Im > 0`` of the rightmost conjugate pair."""
    return _leading(find_roots(sys, alpha, window))


def polish_root(sys: DelaySystem, alpha, guess: complex) -> CharRoot:
    """Newton from ``guess`` without a scan (continuation along a parameter path)."""
    A, B = eval_matrices(sys, alpha)
    lam = _newton(A, B, sys.r, guess)
    return _make_root(A, B, sys.r, lam, 1)


def critical_disk_radius(sys: DelaySystem, alpha, delta: float) -> float:
    """Every root with ``Re >= -delta`` lies in ``|lam| <= ||A|| + ||B|| e^(delta r)``."""
    A, B = eval_matrices(sys, alpha)
    return float(np.linalg.norm(A, 2) + np.linalg.norm(B, 2) * math.exp(delta * sys.r))


def check_H1(sys: DelaySystem, alpha, delta: float | None = None, window: ScanWindow | None = None) -> H1Report:
    """Sampled check of the spectral hypothesis at one parameter point."""
    alpha = ParamPoint.of(alpha)
    delta = 0.01 / sys.r if delta is None else float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    window = window or ScanWindow.default(sys.r)
    rad = critical_disk_radius(sys, alpha, delta)
    covers = window.sigma >= rad and window.omega >= rad
    roots = find_roots(sys, alpha, window)

    lam1 = None
    try:
        lead = _leading(roots)
        lam1 = lead.lam
    except NoLeadingPair as exc:
        lead = None
        reason = str(exc)
    others = tuple(
        c for c in roots if lead is None or not (abs(c.lam - lam1) < 1e-12 * (1 + abs(lam1)) or abs(c.lam - lam1.conjugate()) < 1e-12 * (1 + abs(lam1)))
    )
    margin = max((c.lam.real for c in others), default=-math.inf)
    holds = False
    if lead is not None:
        if not lead.simple:
            reason = f"leading root {lam1} is not simple"
        elif lead.lam.real < -delta:
            reason = f"leading pair has Re = {lead.lam.real:.3g} < -delta"
        elif margin >= -delta:
            reason = f"another root has Re = {margin:.3g} >= -delta"
        else:
            holds = True
            reason = ""
    return H1Report(
        lambda1=lam1,
        mu=None if lam1 is None else lam1.real,
        omega=None if lam1 is None else lam1.imag,
        others=others,
        margin=margin,
        holds=holds,
        delta=delta,
        window=window,
        window_covers_critical_disk=covers,
        reason=reason,
        roots=tuple(roots),
    )
