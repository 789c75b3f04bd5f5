"""Method-of-steps integration and limit-cycle detection in the ``z`` projection.

The mesh is aligned to the delay (``h = r / m``), so the delayed argument of
every Runge-Kutta stage falls on a stored grid point or a stored step midpoint;
the midpoint is read from the cubic Hermite interpolant of that step.  Kinks of
the solution at multiples of ``r`` therefore always sit on mesh points.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .eigenbasis import EigenBasis, gauss_legendre
from .errors import Inconclusive, NonFinite, StepTooLarge
from .system_model import DelaySystem, eval_matrices, taylor_f


@dataclass(frozen=True)
class HistoryFn:
    """Initial segment on ``[-r, 0]``: a constant vector or ``a 2 Re(e^{lam s} u)``."""

    kind: str
    value: np.ndarray | None = None
    amplitude: float = 0.0
    lam: complex = 0j
    u: np.ndarray | None = None

    @classmethod
    def constant(cls, vec) -> "HistoryFn":
        return cls("constant", value=np.atleast_1d(np.asarray(vec, dtype=float)))

    @classmethod
    def eigenplane(cls, basis: EigenBasis, a: float) -> "HistoryFn":
        return cls("eigenplane", amplitude=float(a), lam=basis.lambda1, u=np.asarray(basis.u))

    def __call__(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.kind == "constant":
            return np.broadcast_to(self.value, (s.shape[0], self.value.shape[0])).copy()
        return self.amplitude * 2 * np.real(np.exp(self.lam * s)[:, None] * self.u[None, :])


@dataclass
class Trajectory:
    """Grid solution with stored derivatives; :meth:`at` is the Hermite interpolant."""

    r: float
    h: float
    t: np.ndarray
    X: np.ndarray
    dX: np.ndarray
    history: Callable
    escaped: bool = False

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def at(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((times.shape[0], self.X.shape[1]))
        past = times < 0
        if np.any(past):
            out[past] = self.history(times[past])
        fut = ~past
        if np.any(fut):
            tt = times[fut]
            k = np.clip(np.floor(tt / self.h + 1e-9).astype(int), 0, len(self.t) - 2)
            th = (tt - self.t[k]) / self.h
            th = th[:, None]
            x0, x1 = self.X[k], self.X[k + 1]
            d0, d1 = self.dX[k] * self.h, self.dX[k + 1] * self.h
            h00 = (1 + 2 * th) * (1 - th) ** 2
            h10 = th * (1 - th) ** 2
            h01 = th**2 * (3 - 2 * th)
            h11 = th**2 * (th - 1)
            out[fut] = h00 * x0 + h10 * d0 + h01 * x1 + h11 * d1
        return out


def _rhs_factory(sys: DelaySystem, alpha):
    A, B = eval_matrices(sys, alpha)
    f = taylor_f(sys, alpha).evaluator()

    def rhs(x, y):
        return A @ x + B @ y + f(x, y)

    return rhs


def integrate(
    sys: DelaySystem,
    alpha,
    history: HistoryFn,
    T: float,
    h: float,
    escape_radius: float | None = None,
    monitor: Callable[["Trajectory"], bool] | None = None,
    check_every: int | None = None,
) -> Trajectory:
    """Classical RK4 by the method of steps on ``[0, T]``.

    ``h`` is shrunk to ``r / ceil(r / h)`` so the mesh hits multiples of ``r``.
    When ``|x|`` exceeds ``escape_radius`` (or turns non-finite with a radius
    set) the run stops with ``escaped = True``; without a radius a non-finite
    state raises ``NonFinite``.  ``monitor`` is called every ``check_every``
    steps with the partial trajectory and stops the run by returning True.
    """
    r = sys.r
    if h > r / 10 * (1 + 1e-12):
        raise StepTooLarge(f"step {h} exceeds r/10 = {r / 10}")
    m = math.ceil(r / h - 1e-9)
    h = r / m
    K = int(round(T / h))
    n = sys.n
    rhs = _rhs_factory(sys, alpha)

    # delayed values at grid points and midpoints of the history
    s_grid = -r + h * np.arange(m + 1)
    hist_grid = history(s_grid)
    hist_mid = history(s_grid[:-1] + h / 2)

    t = h * np.arange(K + 1)
    X = np.zeros((K + 1, n))
    dX = np.zeros((K + 1, n))
    X[0] = history(np.array([0.0]))[0]
    dX[0] = rhs(X[0], hist_grid[0])
    check_every = check_every or max(m, 1)
    with np.errstate(over="ignore", invalid="ignore"):
        last, escaped = _steps(rhs, K, m, h, t, X, dX, hist_grid, hist_mid, history, r, escape_radius, monitor, check_every)
    return Trajectory(r, h, t[: last + 1], X[: last + 1], dX[: last + 1], history, escaped)


def _steps(rhs, K, m, h, t, X, dX, hist_grid, hist_mid, history, r, escape_radius, monitor, check_every):
    escaped = False
    last = K
    for k in range(K):
        j = k - m
        if j < 0:
            y0, ym, y1 = hist_grid[k], hist_mid[k], hist_grid[k + 1]
        else:
            y0 = X[j]
            y1 = X[j + 1]
            ym = 0.5 * (y0 + y1) + h * (dX[j] - dX[j + 1]) / 8
        x = X[k]
        k1 = dX[k]
        k2 = rhs(x + 0.5 * h * k1, ym)
        k3 = rhs(x + 0.5 * h * k2, ym)
        k4 = rhs(x + h * k3, y1)
        xn = x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        ok = np.all(np.isfinite(xn))
        if not ok or (escape_radius is not None and np.linalg.norm(xn) > escape_radius):
            if escape_radius is None:
                raise NonFinite(f"state became non-finite at t = {t[k + 1]:.6g}")
            escaped = True
            last = k
            break
        X[k + 1] = xn
        y1n = hist_grid[k + 1] if j + 1 < 0 else X[j + 1]
        dX[k + 1] = rhs(xn, y1n)
        if monitor is not None and (k + 1) % check_every == 0:
            part = Trajectory(r, h, t[: k + 2], X[: k + 2], dX[: k + 2], history)
            if monitor(part):
                last = k + 1
                break
    return last, escaped


# -- z projection ---------------------------------------------------------------------


class Projector:
    """``z(t) = (psi_1, x_t)`` by composite Gauss-Legendre quadrature.

    One three-point panel per mesh step: the integrand is a cubic Hermite
    piece times a smooth exponential, so this is accurate to well below the
    integration error.
    """

    def __init__(self, basis: EigenBasis, B: np.ndarray, r: float, h: float, nodes: int = 3):
        m = max(1, int(round(r / h)))
        edges = np.linspace(-r, 0.0, m + 1)
        s, w = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            x, wt = gauss_legendre(a, b, nodes)
            s.append(x)
            w.append(wt)
        self.s = np.concatenate(s)
        kern = np.exp(-basis.lambda1 * (self.s + r)) * np.concatenate(w)
        self.weights = kern[:, None] * (basis.v @ B)[None, :]
        self.v = basis.v

    def __call__(self, traj: Trajectory, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        pts = (times[:, None] + self.s[None, :]).ravel()
        vals = traj.at(pts).reshape(times.shape[0], self.s.shape[0], -1)
        head = traj.at(times) @ self.v
        return head + np.einsum("tqn,qn->t", vals, self.weights)


def project_z(traj: Trajectory, basis: EigenBasis, sys: DelaySystem, alpha, t) -> complex | np.ndarray:
    _, B = eval_matrices(sys, alpha)
    z = Projector(basis, B, sys.r, traj.h)(traj, t)
    return complex(z[0]) if np.ndim(t) == 0 else z


def write_csv(traj: Trajectory, dest, basis: EigenBasis | None = None, sys: DelaySystem | None = None, alpha=None) -> None:
    """Columns ``t, x1..xn, re_z, im_z`` (``z`` left blank without a basis).

    ``dest`` is a path or an open text stream.
    """
    if not hasattr(dest, "write"):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_csv(traj, fh, basis, sys, alpha)
        return
    n = traj.X.shape[1]
    z = None
    if basis is not None:
        z = project_z(traj, basis, sys, alpha, traj.t)
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + ["re_z", "im_z"])
    for i, ti in enumerate(traj.t):
        zr = [f"{z[i].real:.15g}", f"{z[i].imag:.15g}"] if z is not None else ["", ""]
        w.writerow([f"{ti:.15g}"] + [f"{x:.15g}" for x in traj.X[i]] + zr)


# -- cycle detection ---------------------------------------------------------------------


@dataclass(frozen=True)
class Cycle:
    amplitude: float
    period: float | None
    stability: str  # "attracting" or "repelling"
    uncertainty: float = 0.0


@dataclass
class CycleFindings:
    cycles: list = field(default_factory=list)
    escape: bool = False
    probes: int = 0
    notes: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.cycles)


@dataclass(frozen=True)
class DetectOptions:
    a_min: float = 0.01
    a_max: float = 1.0
    escape_radius: float = 1.0
    conv_horizon: float | None = None  # default 200 r
    probe_horizon: float | None = None  # default 400 r
    max_extensions: int = 3  # the attracting search may double its horizon this often
    h: float | None = None  # default r / 20
    rel_tol: float = 1e-3  # per-revolution amplitude change that counts as settled
    bracket_rel: float = 0.005
    decay_ratio: float = 0.05  # below a_start * decay_ratio the run has reached the equilibrium

    @classmethod
    def from_prediction(cls, rho: tuple[float, float] | None, **kw) -> "DetectOptions":
        """Defaults scaled to predicted ``z`` amplitudes (inner, outer) when known."""
        if rho is None:
            return cls(**kw)
        base = dict(a_min=0.5 * rho[0], a_max=3 * rho[1], escape_radius=10 * rho[1])
        base.update(kw)
        return cls(**base)


class _Watcher:
    """Per-revolution mean of ``|z|`` over a growing trajectory."""

    def __init__(self, proj: Projector, omega: float, samples: int = 24):
        self.proj = proj
        self.period = 2 * math.pi / omega
        self.samples = samples
        self.means: list[float] = []
        self.peak = 0.0
        self.done_until = 0.0

    def update(self, traj: Trajectory) -> None:
        P = self.period
        while self.done_until + P <= traj.t_end + 1e-12:
            a = self.done_until
            ts = a + P * (np.arange(self.samples) + 0.5) / self.samples
            zs = np.abs(self.proj(traj, ts))
            self.means.append(float(np.mean(zs)))
            self.peak = max(self.peak, float(zs.max()))
            self.done_until = a + P


def _aitken(seq: list[float]) -> float:
    a0, a1, a2 = seq[-3:]
    d1, d2 = a1 - a0, a2 - a1
    if d1 == 0 or not 0 < d2 / d1 < 0.95:
        return a2
    q = d2 / d1
    return a2 + d2 * q / (1 - q)


def _period(proj: Projector, traj: Trajectory, span: float) -> float | None:
    t1 = traj.t_end
    t0 = max(0.0, t1 - span)
    ts = np.linspace(t0, t1, 400)
    ph = np.unwrap(np.angle(proj(traj, ts)))
    if abs(ph[-1] - ph[0]) < 1e-12:
        return None
    return float(2 * math.pi * (t1 - t0) / abs(ph[-1] - ph[0]))


def _attracting(sys, alpha, basis, proj, opts, h):
    """Forward run from ``a_min``: ('cycle', amp, period) | ('decay',) | ('escape',)."""
    omega = basis.lambda1.imag
    horizon = opts.conv_horizon or 200 * sys.r
    hist = HistoryFn.eigenplane(basis, opts.a_min)
    for _ in range(opts.max_extensions + 1):
        watch = _Watcher(proj, omega)
        state = {}

        def monitor(tr):
            watch.update(tr)
            if watch.peak > opts.escape_radius:
                state["v"] = "escape"
                return True
            ms = watch.means
            if ms and ms[-1] < opts.a_min * opts.decay_ratio:
                state["v"] = "decay"
                return True
            if len(ms) >= 4:
                d = [abs(ms[-i] - ms[-i - 1]) for i in (1, 2)]
                if max(d) <= opts.rel_tol * ms[-1]:
                    state["v"] = "cycle"
                    return True
            return False

        tr = integrate(sys, alpha, hist, horizon, h, escape_radius=2 * opts.escape_radius * 10, monitor=monitor, check_every=max(1, int(watch.period / h / 4)))
        if tr.escaped:
            return ("escape",)
        v = state.get("v")
        if v == "cycle":
            return ("cycle", _aitken(watch.means), _period(proj, tr, 3 * watch.period))
        if v is not None:
            return (v,)
        horizon *= 2
    raise Inconclusive(f"attracting search unresolved after horizon {horizon / 2:g}")


def _probe(sys, alpha, basis, proj, opts, h, a, floor):
    """Does the run from amplitude ``a`` fall back ('converge') or leave ('escape')?"""
    horizon = opts.probe_horizon or 400 * sys.r
    watch = _Watcher(proj, basis.lambda1.imag)
    target = floor + 0.5 * (a - floor)
    state = {}

    def monitor(tr):
        watch.update(tr)
        if watch.peak > opts.escape_radius:
            state["v"] = "escape"
            return True
        if watch.means and watch.means[-1] < target:
            state["v"] = "converge"
            return True
        return False

    tr = integrate(sys, alpha, HistoryFn.eigenplane(basis, a), horizon, h, escape_radius=2 * opts.escape_radius * 10, monitor=monitor, check_every=max(1, int(watch.period / h / 4)))
    if tr.escaped:
        return "escape"
    return state.get("v", "unresolved")


def detect_cycles(sys: DelaySystem, alpha, basis: EigenBasis, opts: DetectOptions | None = None) -> CycleFindings:
    """Attracting cycle by forward simulation, repelling cycle by amplitude bisection."""
    opts = opts or DetectOptions()
    h = opts.h or sys.r / 20
    _, B = eval_matrices(sys, alpha)
    m = math.ceil(sys.r / h - 1e-9)
    proj = Projector(basis, B, sys.r, sys.r / m)
    out = CycleFindings()

    first = _attracting(sys, alpha, basis, proj, opts, h)
    out.probes += 1
    if first[0] == "escape":
        out.escape = True
        out.notes.append(f"run from amplitude {opts.a_min:g} escaped past {opts.escape_radius:g}")
        return out
    if first[0] == "cycle":
        out.cycles.append(Cycle(first[1], first[2], "attracting"))
        floor = first[1]
    else:
        floor = 0.0
        out.notes.append(f"run from amplitude {opts.a_min:g} decayed to the equilibrium")

    # outward scan for an escaping amplitude
    lo = max(floor, opts.a_min)
    a = lo * 1.25
    hi = None
    while a <= opts.a_max:
        res = _probe(sys, alpha, basis, proj, opts, h, a, floor)
        out.probes += 1
        if res == "unresolved":
            raise Inconclusive(f"probe at amplitude {a:g} neither fell back nor escaped")
        if res == "escape":
            hi = a
            break
        lo = a
        a *= 1.25
    if hi is None:
        out.notes.append(f"no escape up to amplitude {opts.a_max:g}")
        return out
    out.escape = True
    while (hi - lo) > opts.bracket_rel * 0.5 * (hi + lo):
        mid = 0.5 * (hi + lo)
        res = _probe(sys, alpha, basis, proj, opts, h, mid, floor)
        out.probes += 1
        if res == "unresolved":
            raise Inconclusive(f"bisection probe at amplitude {mid:g} unresolved")
        if res == "escape":
            hi = mid
        else:
            lo = mid
    # re-verify the bracket before reporting it
    if _probe(sys, alpha, basis, proj, opts, h, lo, floor) != "converge" or _probe(sys, alpha, basis, proj, opts, h, hi, floor) != "escape":
        raise Inconclusive(f"bracket [{lo:g}, {hi:g}] did not re-verify")
    out.probes += 2
    out.cycles.append(Cycle(0.5 * (lo + hi), None, "repelling", hi - lo))
    out.cycles.sort(key=lambda c: c.amplitude)
    return out
