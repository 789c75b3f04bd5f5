"""Batch front end: ``bautin-dde <mode> --system FILE ...``.

Exit codes: 0 when the analysis completed (whatever the verdicts), 2 for a
configuration problem, 3 for a numerical failure; the failing stage is named
on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys as _sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .ddesim import DetectOptions, HistoryFn, detect_cycles, integrate, write_csv
from .eigenbasis import build_basis
from .errors import BautinError, ConfigError, Inconclusive
from .manifold import expansion_dump
from .normalform import (
    BautinAnalysis,
    PointRecord,
    analyze_bautin,
    classify_point,
    find_bautin,
    hopf_data,
)
from .spectrum import ScanWindow, check_H1, find_leading_pair
from .system_model import DelaySystem, ParamPoint, load_system, system_from_dict, system_to_dict

MODES = ("spectrum", "analyze", "bautin-search", "simulate", "verify")
SIG_DIGITS = 15


# -- JSON rendering ------------------------------------------------------------------


def to_json(obj):
    """Plain JSON data: floats at 15 significant digits, complex as ``{re, im}``."""
    if isinstance(obj, (bool, type(None), str)):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.{SIG_DIGITS}g}") if math.isfinite(x) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_json(obj.real), "im": to_json(obj.imag)}
    if isinstance(obj, ParamPoint):
        return [to_json(obj.alpha1), to_json(obj.alpha2)]
    if isinstance(obj, np.ndarray):
        return [to_json(x) for x in obj.tolist()] if obj.ndim else to_json(obj.item())
    if isinstance(obj, dict):
        return {str(k): to_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_json(x) for x in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(to_json(obj), indent=2)


# -- report sections --------------------------------------------------------------------


def _window_dict(w: ScanWindow) -> dict:
    return {"re": [-w.sigma, w.sigma], "im": [0.0, w.omega]}


def spectrum_section(sys: DelaySystem, alpha, delta, window) -> dict:
    h1 = check_H1(sys, alpha, delta, window)
    return {
        "alpha": ParamPoint.of(alpha),
        "h1": {
            "holds": h1.holds,
            "lambda1": h1.lambda1,
            "mu": h1.mu,
            "omega": h1.omega,
            "margin": h1.margin,
            "delta": h1.delta,
            "window": _window_dict(h1.window),
            "window_covers_critical_disk": h1.window_covers_critical_disk,
            "reason": h1.reason,
        },
        "roots": [
            {"lambda": c.lam, "residual": c.residual, "simple": c.simple, "multiplicity": c.multiplicity}
            for c in h1.roots
        ],
    }


def record_dict(rec: PointRecord) -> dict:
    reg = rec.region
    return {
        "alpha": rec.alpha,
        "lambda1": rec.lambda1,
        "h1": rec.h1,
        "nu": None if rec.nu is None else [rec.nu.nu1, rec.nu.nu2],
        "l1": None if rec.lyapunov is None else rec.lyapunov.l1,
        "l2": None if rec.lyapunov is None else rec.lyapunov.l2,
        "beta": None if rec.beta is None else [rec.beta.beta1, rec.beta.beta2],
        "s": None if rec.beta is None else rec.beta.s,
        "region": None if reg is None else reg.tag,
        "rho1": None if reg is None else reg.rho1,
        "rho2": None if reg is None else reg.rho2,
        "z_amplitudes": rec.z_amplitudes,
        "note": rec.note,
    }


def bautin_dict(an: BautinAnalysis) -> dict:
    return {
        "bautin": an.bautin,
        "alpha0": an.alpha0,
        "omega0": an.omega0,
        "l1": an.l1,
        "l2": an.l2,
        "H1": an.h1_holds,
        "H2": an.h2_holds,
        "H3": an.h3_holds,
        "jacobian": None if an.h2 is None else an.h2.jacobian,
        "jacobian_det": None if an.h2 is None else an.h2.det,
        "fd_step": None if an.h2 is None else an.h2.step,
        "search_iterations": None if an.search is None else an.search.iterations,
        "notes": list(an.notes),
    }


def hopf_section(sys, alpha, delta, window) -> dict:
    d = hopf_data(sys, alpha, 5, delta, window)
    dump = expansion_dump(d.expansion)
    return {"alpha": d.alpha, "lambda1": d.lambda1, "mu": d.mu, "omega": d.omega, "l1": d.l1, "l2": d.l2, "g": dump["g"]}


def _sign(an: BautinAnalysis) -> int:
    return 1 if an.l2 is not None and an.l2 > 0 else -1


def simulation_section(sys, alpha, rec: PointRecord, opts: DetectOptions) -> dict:
    expected = None if rec.region is None or rec.region.tag == "OutOfScope" else rec.region.cycle_count
    out = {"status": "completed", "expected_cycles": expected, "observed_cycles": None, "agreement": None, "cycles": [], "escape": None, "amplitude_rel_errors": None, "notes": []}
    basis = build_basis(sys, alpha, find_leading_pair(sys, alpha).lam)
    try:
        found = detect_cycles(sys, alpha, basis, opts)
    except Inconclusive as exc:
        out["status"] = "inconclusive"
        out["notes"].append(str(exc))
        return out
    out["observed_cycles"] = found.count
    out["escape"] = found.escape
    out["notes"] = list(found.notes)
    out["cycles"] = [
        {"amplitude": c.amplitude, "period": c.period, "stability": c.stability, "uncertainty": c.uncertainty}
        for c in found.cycles
    ]
    if expected is not None:
        ok = found.count == expected
        if expected == 2:
            ok = ok and [c.stability for c in found.cycles] == ["attracting", "repelling"]
        if expected == 0 and rec.region.tag in ("NoCycleUnstable", "BautinPoint"):
            ok = ok and found.escape
        out["agreement"] = ok
    if rec.z_amplitudes is not None and found.count == len(rec.z_amplitudes):
        out["amplitude_rel_errors"] = [abs(c.amplitude / z - 1) for c, z in zip(found.cycles, rec.z_amplitudes)]
    return out


# -- argument handling ---------------------------------------------------------------


def _pair(text: str, what: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"{what} must look like 'X,Y', got {text!r}") from None
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ConfigError(f"{what} must be finite")
    return a, b


def parse_grid(text: str) -> list[tuple[float, float]]:
    """``A1MIN:A1MAX:N1,A2MIN:A2MAX:N2`` -> points, alpha1 varying slowest."""
    try:
        axes = []
        for part in text.split(","):
            lo, hi, num = part.split(":")
            num = int(num)
            if num < 1:
                raise ValueError
            axes.append(np.linspace(float(lo), float(hi), num))
        if len(axes) != 2:
            raise ValueError
    except ValueError:
        raise ConfigError(f"grid must look like 'A1MIN:A1MAX:N1,A2MIN:A2MAX:N2', got {text!r}") from None
    return [(float(a1), float(a2)) for a1 in axes[0] for a2 in axes[1]]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bautin-dde", description="Bautin bifurcation analysis for delay differential systems.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--system", required=True, help="system description (JSON)")
    p.add_argument("--alpha", help="parameter point 'A1,A2' (guess for bautin-search)")
    p.add_argument("--alpha0", help="known Bautin point 'A1,A2' (skips the search)")
    p.add_argument("--grid", help="analyze a grid 'A1MIN:A1MAX:N1,A2MIN:A2MAX:N2' (JSON lines)")
    p.add_argument("--h1-delta", type=float, help="H1 margin delta (default 0.01/r)")
    p.add_argument("--fd-step", type=float, help="H2 central-difference step (default 1e-4 (1 + |alpha0|))")
    p.add_argument("--scan-re", type=float, help="root window half-width in Re (default 5/r)")
    p.add_argument("--scan-im", type=float, help="root window height in Im (default 20 pi/r)")
    p.add_argument("--sim-T", type=float, help="simulation horizon (simulate; default 200 r)")
    p.add_argument("--sim-h", type=float, help="simulation step (default r/20, at most r/10)")
    p.add_argument("--amplitude", type=float, default=0.05, help="eigenplane history amplitude (simulate)")
    p.add_argument("--constant-history", help="constant history 'X1,...,Xn' instead of the eigenplane (simulate)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for --grid")
    p.add_argument("--out", help="output file (default stdout)")
    return p


def _window(args, sys: DelaySystem) -> ScanWindow:
    w = ScanWindow.default(sys.r)
    sigma = w.sigma if args.scan_re is None else args.scan_re
    omega = w.omega if args.scan_im is None else args.scan_im
    if not (sigma > 0 and omega > 0):
        raise ConfigError("--scan-re and --scan-im must be positive")
    return ScanWindow(sigma, omega)


def _grid_worker(job):
    doc, alpha, s, delta, sigma, omega = job
    sys = system_from_dict(doc)
    try:
        rec = record_dict(classify_point(sys, alpha, s, delta, ScanWindow(sigma, omega)))
    except BautinError as exc:
        rec = {"alpha": ParamPoint.of(alpha), "error": f"[{exc.stage}] {exc}"}
    return json.dumps(to_json(rec), separators=(",", ":"))


def run(args, write) -> None:
    sys = load_system(args.system)
    delta = args.h1_delta
    if delta is not None and not delta > 0:
        raise ConfigError("--h1-delta must be positive")
    window = _window(args, sys)
    alpha = _pair(args.alpha, "--alpha") if args.alpha else None
    alpha0 = _pair(args.alpha0, "--alpha0") if args.alpha0 else None
    sim_h = args.sim_h if args.sim_h is not None else sys.r / 20
    if not 0 < sim_h <= sys.r / 10:
        raise ConfigError(f"--sim-h must be in (0, r/10 = {sys.r / 10:g}]")
    if args.sim_T is not None and not args.sim_T > 0:
        raise ConfigError("--sim-T must be positive")
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")

    head = {"version": __version__, "mode": args.mode, "input": {"system": system_to_dict(sys), "alpha": alpha, "alpha0": alpha0}}

    if args.mode == "simulate":
        if alpha is None:
            raise ConfigError("simulate needs --alpha")
        basis = build_basis(sys, alpha, find_leading_pair(sys, alpha, window).lam)
        if args.constant_history:
            vals = [float(x) for x in args.constant_history.split(",")]
            if len(vals) != sys.n:
                raise ConfigError(f"--constant-history needs {sys.n} values")
            hist = HistoryFn.constant(vals)
        else:
            hist = HistoryFn.eigenplane(basis, args.amplitude)
        T = args.sim_T if args.sim_T is not None else 200 * sys.r
        traj = integrate(sys, alpha, hist, T, sim_h)
        write_csv(traj, args.out or _sys.stdout, basis, sys, alpha)
        return

    if args.grid:
        if args.mode != "analyze":
            raise ConfigError("--grid is only supported in analyze mode")
        points = parse_grid(args.grid)
        guess = alpha0 or alpha
        if guess is None:
            raise ConfigError("--grid needs --alpha0 (or --alpha as a search guess) to fix s = sign l2(alpha0)")
        an = analyze_bautin(sys, alpha0, guess, delta, window, args.fd_step)
        s = _sign(an)
        doc = system_to_dict(sys)
        jobs = [(doc, p, s, delta, window.sigma, window.omega) for p in points]
        if args.workers == 1:
            lines = map(_grid_worker, jobs)
            for line in lines:
                write(line + "\n")
        else:
            with ProcessPoolExecutor(args.workers) as pool:
                for line in pool.map(_grid_worker, jobs):
                    write(line + "\n")
        return

    if alpha is None and not (args.mode == "bautin-search" and alpha0 is not None):
        raise ConfigError(f"{args.mode} needs --alpha")

    report = dict(head)
    if args.mode == "spectrum":
        report["spectrum"] = spectrum_section(sys, alpha, delta, window)
    elif args.mode == "bautin-search":
        info = None
        if alpha0 is None:
            # unlike analyze, a failed search is an error here (exit 3)
            alpha0, info = find_bautin(sys, alpha, window=window, return_info=True)
        an = analyze_bautin(sys, alpha0, None, delta, window, args.fd_step)
        an.search = info
        report["bautin"] = bautin_dict(an)
    else:
        an = analyze_bautin(sys, alpha0, alpha, delta, window, args.fd_step)
        report["hopf"] = hopf_section(sys, alpha, delta, window)
        report["bautin"] = bautin_dict(an)
        rec = classify_point(sys, alpha, _sign(an), delta, window)
        report["classification"] = record_dict(rec)
        if args.mode == "verify":
            opts = DetectOptions.from_prediction(rec.z_amplitudes, h=sim_h)
            if args.sim_T is not None:
                opts = replace(opts, conv_horizon=args.sim_T, probe_horizon=2 * args.sim_T)
            report["simulation"] = simulation_section(sys, alpha, rec, opts)
    write(dumps(report) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = None
    try:
        if args.out and args.mode != "simulate":
            out = open(args.out, "w", encoding="utf-8")
            write = out.write
        else:
            write = _sys.stdout.write
        run(args, write)
    except ConfigError as exc:
        print(f"bautin-dde: configuration error: {exc}", file=_sys.stderr)
        return 2
    except OSError as exc:
        print(f"bautin-dde: configuration error: {exc}", file=_sys.stderr)
        return 2
    except BautinError as exc:
        print(f"bautin-dde: numerical failure in stage '{exc.stage}': {exc}", file=_sys.stderr)
        return 3
    finally:
        if out is not None:
            out.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
