"""Problem datum: ``x'(t) = A(a) x(t) + B(a) x(t-r) + f(x(t), x(t-r), a)``.

The parameter dependence of ``A``, ``B`` and the coefficients of ``f`` is
polynomial in ``a = (a1, a2)``; ``f`` itself is a polynomial in the ``2n``
state variables with every monomial of total degree 2..5.

Systems are read from a JSON document::

    {
      "name": "wright",                 # optional
      "n": 1,
      "r": 1.0,
      "A": [[ [] ]],
      "B": [[ [{"c": -1, "i": 1, "j": 0}] ]],
      "f": [ {"eq": 1, "c": [{"c": -1, "i": 1, "j": 0}], "kx": [1], "ky": [1]} ]
    }

A matrix entry (and an ``f`` coefficient) is a list of ``{c, i, j}`` terms
meaning ``c * a1**i * a2**j``; a bare number is accepted as shorthand for a
constant.  ``eq`` is 1-based.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ConfigError

MAX_DEGREE = 5


@dataclass(frozen=True)
class ParamPoint:
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha1) and math.isfinite(self.alpha2)):
            raise ConfigError(f"non-finite parameter point ({self.alpha1}, {self.alpha2})")

    @classmethod
    def of(cls, alpha) -> "ParamPoint":
        if isinstance(alpha, ParamPoint):
            return alpha
        a1, a2 = alpha
        return cls(float(a1), float(a2))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2])

    def __iter__(self):
        yield self.alpha1
        yield self.alpha2


@dataclass(frozen=True)
class AlphaPoly:
    """Real polynomial in (a1, a2); ``terms`` holds ``(c, i, j)`` sorted by ``(i, j)``."""

    terms: tuple[tuple[float, int, int], ...] = ()

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[float, int, int]]) -> "AlphaPoly":
        merged: dict[tuple[int, int], float] = {}
        for c, i, j in terms:
            merged[(i, j)] = merged.get((i, j), 0.0) + float(c)
        return cls(tuple((c, i, j) for (i, j), c in sorted(merged.items()) if c != 0.0))

    @classmethod
    def constant(cls, c: float) -> "AlphaPoly":
        return cls.from_terms([(c, 0, 0)])

    def __call__(self, alpha) -> float:
        a1, a2 = ParamPoint.of(alpha)
        return float(sum(c * a1**i * a2**j for c, i, j in self.terms))

    def __add__(self, other: "AlphaPoly") -> "AlphaPoly":
        return AlphaPoly.from_terms(self.terms + other.terms)

    @property
    def is_zero(self) -> bool:
        return not self.terms


@dataclass(frozen=True)
class FTerm:
    """``coef(a) * prod x_i**kx[i] * prod y_i**ky[i]`` in equation ``eq`` (0-based)."""

    eq: int
    coef: AlphaPoly
    kx: tuple[int, ...]
    ky: tuple[int, ...]

    @property
    def degree(self) -> int:
        return sum(self.kx) + sum(self.ky)


@dataclass(frozen=True)
class DelaySystem:
    n: int
    r: float
    A: tuple[tuple[AlphaPoly, ...], ...]
    B: tuple[tuple[AlphaPoly, ...], ...]
    f_terms: tuple[FTerm, ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("dimension n must be >= 1")
        if not (math.isfinite(self.r) and self.r > 0):
            raise ConfigError(f"delay r must be finite and > 0, got {self.r}")
        for label, M in (("A", self.A), ("B", self.B)):
            if len(M) != self.n or any(len(row) != self.n for row in M):
                raise ConfigError(f"matrix {label} must be {self.n}x{self.n}")
        for t in self.f_terms:
            if not 0 <= t.eq < self.n:
                raise ConfigError(f"f term equation index {t.eq + 1} outside 1..{self.n}")
            if len(t.kx) != self.n or len(t.ky) != self.n:
                raise ConfigError(f"f term exponents must have length n={self.n}")
            if any(k < 0 for k in t.kx + t.ky):
                raise ConfigError("f term exponents must be non-negative")
            if t.degree < 2:
                raise ConfigError(
                    f"f term of degree {t.degree} in equation {t.eq + 1}: f must vanish "
                    "to second order at the origin (constant and linear parts belong in A, B)"
                )
            if t.degree > MAX_DEGREE:
                raise ConfigError(
                    f"f term of degree {t.degree} in equation {t.eq + 1}: degrees above "
                    f"{MAX_DEGREE} would be ignored by the analysis and are rejected"
                )

    @classmethod
    def build(cls, n, r, A, B, f_terms=(), name="") -> "DelaySystem":
        """Construct from loosely typed pieces, normalizing the ``f`` term list."""
        A = tuple(tuple(_as_poly(e) for e in row) for row in A)
        B = tuple(tuple(_as_poly(e) for e in row) for row in B)
        terms = []
        for t in f_terms:
            if isinstance(t, FTerm):
                terms.append(t)
            else:
                eq, coef, kx, ky = t
                terms.append(FTerm(int(eq), _as_poly(coef), tuple(map(int, kx)), tuple(map(int, ky))))
        return cls(int(n), float(r), A, B, _normalize_f(terms), name)


def _as_poly(entry) -> AlphaPoly:
    if isinstance(entry, AlphaPoly):
        return entry
    if isinstance(entry, (int, float)) and not isinstance(entry, bool):
        return AlphaPoly.constant(float(entry))
    return AlphaPoly.from_terms(entry)


def _normalize_f(terms: Sequence[FTerm]) -> tuple[FTerm, ...]:
    merged: dict[tuple, AlphaPoly] = {}
    for t in terms:
        key = (t.eq, t.kx, t.ky)
        merged[key] = merged[key] + t.coef if key in merged else t.coef
    return tuple(
        FTerm(eq, coef, kx, ky) for (eq, kx, ky), coef in sorted(merged.items()) if not coef.is_zero
    )


# -- parsing -----------------------------------------------------------------


def _parse_poly(obj: Any, where: str) -> AlphaPoly:
    if isinstance(obj, bool):
        raise ConfigError(f"{where}: expected a number or list of {{c, i, j}} terms")
    if isinstance(obj, (int, float)):
        if not math.isfinite(obj):
            raise ConfigError(f"{where}: non-finite coefficient")
        return AlphaPoly.constant(float(obj))
    if not isinstance(obj, list):
        raise ConfigError(f"{where}: expected a list of {{c, i, j}} terms")
    terms = []
    for k, term in enumerate(obj):
        if not isinstance(term, dict) or set(term) - {"c", "i", "j"} or "c" not in term:
            raise ConfigError(f"{where}[{k}]: malformed polynomial term {term!r}")
        c = term["c"]
        i = term.get("i", 0)
        j = term.get("j", 0)
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
            raise ConfigError(f"{where}[{k}]: coefficient must be a finite number")
        for name, e in (("i", i), ("j", j)):
            if isinstance(e, bool) or not isinstance(e, int) or e < 0:
                raise ConfigError(f"{where}[{k}]: exponent {name} must be a non-negative integer")
        terms.append((float(c), i, j))
    return AlphaPoly.from_terms(terms)


def _parse_matrix(obj: Any, n: int, label: str) -> tuple[tuple[AlphaPoly, ...], ...]:
    if not isinstance(obj, list) or len(obj) != n or any(not isinstance(row, list) or len(row) != n for row in obj):
        raise ConfigError(f"{label} must be an {n}x{n} array")
    return tuple(tuple(_parse_poly(e, f"{label}[{i}][{j}]") for j, e in enumerate(row)) for i, row in enumerate(obj))


def _parse_exponents(obj: Any, n: int, where: str) -> tuple[int, ...]:
    if not isinstance(obj, list) or len(obj) != n:
        raise ConfigError(f"{where}: expected a list of {n} integers")
    for e in obj:
        if isinstance(e, bool) or not isinstance(e, int) or e < 0:
            raise ConfigError(f"{where}: exponents must be non-negative integers")
    return tuple(obj)


def system_from_dict(doc: dict) -> DelaySystem:
    if not isinstance(doc, dict):
        raise ConfigError("system document must be a JSON object")
    missing = {"n", "r", "A", "B"} - set(doc)
    if missing:
        raise ConfigError(f"missing required fields: {sorted(missing)}")
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ConfigError("n must be a positive integer")
    r = doc["r"]
    if isinstance(r, bool) or not isinstance(r, (int, float)) or not math.isfinite(r) or r <= 0:
        raise ConfigError(f"r must be a finite number > 0, got {r!r}")
    A = _parse_matrix(doc["A"], n, "A")
    B = _parse_matrix(doc["B"], n, "B")
    f_doc = doc.get("f", [])
    if not isinstance(f_doc, list):
        raise ConfigError("f must be a list of terms")
    terms = []
    for k, t in enumerate(f_doc):
        where = f"f[{k}]"
        if not isinstance(t, dict) or {"eq", "c", "kx", "ky"} - set(t):
            raise ConfigError(f"{where}: term needs fields eq, c, kx, ky")
        eq = t["eq"]
        if isinstance(eq, bool) or not isinstance(eq, int) or not 1 <= eq <= n:
            raise ConfigError(f"{where}: eq must be an integer in 1..{n}")
        terms.append(
            FTerm(
                eq - 1,
                _parse_poly(t["c"], f"{where}.c"),
                _parse_exponents(t["kx"], n, f"{where}.kx"),
                _parse_exponents(t["ky"], n, f"{where}.ky"),
            )
        )
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ConfigError("name must be a string")
    return DelaySystem(n, float(r), A, B, _normalize_f(terms), name)


def parse_system(text: str) -> DelaySystem:
    """Parse and validate a JSON system document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return system_from_dict(doc)


def load_system(path) -> DelaySystem:
    with open(path, encoding="utf-8") as fh:
        return parse_system(fh.read())


def _poly_doc(p: AlphaPoly) -> list[dict]:
    return [{"c": c, "i": i, "j": j} for c, i, j in p.terms]


def system_to_dict(sys: DelaySystem) -> dict:
    doc: dict[str, Any] = {}
    if sys.name:
        doc["name"] = sys.name
    doc.update(
        n=sys.n,
        r=sys.r,
        A=[[_poly_doc(e) for e in row] for row in sys.A],
        B=[[_poly_doc(e) for e in row] for row in sys.B],
        f=[
            {"eq": t.eq + 1, "c": _poly_doc(t.coef), "kx": list(t.kx), "ky": list(t.ky)}
            for t in sys.f_terms
        ],
    )
    return doc


def serialize_system(sys: DelaySystem) -> str:
    return json.dumps(system_to_dict(sys), indent=2)


# -- evaluation ----------------------------------------------------------------


def eval_matrices(sys: DelaySystem, alpha) -> tuple[np.ndarray, np.ndarray]:
    alpha = ParamPoint.of(alpha)
    A = np.array([[e(alpha) for e in row] for row in sys.A], dtype=float)
    B = np.array([[e(alpha) for e in row] for row in sys.B], dtype=float)
    return A, B


@dataclass(frozen=True)
class TaylorF:
    """``f`` frozen at one parameter point.

    ``terms`` holds ``(eq, coef, exps)`` with ``exps`` the ``2n`` exponents over
    ``(x_1..x_n, y_1..y_n)``; the polynomial is exact, so no truncation error.
    """

    n: int
    terms: tuple[tuple[int, complex, tuple[int, ...]], ...]

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def arrays(self):
        """Return ``(eq, coef, E)`` as numpy arrays for vectorized evaluation."""
        if not self.terms:
            return np.zeros(0, int), np.zeros(0), np.zeros((0, 2 * self.n), int)
        eq = np.array([t[0] for t in self.terms])
        coef = np.array([t[1] for t in self.terms])
        if np.all(np.imag(coef) == 0):
            coef = np.real(coef).astype(float)
        E = np.array([t[2] for t in self.terms])
        return eq, coef, E

    def evaluator(self):
        """Fast callable ``f(x, y)`` for 1-D state vectors."""
        n = self.n
        eq, coef, E = self.arrays()
        if not self.terms:
            return lambda x, y: np.zeros(n, dtype=np.result_type(x, y))
        M = np.zeros((n, len(eq)))
        M[eq, np.arange(len(eq))] = 1.0
        M = M * coef

        def f(x, y):
            xy = np.concatenate((x, y))
            return M @ np.prod(xy**E, axis=1)

        return f

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x)
        y = np.asarray(y)
        out = np.zeros(self.n, dtype=np.result_type(x, y, float, *(t[1] for t in self.terms)))
        xy = np.concatenate((x, y))
        for eq, c, e in self.terms:
            out[eq] += c * np.prod(xy ** np.array(e))
        return out


def taylor_f(sys: DelaySystem, alpha) -> TaylorF:
    alpha = ParamPoint.of(alpha)
    terms = []
    for t in sys.f_terms:
        c = t.coef(alpha)
        if c != 0.0:
            terms.append((t.eq, c, t.kx + t.ky))
    return TaylorF(sys.n, tuple(terms))
