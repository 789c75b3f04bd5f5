"""Reference systems with known answers (used by the tests and the README)."""

from __future__ import annotations

import math

from .system_model import DelaySystem


def wright() -> DelaySystem:
    """``x'(t) = -a1 x(t-1) (1 + x(t))``; Hopf at ``a1 = pi/2``."""
    return DelaySystem.build(1, 1.0, [[0]], [[[(-1, 1, 0)]]], [(0, [(-1, 1, 0)], (1,), (1,))], name="wright")


def linear_scalar(a: float, b: float, r: float = 1.0) -> DelaySystem:
    """``x'(t) = a x(t) + b x(t-r)`` with no nonlinearity."""
    return DelaySystem.build(1, r, [[a]], [[b]], name="linear")


def hopf_ode(mu0: float) -> DelaySystem:
    """Planar rotation ``A = [[mu0, -1], [1, mu0]]``, ``B = 0``, ``f = 0``."""
    return DelaySystem.build(2, 1.0, [[mu0, -1], [1, mu0]], [[0, 0], [0, 0]], name="hopf-ode")


def golden() -> DelaySystem:
    """Real planar form of ``z' = (a1 + i) z + (a2 + i/2) z|z|^2 + z|z|^4`` with ``B = 0``.

    With ``X = x1 + i x2 = sqrt(2) z`` (so that ``z`` is the coordinate of the
    normalized eigenbasis) the right-hand side is
    ``(a1 + i) X + (a2 + i/2) X|X|^2 / 2 + X|X|^4 / 4``.
    """
    terms = []

    def add(eq, coef, e1, e2):
        terms.append((eq, coef, (e1, e2), (0, 0)))

    # x1' : (a2 x1 - x2/2)(x1^2 + x2^2)/2 + x1 (x1^2 + x2^2)^2/4
    add(0, [(0.5, 0, 1)], 3, 0)
    add(0, [(0.5, 0, 1)], 1, 2)
    add(0, [(-0.25, 0, 0)], 2, 1)
    add(0, [(-0.25, 0, 0)], 0, 3)
    add(0, [(0.25, 0, 0)], 5, 0)
    add(0, [(0.5, 0, 0)], 3, 2)
    add(0, [(0.25, 0, 0)], 1, 4)
    # x2' : (a2 x2 + x1/2)(x1^2 + x2^2)/2 + x2 (x1^2 + x2^2)^2/4
    add(1, [(0.5, 0, 1)], 2, 1)
    add(1, [(0.5, 0, 1)], 0, 3)
    add(1, [(0.25, 0, 0)], 3, 0)
    add(1, [(0.25, 0, 0)], 1, 2)
    add(1, [(0.25, 0, 0)], 4, 1)
    add(1, [(0.5, 0, 0)], 2, 3)
    add(1, [(0.25, 0, 0)], 0, 5)
    A = [[[(1, 1, 0)], -1], [1, [(1, 1, 0)]]]
    return DelaySystem.build(2, 1.0, A, [[0, 0], [0, 0]], terms, name="golden")


def cubic_quintic(quad: float = 1.0, q: float = 1.0) -> DelaySystem:
    """Delayed scalar family with a Bautin point near ``a2 = 0.389`` (``quad = q = 1``).

    ``x'(t) = -(pi/2 + a1) x(t-1) - quad (pi/2) x(t) x(t-1) + a2 x(t)^3 + q x(t)^5``
    """
    terms = [
        (0, [(-quad * math.pi / 2, 0, 0)], (1,), (1,)),
        (0, [(1, 0, 1)], (3,), (0,)),
        (0, [(q, 0, 0)], (5,), (0,)),
    ]
    B = [[[(-math.pi / 2, 0, 0), (-1, 1, 0)]]]
    return DelaySystem.build(1, 1.0, [[0]], B, terms, name="cubic-quintic")
