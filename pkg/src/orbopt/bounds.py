"""Norm-based bounds on the error of an overlap with an approximate state.

For a residual ``r = psi - psi_approx`` and any normalized determinant, the
overlap error obeys ``|eta - eta_approx| <= ||r||``. The helpers below
evaluate ``||r||`` for the three situations that arise in practice.
"""

import math

_SLACK = 1e-10
_RADICAND_SLACK = 1e-12


def bound_eps_r1(overlap_exact_approx: float) -> float:
    """Residual norm between two normalized states with real overlap ``s``."""
    s = float(overlap_exact_approx)
    if not -1 - _SLACK <= s <= 1 + _SLACK:
        raise ValueError(f"overlap {s!r} outside [-1, 1]")
    return math.sqrt(max(0.0, 2.0 * (1.0 - s)))


def bound_eps_r2(norm_sq_truncated: float) -> float:
    """Residual norm from dropping the tail of a normalized state."""
    n = float(norm_sq_truncated)
    if n < 0:
        raise ValueError(f"negative truncated norm {n!r}")
    if n > 1 + _SLACK:
        raise ValueError(f"truncated norm {n!r} exceeds 1")
    return math.sqrt(1.0 - min(n, 1.0))


def bound_eps_r_tight(norm_sq_a: float, norm_sq_b: float, cross: float) -> float:
    """``||a - b||`` from ``<a|a>``, ``<b|b>`` and ``<a|b>`` of two truncated states."""
    radicand = norm_sq_a + norm_sq_b - 2.0 * cross
    if radicand < -_RADICAND_SLACK:
        raise ValueError(f"inconsistent inputs: radicand {radicand!r} < 0")
    return math.sqrt(max(radicand, 0.0))
