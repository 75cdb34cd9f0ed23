"""Regularized incomplete beta function by continued fraction."""

from __future__ import annotations

import math

_TINY = 1e-300
_EPS = 1e-16
_MAX_ITER = 20000


def _betacf(a: float, b: float, x: float) -> float:
    # Modified Lentz evaluation of the standard even/odd continued fraction.
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}")


def inc_beta(q: float, a: float, b: float) -> float:
    """Regularized incomplete beta ``I_q(a, b)``.

    The continued fraction converges fast for ``q < (a + 1) / (a + b + 2)``;
    beyond that point the symmetry ``I_q(a, b) = 1 - I_{1-q}(b, a)`` is used.
    """
    q, a, b = float(q), float(a), float(b)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if not (a > 0 and b > 0) or math.isinf(a) or math.isinf(b):
        raise ValueError(f"shape parameters must be positive and finite, got a={a}, b={b}")
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(q) + b * math.log1p(-q)
    )
    if q < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, q) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - q) / b
