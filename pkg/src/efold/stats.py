"""Student-t quantiles without scipy.

The CI machinery needs two-sided t critical values for small degrees of
freedom. They are computed from the regularized incomplete beta function
(continued-fraction evaluation, Newton-bisection inversion) so the package
carries no heavyweight stats dependency and the values are reproducible
bit-for-bit everywhere.
"""

from __future__ import annotations

from functools import lru_cache
from math import exp, lgamma, log, log1p, sqrt

from .errors import EfoldError

_EPS = 3e-16
_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise EfoldError("E005", f"incomplete beta requires a, b > 0, got a={a}, b={b}")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log1p(-x)
    bt = exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def inverse_incomplete_beta(a: float, b: float, p: float) -> float:
    """Solve I_x(a, b) = p for x, Newton steps bracketed by bisection."""
    if not 0.0 <= p <= 1.0:
        raise EfoldError("E005", f"probability must lie in [0, 1], got {p}")
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    ln_beta = lgamma(a) + lgamma(b) - lgamma(a + b)
    lo, hi = 0.0, 1.0
    x = 0.5
    for _ in range(200):
        f = regularized_incomplete_beta(a, b, x) - p
        if f > 0.0:
            hi = x
        else:
            lo = x
        ln_pdf = (a - 1.0) * log(x) + (b - 1.0) * log1p(-x) - ln_beta
        if -700.0 < ln_pdf < 700.0:
            x_new = x - f / exp(ln_pdf)
        else:
            x_new = 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * max(abs(x), _FPMIN):
            return x_new
        x = x_new
    return x


def student_t_ppf(p: float, df: int) -> float:
    """Quantile of Student's t with ``df`` degrees of freedom."""
    if df < 1:
        raise EfoldError("E005", f"degrees of freedom must be >= 1, got {df}")
    if not 0.0 < p < 1.0:
        raise EfoldError("E005", f"quantile probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    # For t > 0: P(T <= t) = 1 - I_z(df/2, 1/2) / 2 with z = df / (df + t^2),
    # so the two-tail mass 2*min(p, 1-p) pins down z directly.
    tail = 2.0 * min(p, 1.0 - p)
    z = inverse_incomplete_beta(0.5 * df, 0.5, tail)
    if z <= 0.0:
        t = float("inf")
    else:
        t = sqrt(df * (1.0 - z) / z)
    return t if p > 0.5 else -t


@lru_cache(maxsize=4096)
def student_t_two_sided(confidence_level: float, df: int) -> float:
    """Critical value t such that P(|T| <= t) = confidence_level."""
    if not 0.0 < confidence_level < 1.0:
        raise EfoldError(
            "E005", f"confidence level must lie in (0, 1), got {confidence_level}"
        )
    return student_t_ppf(1.0 - (1.0 - confidence_level) / 2.0, df)
