"""Logarithmic integral and the von Koch diagnostic built on p^{-1}.

    K(x)  = (p^{-1}(x) - Li(x)) / (sqrt(x) ln x)
    K'(x) = -(1/(2x) + 1/(x ln x)) K(x) + (dp^{-1}/dx - 1/ln x) / (sqrt(x) ln x)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diffeo
from .primes import CoverageError, PrimeTable

DEFAULT_TOL = 1e-12
FD_STEP = 1e-5
_ROUNDOFF = 64 * np.finfo(float).eps


def _simpson(f, a, b, tol, max_depth=60):
    """Adaptive Simpson on [a, b] with Richardson correction.

    Iterative (explicit stack) so deep refinement never hits the recursion
    limit.  A panel is accepted when |S2 - S1| <= 15 * local_tol, or when
    that difference is already at roundoff level for the panel.
    """
    if a == b:
        return 0.0
    fa, fm, fb = f(a), f((a + b) / 2), f(b)
    whole = (b - a) * (fa + 4 * fm + fb) / 6
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    while stack:
        a, b, fa, fm, fb, whole, tol, depth = stack.pop()
        m = (a + b) / 2
        lm, rm = (a + m) / 2, (m + b) / 2
        flm, frm = f(lm), f(rm)
        left = (m - a) * (fa + 4 * flm + fm) / 6
        right = (b - m) * (fm + 4 * frm + fb) / 6
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= max(15 * tol, _ROUNDOFF * abs(whole)):
            total += left + right + delta / 15
        else:
            stack.append((m, b, fm, frm, fb, right, tol / 2, depth + 1))
            stack.append((a, m, fa, flm, fm, left, tol / 2, depth + 1))
    return total


def _inv_log(s):
    return 1.0 / math.log(s)


def li_between(a: float, b: float, tol: float = DEFAULT_TOL) -> float:
    """Integral of 1/ln s over [a, b], both ends > 1."""
    if min(a, b) <= 1:
        raise ValueError("1/ln s is singular at s = 1")
    return _simpson(_inv_log, a, b, tol)


def li(x: float, tol: float = DEFAULT_TOL) -> float:
    """Li(x) = integral_2^x ds / ln s, to absolute error ``tol``.

    The absolute target holds while it is above double-precision roundoff
    of the sum (around x = 1e4 for tol = 1e-12); beyond that the result is
    accurate to a few ulps relative, about 1e-10 absolute near x = 1e6.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if x < 2:
        raise ValueError(f"li needs x >= 2, got {x}")
    return li_between(2.0, float(x), tol)


def _check_koch(t: PrimeTable, x: float) -> None:
    if not 2 < x <= t.x_max:
        raise CoverageError(f"K(x) needs 2 < x <= {t.x_max}, got {x}")


def _K(pinv, li_x, x):
    return (pinv - li_x) / (math.sqrt(x) * math.log(x))


def _Kprime(K, dpinv, x):
    lx = math.log(x)
    return -(1 / (2 * x) + 1 / (x * lx)) * K + (dpinv - 1 / lx) / (math.sqrt(x) * lx)


def koch_K(t: PrimeTable, x: float, tol: float = DEFAULT_TOL,
           li_x: float | None = None) -> float:
    """K(x); pass ``li_x`` when Li(x) is already known (e.g. accumulated along a sweep)."""
    _check_koch(t, x)
    return _K(diffeo.pinv_eval(t, x), li(x, tol) if li_x is None else li_x, x)


def koch_Kprime(t: PrimeTable, x: float, tol: float = DEFAULT_TOL,
                li_x: float | None = None) -> float:
    """Analytic K'(x).  dp^{-1}/dx is continuous, so knots need no side choice."""
    _check_koch(t, x)
    pinv, dpinv = diffeo.pinv_with_deriv(t, x)
    return _Kprime(_K(pinv, li(x, tol) if li_x is None else li_x, x), dpinv, x)


@dataclass(frozen=True)
class KochSample:
    x: float
    K: float
    Kprime_analytic: float
    Kprime_fd: float
    dpinv: float


CSV_HEADER = "x,K,Kprime_analytic,Kprime_fd"


def koch_scan(t: PrimeTable, x_from: float, x_to: float, step: float,
              tol: float = DEFAULT_TOL, h: float = FD_STEP) -> list[KochSample]:
    """Sample K, analytic K' and a central difference of K on a uniform grid.

    Li is accumulated panel by panel along the grid, and the difference
    quotient uses Li(x +- h) = Li(x) +- integral over [x, x +- h].  The
    difference turns one-sided where x +- h would leave the coverage.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if not 2 < x_from < x_to <= t.x_max:
        raise CoverageError(f"scan range must satisfy 2 < from < to <= {t.x_max}")
    count = int(math.floor((x_to - x_from) / step + 1e-9)) + 1
    xs = x_from + step * np.arange(count)
    xs[-1] = min(xs[-1], x_to)

    out = []
    li_x = li(x_from, tol)
    prev = x_from
    for x in xs.tolist():
        li_x += li_between(prev, x, tol)
        prev = x
        pinv, dpinv = diffeo.pinv_with_deriv(t, x)
        K = _K(pinv, li_x, x)
        lo = x - h if x - h > 2 else x
        hi = x + h if x + h <= t.x_max else x
        K_lo = K if lo == x else _K(diffeo.pinv_eval(t, lo), li_x - li_between(lo, x, tol), lo)
        K_hi = K if hi == x else _K(diffeo.pinv_eval(t, hi), li_x + li_between(x, hi, tol), hi)
        out.append(KochSample(x, K, _Kprime(K, dpinv, x), (K_hi - K_lo) / (hi - lo), dpinv))
    return out


def write_koch_csv(samples, fh) -> None:
    fh.write(CSV_HEADER + "\n")
    for s in samples:
        fh.write(f"{s.x:.15g},{s.K:.15g},{s.Kprime_analytic:.15g},{s.Kprime_fd:.15g}\n")


# -- asymptotic regimes near p_n and near the interval midpoint --------------

@dataclass(frozen=True)
class RegimeModel:
    """Closed-form regime models on [p_n, (p_n + p_{n+1})/2].

    Near p_n:        K ~ sqrt(x)/ln x + c_prime / (sqrt(x) ln x)
    Near midpoint:   K ~ -Li(x)/(sqrt(x) ln x) + c_dprime / (sqrt(x) ln x)

    ``alpha`` is the assumed growth exponent of gaps (g_n ~ p_n**alpha);
    it only sizes the term the midpoint model neglects.
    """
    n: int
    c_prime: float = 0.0
    c_dprime: float = 0.0
    alpha: float = 0.525
    li_leading_term: bool = False  # replace Li(x) by x / ln x


def _homog(x):
    return 1.0 / (math.sqrt(x) * math.log(x))


def _regime_one(x, c):
    return math.sqrt(x) / math.log(x) + c * _homog(x)


def _regime_two(x, c, li_x):
    return -li_x * _homog(x) + c * _homog(x)


def _check_n(t: PrimeTable, n: int) -> None:
    if not 2 <= n < t.limit_n:
        raise CoverageError(f"n={n} outside 2..{t.limit_n - 1}")


def _li_or_leading(x, m: RegimeModel, tol):
    return x / math.log(x) if m.li_leading_term else li(x, tol)


def regime_values(t: PrimeTable, n: int, m: RegimeModel,
                  tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """Model predictions at x = p_n and at the midpoint (p_n + p_{n+1})/2."""
    _check_n(t, n)
    p = t.primes
    x1, x2 = float(p[n - 1]), (p[n - 1] + p[n]) / 2
    return _regime_one(x1, m.c_prime), _regime_two(x2, m.c_dprime, _li_or_leading(x2, m, tol))


def fit_regime(t: PrimeTable, n: int, samples: int = 16, window: float = 0.25,
               alpha: float = 0.525, li_leading_term: bool = False,
               tol: float = DEFAULT_TOL) -> RegimeModel:
    """Fit c'_n and c''_n by one-parameter least squares against K.

    c'_n uses K sampled on the first ``window`` fraction of [p_n, midpoint],
    c''_n the last fraction.  The model is linear in its constant with basis
    1/(sqrt(x) ln x), so each fit is a single projection.
    """
    _check_n(t, n)
    p = t.primes
    a, b = float(p[n - 1]), (p[n - 1] + p[n]) / 2
    w = window * (b - a)
    base = RegimeModel(n, alpha=alpha, li_leading_term=li_leading_term)

    def fit(xs, model_without_c):
        phi = np.array([_homog(x) for x in xs])
        r = np.array([koch_K(t, x, tol) - model_without_c(x) for x in xs])
        return float(phi @ r / (phi @ phi))

    near_p = np.linspace(a, a + w, samples)
    near_mid = np.linspace(b - w, b, samples)
    c1 = fit(near_p, lambda x: _regime_one(x, 0.0))
    c2 = fit(near_mid, lambda x: _regime_two(x, 0.0, _li_or_leading(x, base, tol)))
    return RegimeModel(n, c1, c2, alpha, li_leading_term)


def regime_report(t: PrimeTable, m: RegimeModel, tol: float = DEFAULT_TOL) -> dict:
    """Model-versus-K residuals at both ends, plus the neglected midpoint term."""
    p = t.primes
    n = m.n
    v1, v2 = regime_values(t, n, m, tol)
    x1, x2 = float(p[n - 1]), (p[n - 1] + p[n]) / 2
    g = p[n] - p[n - 1] - 1
    return {
        "n": n,
        "c_prime": m.c_prime,
        "c_dprime": m.c_dprime,
        "residual_at_prime": v1 - koch_K(t, x1, tol),
        "residual_at_mid": v2 - koch_K(t, x2, tol),
        "neglected_term_actual": 1.0 / (2 * g + 1),
        "neglected_term_assumed": 1.0 / (2 * x1 ** m.alpha + 1),
    }


# -- l'Hospital subsequences -------------------------------------------------

def lhospital_seq(t: PrimeTable, n: int) -> tuple[float, float]:
    """ln(x) dp^{-1}/dx at x = p_n and at the midpoint (p_n + p_{n+1})/2."""
    _check_n(t, n)
    p = t.primes
    x1, x2 = float(p[n - 1]), (p[n - 1] + p[n]) / 2
    return (math.log(x1) * diffeo.pinv_deriv(t, x1),
            math.log(x2) * diffeo.pinv_deriv(t, x2))


def lhospital_table(t: PrimeTable, n_from: int, n_to: int) -> np.ndarray:
    """Rows (n, first, second) for n_from <= n <= n_to, vectorized."""
    _check_n(t, n_from)
    _check_n(t, n_to)
    n = np.arange(n_from, n_to + 1)
    p = t.array
    x1 = p[n - 1].astype(float)
    x2 = (p[n - 1] + p[n]) / 2
    d1 = diffeo.pinv_deriv(t, x1)
    d2 = diffeo.pinv_deriv(t, x2)
    return np.column_stack([n, np.log(x1) * d1, np.log(x2) * d2])
