"""The prime curve p(x) and the prime counting curve p^{-1}(x).

p(x) is the C^1 piecewise-quadratic spline through (n, p_n) and
(n + 1/2, (p_n + p_{n+1})/2); p^{-1} is its exact inverse.  Branch layout
(forward, n >= 2):

    head      0 < x <= 3/2          p = x + 1
    a_minus   n - 1/2 < x <= n      p = -2 g_{n-1} (x-n)^2 + (x-n) + p_n
    a_plus    n < x <= n + 1/2      p = 2 g_n (x-n-1/2)^2 + (2 g_n + 1)(x-n-1/2) + (p_n+p_{n+1})/2

with g_n = p_{n+1} - p_n - 1.  The inverse branches b_minus / b_plus cover
((p_{n-1}+p_n)/2, p_n] and (p_n, (p_n+p_{n+1})/2], head 1 < x <= 5/2.
At a shared knot the branch with the smaller left endpoint wins; values
agree there by C^1 sewing, only one-sided second derivatives differ.

All functions accept a scalar or an array; scalars come back as floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .primes import CoverageError, PrimeTable

HEAD, MINUS, PLUS = 0, 1, 2
_FORWARD_KINDS = {HEAD: "linear_head", MINUS: "a_minus", PLUS: "a_plus"}
_INVERSE_KINDS = {HEAD: "linear_head", MINUS: "b_minus", PLUS: "b_plus"}

Side = Literal["left", "right"]
Curve = Literal["forward", "inverse"]


@dataclass(frozen=True)
class BranchLocation:
    kind: str
    n: int  # 1 for the head branch


def forward_max(t: PrimeTable) -> float:
    """Right end of the forward coverage; p maps (0, forward_max] onto (1, x_max]."""
    return t.limit_n - 0.5


def _asarray(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return float(arr) if scalar else arr


def _check(x, lo, hi, what):
    # lo is exclusive, hi inclusive
    bad = ~((x > lo) & (x <= hi))
    if bad.any():
        first = float(x[bad].flat[0])
        raise CoverageError(f"{what}: x={first:.15g} outside ({lo:.15g}, {hi:.15g}]")


def _gap(t: PrimeTable, n):
    """Gap g_n for an int array of 1-based indices n."""
    p = t.array
    return p[n] - p[n - 1] - 1


def _forward_branches(t: PrimeTable, x):
    """Branch kind and index n for each element of a checked array x."""
    n_up = np.ceil(x).astype(np.int64)
    minus = x > n_up - 0.5
    kind = np.where(minus, MINUS, PLUS)
    n = np.where(minus, n_up, n_up - 1)
    head = x <= 1.5
    kind[head] = HEAD
    n[head] = 1
    return kind, n


def _inverse_branches(t: PrimeTable, x):
    p = t.array
    k = np.searchsorted(t.float_array, x, side="left")  # p[k] >= x > p[k-1]
    k = np.clip(k, 1, p.size - 1)
    mid = (p[k - 1] + p[k]) / 2
    minus = x > mid
    kind = np.where(minus, MINUS, PLUS)
    n = np.where(minus, k + 1, k)  # 1-based index
    head = x <= 2.5
    kind[head] = HEAD
    n[head] = 1
    return kind, n


def locate_forward(t: PrimeTable, x: float) -> BranchLocation:
    _check(np.asarray(x, dtype=float), 0.0, forward_max(t), "prime curve")
    kind, n = _forward_branches(t, np.atleast_1d(float(x)))
    return BranchLocation(_FORWARD_KINDS[int(kind[0])], int(n[0]))


def locate_inverse(t: PrimeTable, x: float) -> BranchLocation:
    _check(np.asarray(x, dtype=float), 1.0, t.x_max, "counting curve")
    kind, n = _inverse_branches(t, np.atleast_1d(float(x)))
    return BranchLocation(_INVERSE_KINDS[int(kind[0])], int(n[0]))


def _forward(t: PrimeTable, x, want_value: bool):
    x, scalar = _asarray(x)
    _check(x, 0.0, forward_max(t), "prime curve")
    flat = x.ravel()
    kind, n = _forward_branches(t, flat)
    out = np.empty_like(flat)
    p = t.array

    head = kind == HEAD
    out[head] = flat[head] + 1.0 if want_value else 1.0

    m = kind == MINUS
    nm = n[m]
    g = _gap(t, nm - 1)
    d = flat[m] - nm
    out[m] = (-2.0 * g * d * d + d + p[nm - 1]) if want_value else (1.0 - 4.0 * g * d)

    pl = kind == PLUS
    npl = n[pl]
    g = _gap(t, npl)
    if want_value:
        d = flat[pl] - npl - 0.5
        out[pl] = 2.0 * g * d * d + (2.0 * g + 1.0) * d + (p[npl - 1] + p[npl]) / 2
    else:
        out[pl] = 4.0 * g * (flat[pl] - npl) + 1.0
    return _out(out.reshape(x.shape), scalar)


def p_eval(t: PrimeTable, x):
    """Prime curve p(x); p(n) = p_n and p(n + 1/2) = (p_n + p_{n+1})/2 exactly."""
    return _forward(t, x, True)


def p_deriv(t: PrimeTable, x):
    return _forward(t, x, False)


def _inverse_parts(t: PrimeTable, flat):
    """Value and derivative of p^{-1} on a checked flat array."""
    kind, n = _inverse_branches(t, flat)
    p = t.array
    minus = kind == MINUS
    gi = np.where(minus, n - 1, n)
    g = p[gi] - p[gi - 1] - 1  # g_{n-1} on b_minus, g_n on b_plus
    d = np.abs(flat - p[n - 1])
    # 1 - sqrt(1 + 8 g d) rewritten as -8 g d / (1 + sqrt(...)): no cancellation
    # near the knot, and the g = 0 branch (the pair 2, 3) reduces to x - 1.
    root = np.sqrt(np.maximum(8.0 * g * d + 1.0, 0.0))
    step = 2.0 * d / (1.0 + root)
    value = np.where(minus, n - step, n + step)
    deriv = 1.0 / root
    head = kind == HEAD
    if head.any():
        value[head] = flat[head] - 1.0
        deriv[head] = 1.0
    return value, deriv, kind, n


def pinv_with_deriv(t: PrimeTable, x):
    """Return (p^{-1}(x), dp^{-1}/dx) in one pass."""
    x, scalar = _asarray(x)
    _check(x, 1.0, t.x_max, "counting curve")
    value, deriv, _, _ = _inverse_parts(t, x.ravel())
    return _out(value.reshape(x.shape), scalar), _out(deriv.reshape(x.shape), scalar)


def pinv_eval(t: PrimeTable, x):
    """Prime counting curve; p^{-1}(p_n) = n exactly, floor gives pi(x)."""
    return pinv_with_deriv(t, x)[0]


def pinv_deriv(t: PrimeTable, x):
    """dp^{-1}/dx, in (0, 1]; 1 at every prime, 1/(2 g_n + 1) at midpoints."""
    return pinv_with_deriv(t, x)[1]


def _knot_branch(loc: BranchLocation, x: float, t: PrimeTable, curve: Curve, side: Side):
    """Re-select the branch at a knot according to the requested side."""
    kind, n = loc.kind, loc.n
    if curve == "forward":
        if side == "right":
            if kind == "a_minus" and x == n:
                return "a_plus", n
            if kind == "a_plus" and x == n + 0.5:
                return "a_minus", n + 1
            if kind == "linear_head" and x == 1.5:
                return "a_minus", 2
    else:
        p = t.primes
        if side == "right":
            if kind == "b_minus" and x == p[n - 1]:
                return "b_plus", n
            if kind == "b_plus" and x == (p[n - 1] + p[n]) / 2:
                return "b_minus", n + 1
            if kind == "linear_head" and x == 2.5:
                return "b_minus", 2
    return kind, n


def second_deriv(t: PrimeTable, x: float, curve: Curve = "forward", side: Side = "left") -> float:
    """One-sided second derivative of p (``forward``) or p^{-1} (``inverse``).

    Away from knots ``side`` is irrelevant.  At a knot ``left`` takes the
    branch ending there and ``right`` the branch starting there.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if curve == "forward":
        loc = locate_forward(t, x)
    elif curve == "inverse":
        loc = locate_inverse(t, x)
    else:
        raise ValueError(f"curve must be 'forward' or 'inverse', got {curve!r}")
    kind, n = _knot_branch(loc, float(x), t, curve, side)
    if kind == "linear_head":
        return 0.0
    p = t.primes
    if kind == "a_minus":
        return -4.0 * (p[n - 1] - p[n - 2] - 1)
    if kind == "a_plus":
        return 4.0 * (p[n] - p[n - 1] - 1)
    if kind == "b_minus":
        g = p[n - 1] - p[n - 2] - 1
        return 4.0 * g * max(8.0 * g * (p[n - 1] - x) + 1.0, 0.0) ** -1.5
    if n >= len(p):
        raise CoverageError(f"counting curve: no right branch at x={x}")
    g = p[n] - p[n - 1] - 1
    return -4.0 * g * max(8.0 * g * (x - p[n - 1]) + 1.0, 0.0) ** -1.5


def pi_floor(t: PrimeTable, x):
    """pi(x) as the floor of the counting curve.

    Just below a prime the float value of p^{-1} can round up to the integer
    n; the branch tells us the exact floor there.
    """
    arr, scalar = _asarray(x)
    _check(arr, 1.0, t.x_max, "counting curve")
    if (arr < 2).any():
        raise CoverageError(f"pi_floor needs x >= 2")
    flat = arr.ravel()
    value, _, kind, n = _inverse_parts(t, flat)
    fl = np.floor(value).astype(np.int64)
    below = (kind == MINUS) & (flat < t.array[n - 1])
    fl[below] = np.minimum(fl[below], n[below] - 1)
    fl = fl.reshape(arr.shape)
    return int(fl) if scalar else fl
