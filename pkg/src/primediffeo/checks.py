"""Invariant suite for a prime table and its spline pair, as run by ``check``."""

from __future__ import annotations

import numpy as np

from . import diffeo
from .primes import PrimeTable, _simple_sieve


def _sample(rng, lo, hi, size):
    # open at lo, closed at hi; knots are added separately
    return hi - (hi - lo) * rng.random(size)


def run_checks(t: PrimeTable, samples: int = 100_000, seed: int = 0, rtol: float = 1e-9):
    """Return a list of (name, passed, detail) tuples."""
    rng = np.random.default_rng(seed)
    p = t.array
    N = t.limit_n
    results = []

    def record(name, ok, detail=""):
        results.append((name, bool(ok), detail))

    sieve = _simple_sieve(int(p.max()) if p.size else 2)[:N]
    record("table is the first N primes",
           p.size == sieve.size and np.array_equal(p, sieve) and np.all(np.diff(p) > 0),
           f"N={N}")

    n = np.arange(2, N)
    mid = (p[n - 1] + p[n]) / 2
    interp = (np.array_equal(diffeo.p_eval(t, n.astype(float)), p[n - 1].astype(float))
              and np.array_equal(diffeo.p_eval(t, n + 0.5), mid)
              and np.array_equal(diffeo.pinv_eval(t, p[n - 1].astype(float)), n.astype(float))
              and np.array_equal(diffeo.pinv_eval(t, mid), n + 0.5))
    record("interpolation at knots", interp)

    xf = _sample(rng, 0.0, diffeo.forward_max(t), samples)
    xi = _sample(rng, 1.0, t.x_max, samples)
    err_fwd = np.abs(diffeo.pinv_eval(t, diffeo.p_eval(t, xf)) - xf) / np.maximum(1.0, xf)
    err_inv = np.abs(diffeo.p_eval(t, diffeo.pinv_eval(t, xi)) - xi) / np.maximum(1.0, xi)
    worst = max(err_fwd.max(), err_inv.max())
    record("round trip", worst <= rtol, f"max rel err {worst:.3g}")

    dp = diffeo.p_deriv(t, xf)
    dpi = diffeo.pinv_deriv(t, xi)
    record("derivative bounds", dp.min() >= 1 and dpi.min() > 0 and dpi.max() <= 1,
           f"min p'={dp.min():.6g}, pinv' in [{dpi.min():.3g}, {dpi.max():.6g}]")

    g = p[n] - p[n - 1] - 1
    knots = (np.all(diffeo.p_deriv(t, n.astype(float)) == 1)
             and np.all(diffeo.pinv_deriv(t, p[n - 1].astype(float)) == 1)
             and np.array_equal(diffeo.pinv_deriv(t, mid), 1.0 / (2 * g + 1)))
    record("knot derivative values", knots)

    flips = True
    for k in range(3, N):
        if p[k - 1] - p[k - 2] - 1 > 0 and p[k] - p[k - 1] - 1 > 0:
            fl = diffeo.second_deriv(t, float(k), "forward", "left")
            fr = diffeo.second_deriv(t, float(k), "forward", "right")
            il = diffeo.second_deriv(t, float(p[k - 1]), "inverse", "left")
            ir = diffeo.second_deriv(t, float(p[k - 1]), "inverse", "right")
            if np.sign(fl) * np.sign(fr) != -1 or np.sign(il) * np.sign(ir) != -1:
                flips = False
                break
    record("second-derivative sign flip", flips)

    xc = xi[xi >= 2]
    counts = np.searchsorted(p, xc, side="right")
    record("floor of counting curve is pi", np.array_equal(diffeo.pi_floor(t, xc), counts))
    dist = np.abs(diffeo.pinv_eval(t, xc) - counts).max() if xc.size else 0.0
    record("|p^-1(x) - pi(x)| <= 1", dist <= 1, f"max {dist:.6g}")

    # rounding of u = p^-1(x) (relative 1e-16, |u| up to N) is amplified by
    # p''(u) / p'(u), which reaches several hundred, hence the looser bound
    chain = np.abs(dpi * diffeo.p_deriv(t, diffeo.pinv_eval(t, xi)) - 1).max()
    record("chain rule", chain <= 1e-7, f"max {chain:.3g}")
    return results
