"""Autoregularized Gauss-Newton for underdetermined systems f(x) = 0, f: R^n -> R^m, n > m.

Each step solves

    (J^T J + eps_k I) dx = -J^T f,      eps_k = (sqrt(tau_k^2 + 4 c rho_k) - tau_k) / 2

with tau_k = ||J^T J||_inf, rho_k = ||J^T f||_inf and c = (eps_0 + eps_0 tau_0) / rho_0,
in diagonally column-scaled variables, by SVD.  Roots already harvested are
suppressed with the extractor weight w(x) = prod_j 1 / (1 - exp(-|x - r_j|^2)):
iterations run on the weighted residual sqrt(w) f, whose normal-equation
gradient is w J^T f + |f|^2 grad(w) / 2, i.e. w J^T f at every root of f.

Candidates are checked by rounding onto the problem lattice and evaluating
f1 exactly; only an exact zero is accepted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from . import diffeo
from .primes import CoverageError, nth_prime

log = logging.getLogger(__name__)

EPS0_GRID = tuple(10.0 ** k for k in range(-6, 3))


@dataclass
class ResidualSystem:
    n: int
    m: int
    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    name: str = ""
    evaluate: Optional[Callable] = None  # x -> (f, J) in one pass
    verify: Optional[Callable] = None  # x -> VerifiedSolution

    def __post_init__(self):
        if self.n <= self.m:
            raise ValueError(f"need n > m, got n={self.n}, m={self.m}")
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)

    def f_and_J(self, x):
        if self.evaluate is not None:
            return self.evaluate(x)
        return np.asarray(self.residual(x), dtype=float), np.asarray(self.jacobian(x), dtype=float)


@dataclass(frozen=True)
class SolverConfig:
    eps0_grid: tuple = EPS0_GRID
    max_iter: int = 500
    restarts: int = 400
    seed: int = 0
    tol_F: float = 1e-14
    tol_step: float = 1e-13
    extractor_clamp: float = 1e-12
    dedup_tol: float = 1e-6
    candidate_tol: float = 1e-3  # unsettled iterates with |f|_inf below this are still reported
    x0: tuple = ()  # explicit starts, used before random ones

    def __post_init__(self):
        if self.restarts < 1 and not self.x0:
            raise ValueError("restarts must be >= 1")
        for name in ("tol_F", "tol_step", "extractor_clamp", "dedup_tol", "candidate_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.eps0_grid or min(self.eps0_grid) <= 0:
            raise ValueError("eps0_grid must hold positive values")


@dataclass
class SolverState:
    x: np.ndarray
    k: int
    eps_k: float
    tau_k: float
    rho_k: float
    c: float
    scale: np.ndarray  # running max of Jacobian column norms
    f: np.ndarray
    normal: np.ndarray = field(repr=False)  # scaled J^T J (weighted)
    grad: np.ndarray = field(repr=False)  # scaled F_J x
    roots: list = field(default_factory=list, repr=False)
    clipped: bool = False


@dataclass
class VerifiedSolution:
    x_real: np.ndarray
    lattice: tuple
    residual_exact: Fraction
    accepted: bool
    status: str = ""
    iterations: int = 0
    eps0: float = float("nan")
    seed: int = 0
    start: int = -1

    def to_record(self) -> dict:
        return {
            "x_real": [float(v) for v in self.x_real],
            "lattice": list(self.lattice),
            "residual_exact": fraction_to_decimal(self.residual_exact),
            "residual_fraction": f"{self.residual_exact.numerator}/{self.residual_exact.denominator}",
            "accepted": self.accepted,
            "status": self.status,
            "iterations": self.iterations,
            "eps0": self.eps0,
            "seed": self.seed,
            "start": self.start,
        }


def fraction_to_decimal(q: Fraction, digits: int = 25) -> str:
    """Decimal string of a rational, ``digits`` significant digits, truncated."""
    if q == 0:
        return "0"
    sign = "-" if q < 0 else ""
    q = abs(q)
    exp = len(str(q.numerator)) - len(str(q.denominator))
    if Fraction(10) ** exp > q:
        exp -= 1
    scaled = q * Fraction(10) ** (digits - 1 - exp)
    mant = str(scaled.numerator // scaled.denominator)
    point = exp + 1  # digits before the decimal point
    if point <= 0:
        s = "0." + "0" * (-point) + mant
    elif point >= len(mant):
        s = mant + "0" * (point - len(mant))
    else:
        s = mant[:point] + "." + mant[point:]
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return sign + s


# -- building blocks ----------------------------------------------------------

def big_F(sys: ResidualSystem, x) -> np.ndarray:
    """F x = J(x)^T f(x), the gradient of |f|^2 / 2."""
    f, J = sys.f_and_J(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(f)):
        raise FloatingPointError(f"non-finite residual at x={x}")
    return J.T @ f


def epsilon_next(tau_k: float, rho_k: float, c: float) -> float:
    """Positive root of eps^2 + tau eps - c rho = 0; zero exactly when rho = 0."""
    if rho_k == 0:
        return 0.0
    # (sqrt(tau^2 + 4 c rho) - tau) / 2 without cancellation for large tau
    return 2.0 * c * rho_k / (math.sqrt(tau_k * tau_k + 4.0 * c * rho_k) + tau_k)


def _weights(x, roots, clamp):
    """Extractor weight and its gradient."""
    if len(roots) == 0:
        return 1.0, np.zeros_like(x)
    diff = x - np.asarray(roots)
    d2 = np.einsum("ij,ij->i", diff, diff)
    clamped = d2 < clamp
    s = np.maximum(d2, clamp)
    em = np.exp(-s)
    e = 1.0 / -np.expm1(-s)
    w = float(np.prod(e))
    # d e_j / d s_j = -e_j^2 exp(-s_j); grad s_j = 2 (x - r_j) unless clamped
    dlog = np.where(clamped, 0.0, -e * em)
    grad = w * (2.0 * dlog) @ diff
    return w, grad


def extractor_weight(x, roots, clamp: float = 1e-12) -> float:
    """prod_j 1 / (1 - exp(-max(clamp, |x - r_j|_2^2))); 1 for no roots."""
    if clamp <= 0:
        raise ValueError("clamp must be positive")
    return _weights(np.asarray(x, dtype=float), roots, clamp)[0]


def _linearize(sys, x, roots, cfg, scale):
    """Weighted residual, scaled normal matrix and gradient at x."""
    f, J = sys.f_and_J(x)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(J))):
        raise FloatingPointError(f"non-finite residual at x={x}")
    w, gw = _weights(x, roots, cfg.extractor_clamp)
    if w != 1.0:
        sw = math.sqrt(w)
        Jw = sw * J + np.outer(f, gw / (2.0 * sw))
        fw = sw * f
    else:
        Jw, fw = J, f
    scale = np.maximum(scale, np.maximum(np.sqrt(np.einsum("ij,ij->j", Jw, Jw)), 1e-12))
    Js = Jw / scale
    A = Js.T @ Js
    F = Js.T @ fw
    return f, A, F, scale


def _norm_inf(a):
    return float(np.abs(a).sum(axis=-1).max()) if a.ndim == 2 else float(np.abs(a).max())


def init_state(sys: ResidualSystem, x0, eps0: float, cfg: SolverConfig,
               roots=()) -> SolverState:
    x = np.clip(np.asarray(x0, dtype=float), sys.lower, sys.upper)
    f, A, F, scale = _linearize(sys, x, roots, cfg, np.zeros(sys.n))
    tau, rho = _norm_inf(A), _norm_inf(F)
    c = (eps0 + eps0 * tau) / rho if rho > 0 else math.inf
    return SolverState(x, 0, eps0, tau, rho, c, scale, f, A, F, list(roots))


def gn_step(sys: ResidualSystem, state: SolverState, cfg: SolverConfig) -> SolverState:
    """One regularized Gauss-Newton step; the iterate is clipped to the box.

    Raises np.linalg.LinAlgError if the SVD does not converge.
    """
    n = sys.n
    U, s, Vt = np.linalg.svd(state.normal + state.eps_k * np.eye(n))
    if s[-1] <= 0:
        raise np.linalg.LinAlgError("singular regularized normal matrix")
    dy = -(Vt.T @ ((U.T @ state.grad) / s))
    x_new = state.x + dy / state.scale
    clipped = bool(np.any(x_new < sys.lower) or np.any(x_new > sys.upper))
    x_new = np.clip(x_new, sys.lower, sys.upper)
    f, A, F, scale = _linearize(sys, x_new, state.roots, cfg, state.scale)
    tau, rho = _norm_inf(A), _norm_inf(F)
    return SolverState(x_new, state.k + 1, epsilon_next(tau, rho, state.c), tau, rho,
                       state.c, scale, f, A, F, state.roots, clipped)


@dataclass
class StartResult:
    state: SolverState
    status: str  # root | converged | stagnated | max_iter | failed
    descents: int = 0
    steps: int = 0


def run_start(sys: ResidualSystem, x0, eps0: float, cfg: SolverConfig, roots=()) -> StartResult:
    """Iterate from x0 until |F_J x|_inf < tol_F, stagnation, or max_iter."""
    try:
        state = init_state(sys, x0, eps0, cfg, roots)
    except FloatingPointError:
        return StartResult(None, "failed")
    if state.rho_k == 0:
        return StartResult(state, "root")
    descents = 0
    for _ in range(cfg.max_iter):
        if state.rho_k < cfg.tol_F:
            return StartResult(state, "converged", descents, state.k)
        try:
            new = gn_step(sys, state, cfg)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            log.debug("start abandoned: %s", exc)
            return StartResult(state, "failed", descents, state.k)
        descents += np.linalg.norm(new.f) <= np.linalg.norm(state.f)
        step = np.abs(new.x - state.x).max()
        state = new
        if step <= cfg.tol_step * (1.0 + np.abs(state.x).max()):
            status = "converged" if state.rho_k < cfg.tol_F else "stagnated"
            return StartResult(state, status, descents, state.k)
    status = "converged" if state.rho_k < cfg.tol_F else "max_iter"
    return StartResult(state, status, descents, state.k)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def verify_integer(prob, table, x_real) -> VerifiedSolution:
    """Round x onto the problem lattice and evaluate f1 exactly.

    Identity-mapped unknowns round to the nearest integer; prime-mapped ones
    round p^{-1}(x) to the nearest index n and take p_n.
    """
    x = np.asarray(x_real, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x_real must be finite")
    lattice = []
    for xi, m in zip(x.tolist(), prob.maps):
        if m.kind == "identity":
            lattice.append(_round_half_up(xi))
        else:
            n = _round_half_up(diffeo.pinv_eval(table, xi))
            if n < 1:
                raise CoverageError(f"x={xi} rounds below the first prime")
            lattice.append(nth_prime(table, n))
    residual = prob.exact_f1(lattice)
    return VerifiedSolution(x, tuple(lattice), residual, residual == 0)


@dataclass
class SolveReport:
    solutions: list
    starts: int = 0
    iterations: int = 0
    steps: int = 0
    descents: int = 0
    statuses: dict = field(default_factory=dict)

    @property
    def accepted(self):
        return [s for s in self.solutions if s.accepted]

    @property
    def descent_fraction(self) -> float:
        return self.descents / self.steps if self.steps else 1.0


def start_rng(seed: int, start: int) -> np.random.Generator:
    """Independent counter-based stream per (seed, start index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(start,))))


def solve(sys: ResidualSystem, cfg: SolverConfig) -> SolveReport:
    """Multistart search with root extraction and exact verification.

    Every start ends in a candidate; it is verified and kept when the start
    converged or stagnated, when its residual is below ``candidate_tol`` (a
    near miss worth reporting even if rejected), or when its rounding verifies
    exactly even though the real iteration had not settled.  Candidates within
    ``dedup_tol`` of a harvested root, or repeating a lattice point, are dropped.
    """
    if sys.verify is None:
        raise ValueError("system has no lattice verifier")
    roots: list[np.ndarray] = []
    seen: set = set()
    report = SolveReport([])
    total = max(cfg.restarts, len(cfg.x0))
    for i in range(total):
        rng = start_rng(cfg.seed, i)
        x0 = np.asarray(cfg.x0[i], dtype=float) if i < len(cfg.x0) else rng.uniform(sys.lower, sys.upper)
        eps0 = float(cfg.eps0_grid[rng.integers(len(cfg.eps0_grid))])
        res = run_start(sys, x0, eps0, cfg, roots)
        report.starts += 1
        report.statuses[res.status] = report.statuses.get(res.status, 0) + 1
        report.steps += res.steps
        report.descents += res.descents
        if res.state is None:
            continue
        report.iterations += res.state.k
        x = res.state.x
        if roots and np.abs(np.asarray(roots) - x).max(axis=1).min() < cfg.dedup_tol:
            continue
        try:
            sol = sys.verify(x)
        except (ValueError, ZeroDivisionError) as exc:
            log.debug("start %d: candidate not verifiable: %s", i, exc)
            continue
        settled = (res.status in ("root", "converged", "stagnated")
                   or np.abs(res.state.f).max() <= cfg.candidate_tol)
        if not (settled or sol.accepted) or sol.lattice in seen:
            continue
        seen.add(sol.lattice)
        sol = replace(sol, status=res.status, iterations=res.state.k, eps0=eps0,
                      seed=cfg.seed, start=i)
        report.solutions.append(sol)
        roots.append(np.array(sol.lattice, dtype=float) if sol.accepted and _lattice_is_root(sys, sol) else x)
        log.info("start %d: %s lattice=%s residual=%s", i, res.status, sol.lattice,
                 fraction_to_decimal(sol.residual_exact, 12))
    return report


def _lattice_is_root(sys, sol) -> bool:
    # the lattice point is itself a root of the real system only when it is in the box
    v = np.array(sol.lattice, dtype=float)
    return bool(np.all(v >= sys.lower) and np.all(v <= sys.upper))


def find_all_roots(sys: ResidualSystem, cfg: SolverConfig) -> list[VerifiedSolution]:
    return solve(sys, cfg).solutions
