import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from primediffeo.primes import build_table
from primediffeo.problems import get_problem, make_system
from primediffeo.solver import (
    ResidualSystem, SolverConfig, big_F, epsilon_next, extractor_weight, find_all_roots,
    fraction_to_decimal, gn_step, init_state, run_start, solve, start_rng, verify_integer,
)

T = build_table(1000)
PYTH = get_problem("pythagoras")


@pytest.mark.parametrize("tau, rho, c, eps", [(0, 0, 1, 0), (0, 1, 1, 1), (3, 4, 1, 1)])
def test_epsilon_next(tau, rho, c, eps):
    assert epsilon_next(tau, rho, c) == eps


def test_epsilon_next_solves_quadratic():
    for tau, rho, c in [(1e8, 1e-10, 3.0), (0.5, 2.0, 0.1), (1e-12, 1e3, 1e4)]:
        e = epsilon_next(tau, rho, c)
        assert e > 0
        assert e * e + tau * e == pytest.approx(c * rho, rel=1e-12)


def test_extractor_weight():
    assert extractor_weight([1.0, 2.0], []) == 1
    root = np.array([0.0, 0.0])
    x = np.array([math.sqrt(math.log(2)), 0.0])
    assert extractor_weight(x, [root]) == pytest.approx(2)
    assert extractor_weight(root, [root], clamp=1e-12) == pytest.approx(1 / -math.expm1(-1e-12))
    far = extractor_weight([30.0, 0.0], [root])
    near = extractor_weight([0.1, 0.0], [root])
    assert far == pytest.approx(1) and near > 50
    with pytest.raises(ValueError):
        extractor_weight(x, [root], clamp=0)


def test_big_F():
    sys = make_system(PYTH, T)
    # sin(3 pi) is ~1e-16 in floating point, not exactly zero
    assert np.abs(big_F(sys, [3.0, 4.0, 5.0])).max() < 1e-30
    rng = np.random.default_rng(3)
    x = rng.uniform(2, 20, 3)
    h = 1e-6

    def half_sq(v):
        f = sys.residual(v)
        return 0.5 * f @ f

    fd = np.array([(half_sq(x + h * e) - half_sq(x - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(big_F(sys, x), fd, rtol=1e-5, atol=1e-5)


def test_fraction_to_decimal():
    assert fraction_to_decimal(Fraction(0)) == "0"
    assert fraction_to_decimal(Fraction(1, 8)) == "0.125"
    assert fraction_to_decimal(Fraction(-3, 2)) == "-1.5"
    assert fraction_to_decimal(Fraction(1200)) == "1200"
    assert fraction_to_decimal(Fraction(1, 3), digits=5) == "0.33333"
    assert fraction_to_decimal(Fraction(2, 3), digits=5) == "0.66666"  # truncated
    assert fraction_to_decimal(Fraction(1, 1000)) == "0.001"


def test_verify_integer():
    prob = get_problem("nine-prime-cubes")
    x = np.array([2.0001, 2.9, 3.2, 3, 3, 5, 11, 11, 13.1])
    sol = verify_integer(prob, T, x)
    assert sol.lattice == (2, 3, 3, 3, 3, 5, 11, 11, 13)
    sol = verify_integer(prob, T, [2, 2, 3, 3, 3, 5, 11, 11, 13])
    assert sol.accepted and sol.residual_exact == 0
    fb = verify_integer(get_problem("fermat-bache"), T,
                        [787.000011, 348.99999357, 457.00002128, 1049.0000001, 5.0024058062])
    assert fb.lattice == (787, 349, 457, 1049, 5)
    assert not fb.accepted
    assert fraction_to_decimal(fb.residual_exact).startswith("0.002405488240")
    assert verify_integer(PYTH, T, [3.4, 3.6, 4.5]).lattice == (3, 4, 5)


def test_prime_rounding_uses_the_counting_curve():
    # 8.9 lies above the midpoint 9 of (7, 11)? no: p^{-1}(8.9) < 4.5, so it rounds to 7
    prob = get_problem("sierpinski")
    assert verify_integer(prob, T, [8.9, 9.1, 12.0]).lattice == (7, 11, 13)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(restarts=0)
    with pytest.raises(ValueError):
        SolverConfig(tol_F=0)
    with pytest.raises(ValueError):
        SolverConfig(eps0_grid=(0.0,))
    assert SolverConfig(restarts=0, x0=((1, 2, 3),)).restarts == 0


def test_residual_system_requires_underdetermined():
    with pytest.raises(ValueError):
        ResidualSystem(2, 2, None, None, [0, 0], [1, 1])


def test_gn_step_clips_to_box():
    sys = make_system(PYTH, T, box=[(1, 20)] * 3)
    cfg = SolverConfig()
    state = init_state(sys, [19.9, 19.9, 1.1], 1e-6, cfg)
    for _ in range(5):
        state = gn_step(sys, state, cfg)
        assert np.all(state.x >= 1) and np.all(state.x <= 20)


def test_run_start_at_root():
    sys = make_system(PYTH, T)
    res = run_start(sys, [3.0, 4.0, 5.0], 1e-3, SolverConfig())
    assert res.status in ("root", "converged") and res.steps == 0


def test_run_start_reduces_residual():
    sys = make_system(PYTH, T)
    x0 = [3.2, 4.1, 4.7]
    f0 = np.linalg.norm(sys.residual(np.array(x0)))
    res = run_start(sys, x0, 1e-2, SolverConfig(max_iter=200))
    assert np.linalg.norm(res.state.f) < f0


def test_start_rng_is_deterministic():
    assert start_rng(5, 3).random() == start_rng(5, 3).random()
    assert start_rng(5, 3).random() != start_rng(5, 4).random()


def test_pythagoras_roots():
    sys = make_system(PYTH, T, box=[(1, 20)] * 3)
    sols = find_all_roots(sys, SolverConfig(restarts=400, seed=0))
    accepted = {tuple(sorted(s.lattice)) for s in sols if s.accepted}
    oracle = {(a, b, c) for a, b, c in itertools.product(range(1, 21), repeat=3)
              if a <= b and a * a + b * b == c * c}
    assert {(3, 4, 5), (6, 8, 10), (5, 12, 13)} <= accepted
    assert accepted <= oracle
    for s in sols:
        assert s.accepted == (s.residual_exact == 0)
        assert np.all(s.x_real >= 1) and np.all(s.x_real <= 20)


def test_solve_is_deterministic():
    sys = make_system(get_problem("sierpinski"), T)
    cfg = SolverConfig(restarts=60, seed=11)
    a = [s.to_record() for s in solve(sys, cfg).solutions]
    b = [s.to_record() for s in solve(sys, cfg).solutions]
    assert a == b and a


def test_no_duplicate_lattice_points():
    sys = make_system(get_problem("sierpinski"), T)
    sols = solve(sys, SolverConfig(restarts=150, seed=2)).solutions
    lattices = [s.lattice for s in sols]
    assert len(lattices) == len(set(lattices))


def test_fermat_bache_near_miss_is_reported_and_rejected():
    prob = get_problem("fermat-bache")
    sys = make_system(prob, T)
    report = solve(sys, SolverConfig(restarts=0, x0=prob.starts))
    assert report.starts == 1
    [sol] = report.solutions
    assert sol.lattice == (787, 349, 457, 1049, 5)
    assert not sol.accepted
    rec = sol.to_record()
    assert rec["residual_exact"].startswith("0.002405488240")
    assert rec["accepted"] is False and rec["start"] == 0


def test_record_fields():
    sol = verify_integer(PYTH, T, [3.0, 4.0, 5.0])
    rec = sol.to_record()
    assert set(rec) >= {"x_real", "lattice", "residual_exact", "accepted", "iterations", "eps0", "seed"}
    assert rec["residual_exact"] == "0" and rec["lattice"] == [3, 4, 5]
