import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import primes_below
from primediffeo.primes import CoverageError, build_table
from primediffeo.problems import (
    IDENTITY, PRIME, LatticeMap, ProblemFormatError, catalog, catalog_names, exact_f1,
    f2_term, get_problem, h_value, load_problem, make_system, parse_box_arg, parse_f1,
    parse_problem,
)

T = build_table(1000)


@pytest.mark.parametrize("m, x, value", [
    (IDENTITY, 3.0, (0.0, 0.0)), (IDENTITY, 0.5, (1.0, 0.0)), (PRIME, 7.0, (0.0, 0.0)),
])
def test_f2_term(m, x, value):
    assert f2_term(m, T, x) == pytest.approx(value, abs=1e-14)


def test_h_value():
    assert h_value(PRIME, T, 9.0) == (4.5, 1 / 7)
    h, dh = h_value(IDENTITY, T, np.array([1.5, 2.0]))
    assert h.tolist() == [1.5, 2.0] and dh.tolist() == [1, 1]
    with pytest.raises(ValueError):
        LatticeMap("rational")


def test_pythagoras_system_at_root():
    sys = make_system(get_problem("pythagoras"), T)
    f, J = sys.f_and_J(np.array([3.0, 4.0, 5.0]))
    assert np.allclose(f, 0, atol=1e-20)
    assert J[0].tolist() == [6, 8, -10]


def test_sierpinski_f1():
    prob = get_problem("sierpinski")
    assert prob.f1([7, 11, 13]) == 0
    assert exact_f1(prob, [7, 11, 13]) == 0
    sys = make_system(prob, T)
    assert np.allclose(sys.residual(np.array([7.0, 11.0, 13.0])), 0, atol=1e-20)


def test_nineteen_fourth_powers_at_ones():
    prob = get_problem("nineteen-fourth-powers", target=19)
    assert prob.n == 19
    assert exact_f1(prob, [1] * 19) == 0


def test_catalog():
    rows = catalog()
    assert len(rows) == 6
    assert [p.name for p in rows] == catalog_names(variants=False)
    assert len(catalog(variants=True)) == 7
    fb = get_problem("fermat-bache")
    assert [m.kind for m in fb.maps] == ["prime"] * 4 + ["identity"]
    assert fb.starts and len(fb.starts[0]) == 5
    with pytest.raises(KeyError):
        get_problem("goldbach")


def test_nine_prime_cubes():
    prob = get_problem("nine-prime-cubes", target=5081)
    assert all(m.kind == "prime" for m in prob.maps)
    assert exact_f1(prob, (2, 2, 3, 3, 3, 5, 11, 11, 13)) == 0
    assert exact_f1(prob, (3, 5, 5, 5, 7, 7, 11, 11, 11)) == 0
    assert exact_f1(prob, (3, 5, 5, 5, 7, 7, 11, 11, 13)) != 0
    # the box reaches the largest prime any decomposition can use
    assert prob.box[0][1] > 13 and prob.box[0][1] ** 3 < 5081


def test_nine_prime_cubes_oracle():
    # all multisets of nine primes whose cubes sum to 5081
    ps = [p for p in primes_below(18)]
    found = {c for c in itertools.combinations_with_replacement(ps, 9)
             if sum(v ** 3 for v in c) == 5081}
    assert found == {(2, 2, 3, 3, 3, 5, 11, 11, 13), (3, 5, 5, 5, 7, 7, 11, 11, 11)}


def test_fermat_bache_residual():
    prob = get_problem("fermat-bache")
    r = exact_f1(prob, (787, 349, 457, 1049, 5))
    assert r == Fraction(787, 349) ** 2 - Fraction(457, 1049) ** 3 - 5
    assert r == Fraction(338205414843, 140597409368849)
    assert f"{float(r):.12f}" == "0.002405488240"


def test_lagrange_oracle():
    prob = get_problem("lagrange-four-prime-squares")
    assert prob.params["target"] == 87
    assert exact_f1(prob, (2, 3, 5, 7)) == 0
    oracle = {c for c in itertools.combinations_with_replacement(primes_below(8), 4)
              if sum(v * v for v in c) == 87}
    assert (2, 3, 5, 7) in oracle


def test_ratio_denominator_zero():
    prob = get_problem("fermat-bache")
    with pytest.raises(ZeroDivisionError):
        exact_f1(prob, (787, 0, 457, 1049, 5))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=1.6, max_value=900), min_size=4, max_size=4),
       st.floats(min_value=-40, max_value=40))
def test_jacobian_matches_finite_differences(xs, x5):
    sys = make_system(get_problem("fermat-bache"), T)
    x = np.array(xs + [x5])
    f, J = sys.f_and_J(x)
    h = 1e-6
    roundoff = 1e-8 * np.abs(f[0])  # cancellation in the difference quotient
    for j in range(5):
        e = np.zeros(5)
        e[j] = h * max(1.0, abs(x[j]))
        fd = (sys.residual(x + e) - sys.residual(x - e)) / (2 * e[j])
        assert np.allclose(J[:, j], fd, rtol=1e-4, atol=1e-5 + roundoff)


def test_make_system_errors():
    prob = get_problem("sierpinski")
    with pytest.raises(CoverageError):
        make_system(prob, T, box=[(1.5, 9000)] * 3)
    with pytest.raises(CoverageError):
        make_system(prob, T, box=[(0.5, 20)] * 3)
    with pytest.raises(ValueError):
        make_system(prob, T, box=[(1.5, 20)] * 2)
    two = parse_problem("name: t\nf1: x1 - x2\nmaps: identity*2\nbox: 0:5\n")
    with pytest.raises(ValueError):
        make_system(two, T)


def test_parse_f1_features():
    terms = parse_f1("2*x1^3 - (x2/x3)^2 + sum(x1..x3)^2 - target + x1^3", {"target": 9})
    as_dict = {t.powers: t.coef for t in terms}
    assert as_dict[((0, 3),)] == 3
    assert as_dict[((1, 2), (2, -2))] == -1
    assert as_dict[((0, 2),)] == 1
    assert as_dict[()] == -9
    assert parse_f1("x1^-2") [0].powers == ((0, -2),)


@pytest.mark.parametrize("text", [
    "x1 +", "x1 ^ y", "sum(x1..x3) * x2", "3 $ x1", "unknown * x1", "(x1 x2)",
])
def test_parse_f1_errors(text):
    with pytest.raises(ProblemFormatError):
        parse_f1(text)


def test_parse_problem_file(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text(
        "# a comment\nname: squares\nf1: x1^2 + x2^2 + x3^2 - target\n"
        "maps: prime*2 identity\nbox: 1.5:10 1.5:10 0:5\nparams: target=38\n"
        "start: 2,3,5 ; 5.2,3.1,1\nrestarts: 12\n")
    prob = load_problem(path)
    assert prob.n == 3 and prob.maps == (PRIME, PRIME, IDENTITY)
    assert prob.box == ((1.5, 10), (1.5, 10), (0, 5))
    assert prob.starts == ((2, 3, 5), (5.2, 3.1, 1))
    assert prob.restarts == 12
    assert exact_f1(prob, (2, 3, 5)) == 0
    assert exact_f1(load_problem(path, {"target": 39}), (2, 3, 5)) == -1


@pytest.mark.parametrize("text", [
    "name: a\nf1: x1\nmaps: identity*3\n",                          # no box
    "name: a\nf1: x4\nmaps: identity*3\nbox: 0:1\n",                # x4 beyond n
    "name: a\nf1: x1\nmaps: identity*3\nbox: 0:1 0:1\n",            # box mismatch
    "name: a\nf1: x1\nmaps: identity*3\nbox: 1:0\n",                # empty box
    "name: a\nf1: x1\nmaps: identity*3\nbox: 0-1\n",                # not lo:hi
    "name: a\nf1: x1\nmaps: identity*3\nbox: 0:1\nstart: 1,2\n",    # short start
    "name: a\nf1: x1\nmaps: identity*3\nbox: 0:1\nstart: a,b,c\n",  # bad start
    "name: a\nf1: x1\nmaps: identity*3\nbox: 0:1\nrestarts: many\n",
    "name a\n",
])
def test_parse_problem_errors(text):
    with pytest.raises(ProblemFormatError):
        parse_problem(text)


def test_parse_box_arg():
    assert parse_box_arg("1.5:25", 3) == ((1.5, 25),) * 3
    assert parse_box_arg("1:2,3:4", 2) == ((1, 2), (3, 4))
