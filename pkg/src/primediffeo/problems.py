"""Diophantine problems lifted to real systems over integers or primes.

A problem f1(x) = 0 is paired with the integrality penalty

    f2(x) = sum_i sin^2(pi h_i(x_i))

where h_i is the identity (integer unknown) or the counting curve p^{-1}
(prime unknown).  f1 is a sum of integer multiples of Laurent monomials,
which covers powers, ratios of unknowns, and integer constants.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import diffeo
from .primes import CoverageError, PrimeTable
from .solver import ResidualSystem, verify_integer


class ProblemFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeMap:
    kind: str  # "identity" or "prime"

    def __post_init__(self):
        if self.kind not in ("identity", "prime"):
            raise ValueError(f"unknown lattice map {self.kind!r}")


IDENTITY = LatticeMap("identity")
PRIME = LatticeMap("prime")


@dataclass(frozen=True)
class Term:
    """coef * prod(x_i ** k_i); ``powers`` holds (0-based index, exponent)."""
    coef: int
    powers: tuple[tuple[int, int], ...] = ()


def _merge(powers):
    acc: dict[int, int] = {}
    for i, k in powers:
        acc[i] = acc.get(i, 0) + k
    return tuple(sorted((i, k) for i, k in acc.items() if k != 0))


@dataclass(frozen=True)
class DiophantineProblem:
    name: str
    terms: tuple[Term, ...]
    maps: tuple[LatticeMap, ...]
    box: tuple[tuple[float, float], ...]
    params: dict = field(default_factory=dict, compare=False)
    text: str = ""
    starts: tuple[tuple[float, ...], ...] = ()  # suggested starting points
    restarts: int | None = None  # suggested multistart count

    def __post_init__(self):
        if len(self.maps) != len(self.box):
            raise ProblemFormatError(f"{self.name}: {len(self.maps)} maps but {len(self.box)} box entries")
        for term in self.terms:
            for i, _ in term.powers:
                if not 0 <= i < self.n:
                    raise ProblemFormatError(f"{self.name}: x{i + 1} beyond n={self.n}")
        for lo, hi in self.box:
            if not lo < hi:
                raise ProblemFormatError(f"{self.name}: empty box [{lo}, {hi}]")
        for x0 in self.starts:
            if len(x0) != self.n:
                raise ProblemFormatError(f"{self.name}: start {x0} needs {self.n} values")

    @property
    def n(self) -> int:
        return len(self.maps)

    def f1(self, x) -> float:
        x = np.asarray(x, dtype=float)
        total = 0.0
        for term in self.terms:
            v = float(term.coef)
            for i, k in term.powers:
                v *= x[i] ** k
            total += v
        return total

    def f1_grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.zeros(self.n)
        for term in self.terms:
            for j, kj in term.powers:
                v = float(term.coef * kj)
                for i, k in term.powers:
                    v *= x[i] ** (k - 1 if i == j else k)
                g[j] += v
        return g

    def exact_f1(self, lattice) -> Fraction:
        """f1 at an integer point in exact rational arithmetic."""
        xs = [int(v) for v in lattice]
        if len(xs) != self.n:
            raise ValueError(f"{self.name}: expected {self.n} values, got {len(xs)}")
        total = Fraction(0)
        for term in self.terms:
            v = Fraction(term.coef)
            for i, k in term.powers:
                if k < 0 and xs[i] == 0:
                    raise ZeroDivisionError(f"{self.name}: x{i + 1} = 0 in a denominator")
                v *= Fraction(xs[i]) ** k
            total += v
        return total


def exact_f1(prob: DiophantineProblem, lattice) -> Fraction:
    return prob.exact_f1(lattice)


def h_value(m: LatticeMap, t: PrimeTable, x):
    """(h(x), h'(x)) for a scalar or array x."""
    if m.kind == "identity":
        x = np.asarray(x, dtype=float)
        return (float(x), 1.0) if x.ndim == 0 else (x, np.ones_like(x))
    return diffeo.pinv_with_deriv(t, x)


def f2_term(m: LatticeMap, t: PrimeTable, x: float) -> tuple[float, float]:
    """sin^2(pi h(x)) and its derivative pi sin(2 pi h(x)) h'(x).

    dp^{-1}/dx is continuous at the spline knots, so no side is chosen here.
    """
    h, dh = h_value(m, t, x)
    return math.sin(math.pi * h) ** 2, math.pi * math.sin(2 * math.pi * h) * dh


def make_system(prob: DiophantineProblem, t: PrimeTable, box=None) -> ResidualSystem:
    """Residual (f1, f2) and its analytic 2 x n Jacobian."""
    if prob.n <= 2:
        raise ValueError(f"{prob.name}: need more unknowns than equations (n={prob.n} <= 2)")
    box = np.array(box if box is not None else prob.box, dtype=float)
    if box.shape != (prob.n, 2):
        raise ValueError(f"{prob.name}: box must have {prob.n} rows")
    is_prime = np.array([m.kind == "prime" for m in prob.maps])
    if is_prime.any():
        lo, hi = box[is_prime, 0].min(), box[is_prime, 1].max()
        if lo <= 1 or hi > t.x_max:
            raise CoverageError(
                f"{prob.name}: prime-mapped box [{lo}, {hi}] must lie in (1, {t.x_max}]")

    def h_all(x):
        h = x.copy()
        dh = np.ones_like(x)
        if is_prime.any():
            h[is_prime], dh[is_prime] = diffeo.pinv_with_deriv(t, x[is_prime])
        return h, dh

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        h, dh = h_all(x)
        s = np.sin(np.pi * h)
        f = np.array([prob.f1(x), float(s @ s)])
        J = np.vstack([prob.f1_grad(x), np.pi * np.sin(2 * np.pi * h) * dh])
        return f, J

    return ResidualSystem(
        n=prob.n,
        m=2,
        residual=lambda x: evaluate(x)[0],
        jacobian=lambda x: evaluate(x)[1],
        lower=box[:, 0],
        upper=box[:, 1],
        name=prob.name,
        evaluate=evaluate,
        verify=lambda x: verify_integer(prob, t, x),
    )


# -- text format --------------------------------------------------------------
#
#   name: sierpinski
#   f1: x1^2 + x2^2 - x3^2 - 1
#   maps: prime prime prime          (or "prime*3", mixed: "prime*4 identity")
#   box: 1.5:25 1.5:25 1.5:25        (a single entry applies to every unknown)
#   params: target=87
#   start: 7.1,11.2,12.9 ; 5,5,7     (optional starting points, ';'-separated)
#   restarts: 400                    (optional suggested multistart count)
#
# f1 terms: [INT *] factor (* factor)*, where a factor is an integer, a param
# name, xI[^K], (xI/xJ)[^K], or sum(xI..xJ)[^K] (only as a whole term).

_TOKEN = re.compile(r"\s*(?:(\d+)|(sum)|(x\d+)|([A-Za-z_]\w*)|(\.\.)|(.))")


def _tokens(text):
    out = []
    for m in _TOKEN.finditer(text):
        num, sm, var, name, dots, other = m.groups()
        if num:
            out.append(("int", int(num)))
        elif sm:
            out.append(("sum", sm))
        elif var:
            out.append(("var", int(var[1:]) - 1))
        elif name:
            out.append(("name", name))
        elif dots:
            out.append(("op", ".."))
        elif other and not other.isspace():
            out.append(("op", other))
    return out


class _Parser:
    def __init__(self, text, params):
        self.toks = _tokens(text)
        self.i = 0
        self.params = params
        self.text = text

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            raise ProblemFormatError(f"f1 {self.text!r}: unexpected {tok[1]!r} at token {self.i}")
        self.i += 1
        return tok[1]

    def exponent(self):
        if self.peek() == ("op", "^"):
            self.take()
            sign = -1 if self.peek() == ("op", "-") else 1
            if sign < 0:
                self.take()
            return sign * self.take("int")
        return 1

    def expr(self):
        terms = []
        sign = 1
        if self.peek() in (("op", "+"), ("op", "-")):
            sign = -1 if self.take() == "-" else 1
        terms.extend(self.term(sign))
        while self.peek() in (("op", "+"), ("op", "-")):
            sign = -1 if self.take() == "-" else 1
            terms.extend(self.term(sign))
        if self.peek()[0] is not None:
            raise ProblemFormatError(f"f1 {self.text!r}: trailing {self.peek()[1]!r}")
        return terms

    def term(self, sign):
        coef = sign
        powers = []
        while True:
            kind, val = self.peek()
            if kind == "sum":
                self.take()
                self.take("op", "(")
                a = self.take("var")
                self.take("op", "..")
                b = self.take("var")
                self.take("op", ")")
                k = self.exponent()
                if powers or self.peek() == ("op", "*"):
                    raise ProblemFormatError("sum(...) must stand alone in its term")
                return [Term(coef, ((i, k),)) for i in range(a, b + 1)]
            if kind == "int":
                coef *= self.take() ** self.exponent()
            elif kind == "name":
                self.take()
                if val not in self.params:
                    raise ProblemFormatError(f"f1 uses undefined parameter {val!r}")
                coef *= int(self.params[val]) ** self.exponent()
            elif kind == "var":
                i = self.take()
                powers.append((i, self.exponent()))
            elif (kind, val) == ("op", "("):
                self.take()
                i = self.take("var")
                self.take("op", "/")
                j = self.take("var")
                self.take("op", ")")
                k = self.exponent()
                powers += [(i, k), (j, -k)]
            else:
                raise ProblemFormatError(f"f1 {self.text!r}: expected a factor, got {val!r}")
            if self.peek() == ("op", "*"):
                self.take()
                continue
            return [Term(coef, _merge(powers))]


def parse_f1(text: str, params=None) -> tuple[Term, ...]:
    terms = _Parser(text, params or {}).expr()
    # collect like monomials, drop zeros
    acc: dict = {}
    for term in terms:
        acc[term.powers] = acc.get(term.powers, 0) + term.coef
    return tuple(Term(c, p) for p, c in acc.items() if c != 0)


def _parse_maps(text):
    maps = []
    for item in text.split():
        kind, _, count = item.partition("*")
        maps += [LatticeMap(kind)] * (int(count) if count else 1)
    return tuple(maps)


def _parse_box(text, n):
    entries = []
    for item in text.split():
        lo, sep, hi = item.partition(":")
        if not sep:
            raise ProblemFormatError(f"box entry {item!r} is not lo:hi")
        entries.append((float(lo), float(hi)))
    if len(entries) == 1:
        entries *= n
    return tuple(entries)


def parse_box_arg(text: str, n: int):
    """Parse a ``lo:hi`` (one per unknown, or a single shared one) box override."""
    return _parse_box(text.replace(",", " "), n)


def parse_problem(text: str, overrides=None) -> DiophantineProblem:
    """Build a problem from the key: value text format; ``overrides`` patch params."""
    fields: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ProblemFormatError(f"line {raw!r} is not 'key: value'")
        fields[key.strip().lower()] = value.strip()
    missing = {"name", "f1", "maps", "box"} - fields.keys()
    if missing:
        raise ProblemFormatError(f"problem missing {sorted(missing)}")
    params = {}
    for item in fields.get("params", "").replace(",", " ").split():
        k, _, v = item.partition("=")
        params[k] = int(v)
    params.update(overrides or {})
    maps = _parse_maps(fields["maps"])
    try:
        starts = tuple(tuple(float(v) for v in item.replace(",", " ").split())
                       for item in fields.get("start", "").split(";") if item.strip())
    except ValueError as exc:
        raise ProblemFormatError(f"bad start: {exc}") from None
    try:
        restarts = int(fields["restarts"]) if "restarts" in fields else None
    except ValueError:
        raise ProblemFormatError(f"bad restarts: {fields['restarts']!r}") from None
    return DiophantineProblem(
        name=fields["name"],
        terms=parse_f1(fields["f1"], params),
        maps=maps,
        box=_parse_box(fields["box"], len(maps)),
        params=params,
        text=text,
        starts=starts,
        restarts=restarts,
    )


def load_problem(path, overrides=None) -> DiophantineProblem:
    return parse_problem(Path(path).read_text(), overrides)


def problem_text(prob: DiophantineProblem) -> str:
    return prob.text


# -- catalog of real-Diophantine systems --------------------------------------

def _root_box(target: int, power: int, count: int, lo: float) -> str:
    # largest single term when every other term is at its smallest
    floor_term = math.ceil(lo) ** power
    top = max(target - (count - 1) * floor_term, 1) ** (1 / power)
    return f"{lo}:{top + 0.01:.6g}"


def _catalog_texts(targets: dict) -> dict[str, str]:
    lag = targets.get("lagrange-four-prime-squares", 87)
    cub = targets.get("nine-cubes", 5081)
    pcub = targets.get("nine-prime-cubes", 5081)
    quart = targets.get("nineteen-fourth-powers", 79)
    return {
        "pythagoras": (
            "name: pythagoras\nf1: x1^2 + x2^2 - x3^2\nmaps: identity*3\nbox: 1.5:25\n"),
        "sierpinski": (
            "name: sierpinski\nf1: x1^2 + x2^2 - x3^2 - 1\nmaps: prime*3\nbox: 1.5:25\n"),
        "lagrange-four-prime-squares": (
            "name: lagrange-four-prime-squares\nf1: sum(x1..x4)^2 - target\n"
            f"maps: prime*4\nbox: {_root_box(lag, 2, 4, 1.5)}\nparams: target={lag}\n"),
        "nine-cubes": (
            "name: nine-cubes\nf1: sum(x1..x9)^3 - target\n"
            f"maps: identity*9\nbox: {_root_box(cub, 3, 9, 1.0)}\nparams: target={cub}\n"
            "restarts: 2000\n"),
        "nine-prime-cubes": (
            "name: nine-prime-cubes\nf1: sum(x1..x9)^3 - target\n"
            f"maps: prime*9\nbox: {_root_box(pcub, 3, 9, 1.5)}\nparams: target={pcub}\n"
            "restarts: 2000\n"),
        "nineteen-fourth-powers": (
            "name: nineteen-fourth-powers\nf1: sum(x1..x19)^4 - target\n"
            f"maps: identity*19\nbox: {_root_box(quart, 4, 19, 1.0)}\nparams: target={quart}\n"),
        "fermat-bache": (
            "name: fermat-bache\nf1: (x1/x2)^2 - (x3/x4)^3 - x5\n"
            "maps: prime*4 identity\nbox: 1.5:1100 1.5:1100 1.5:1100 1.5:1100 -50:50\n"
            "start: 787.000011, 348.99999357, 457.00002128, 1049.0000001, 5.0024058062\n"
            "restarts: 50\n"),
    }


# the six table rows; nine cubes over primes stands for row 4, whose
# identity-mapped twin is available as a variant
_ROWS = ("pythagoras", "sierpinski", "lagrange-four-prime-squares", "nine-prime-cubes",
         "nineteen-fourth-powers", "fermat-bache")
_VARIANTS = ("nine-cubes",)


def catalog(targets: dict | None = None, variants: bool = False) -> list[DiophantineProblem]:
    """The six standard systems; ``variants`` adds the identity-mapped nine cubes."""
    texts = _catalog_texts(targets or {})
    names = _ROWS + (_VARIANTS if variants else ())
    return [parse_problem(texts[name]) for name in names]


def catalog_names(variants: bool = True) -> list[str]:
    return list(_ROWS + (_VARIANTS if variants else ()))


def get_problem(name: str, target: int | None = None) -> DiophantineProblem:
    texts = _catalog_texts({name: target} if target is not None else {})
    if name not in texts:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(texts)}")
    return parse_problem(texts[name])
