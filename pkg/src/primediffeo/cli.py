"""Command-line entry point: eval, solve, koch, check.

Settings come from dataclass defaults, then an optional key=value config
file (``--config``), then flags.  Every file or CSV the CLI writes starts
with ``# key=value`` lines holding the full effective configuration, and
nothing time-dependent is ever written, so identical settings give
byte-identical output.

Exit codes: 0 success, 1 no accepted solution (solve) or failed check,
2 usage or domain error.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from . import analysis, diffeo
from .checks import run_checks
from .primes import CoverageError, PrimeTable, TableSizeError, build_table, cached_table
from .problems import ProblemFormatError, get_problem, load_problem, make_system, parse_box_arg
from .solver import SolverConfig, fraction_to_decimal, solve

EXIT_OK, EXIT_NONE, EXIT_USAGE = 0, 1, 2
DEFAULT_RESTARTS = 400


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    n_primes: int = 100_000
    prime_cache: str = ""
    li_tol: float = analysis.DEFAULT_TOL
    # solve
    problem: str = ""
    problem_file: str = ""
    target: Optional[int] = None
    box: str = ""
    x0: str = ""  # extra starts, "a,b,c;d,e,f"
    seed: int = 0
    restarts: Optional[int] = None  # None: the problem's own suggestion
    max_iter: int = 500
    tol_F: float = 1e-14
    tol_step: float = 1e-13
    extractor_clamp: float = 1e-12
    candidate_tol: float = 1e-3
    out: str = ""
    # koch
    scan_from: float = 3.0
    scan_to: float = 100.0
    scan_step: float = 0.1
    fd_step: float = analysis.FD_STEP
    n_range: str = "2:100"
    regime_n: int = 25
    alpha: float = 0.525
    # check
    check_samples: int = 100_000

    def header(self, command: str) -> str:
        lines = [f"# command={command}"]
        for f in fields(self):
            lines.append(f"# {f.name}={_fmt_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.15g}"
    return str(v)


def _convert(name: str, raw: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    if raw == "" and "Optional" in str(kind):
        return None
    try:
        if "int" in str(kind):
            return int(raw)
        if "float" in str(kind):
            return float(raw)
    except ValueError:
        raise UsageError(f"config: {name}={raw!r} is not a number") from None
    return raw


def read_config(path) -> dict:
    """Parse a ``key=value`` file; ``#`` starts a comment."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"config: {exc}") from None
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in known:
            raise UsageError(f"config line {number}: {raw!r} is not a known key=value")
        values[key] = _convert(key, value.strip())
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = dataclasses.replace(cfg, **read_config(args.config))
    known = {f.name for f in fields(RunConfig)}
    flags = {k: v for k, v in vars(args).items() if k in known and v is not None}
    return dataclasses.replace(cfg, **flags)


def load_table(cfg: RunConfig) -> PrimeTable:
    if cfg.n_primes < 3:
        raise UsageError("n_primes must be at least 3")
    if cfg.prime_cache:
        return cached_table(cfg.n_primes, cfg.prime_cache)
    return build_table(cfg.n_primes)


@contextlib.contextmanager
def _output(path: str):
    if not path or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="\n") as fh:
            yield fh


def _parse_starts(text: str) -> tuple:
    try:
        return tuple(tuple(float(v) for v in item.replace(",", " ").split())
                     for item in text.split(";") if item.strip())
    except ValueError:
        raise UsageError(f"--x0: cannot parse {text!r}") from None


def _parse_range(text: str) -> tuple[int, int]:
    a, sep, b = text.partition(":")
    try:
        lo, hi = int(a), int(b)
    except ValueError:
        raise UsageError(f"--n: expected a:b, got {text!r}") from None
    if not sep or lo > hi:
        raise UsageError(f"--n: expected a:b with a <= b, got {text!r}")
    return lo, hi


# -- commands -----------------------------------------------------------------

_EVAL = {
    "p": lambda t, x, cfg: diffeo.p_eval(t, x),
    "dp": lambda t, x, cfg: diffeo.p_deriv(t, x),
    "pinv": lambda t, x, cfg: diffeo.pinv_eval(t, x),
    "dpinv": lambda t, x, cfg: diffeo.pinv_deriv(t, x),
    "pi": lambda t, x, cfg: diffeo.pi_floor(t, x),
    "li": lambda t, x, cfg: analysis.li(x, cfg.li_tol),
    "K": lambda t, x, cfg: analysis.koch_K(t, x, cfg.li_tol),
}


def cmd_eval(args, cfg: RunConfig, table: PrimeTable | None = None) -> int:
    t = table if table is not None or args.what == "li" else load_table(cfg)
    values = [_EVAL[args.what](t, x, cfg) for x in args.x]  # fail before printing
    for v in values:
        print(v if isinstance(v, int) else f"{v:.15g}")
    return EXIT_OK


def cmd_solve(args, cfg: RunConfig, table: PrimeTable | None = None) -> int:
    overrides = {"target": cfg.target} if cfg.target is not None else None
    if cfg.problem_file:
        prob = load_problem(cfg.problem_file, overrides)
    elif cfg.problem:
        try:
            prob = get_problem(cfg.problem, cfg.target)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    else:
        raise UsageError("solve needs a problem name or --file")
    t = table if table is not None else load_table(cfg)
    box = parse_box_arg(cfg.box, prob.n) if cfg.box else None
    starts = prob.starts + _parse_starts(cfg.x0)
    restarts = cfg.restarts if cfg.restarts is not None else prob.restarts or DEFAULT_RESTARTS
    scfg = SolverConfig(max_iter=cfg.max_iter, restarts=restarts, seed=cfg.seed, tol_F=cfg.tol_F,
                        tol_step=cfg.tol_step, extractor_clamp=cfg.extractor_clamp,
                        candidate_tol=cfg.candidate_tol, x0=starts)
    report = solve(make_system(prob, t, box), scfg)

    if cfg.out:
        with _output(cfg.out) as fh:
            fh.write(cfg.header("solve"))
            for sol in report.solutions:
                fh.write(json.dumps(sol.to_record()) + "\n")
    statuses = " ".join(f"{k}={v}" for k, v in sorted(report.statuses.items()))
    print(f"# problem={prob.name} starts={report.starts} restarts={restarts} {statuses}")
    print(f"# candidates={len(report.solutions)} accepted={len(report.accepted)} "
          f"descent_fraction={report.descent_fraction:.15g}")
    for sol in report.solutions:
        lattice = ",".join(str(v) for v in sol.lattice)
        x = ",".join(f"{v:.15g}" for v in sol.x_real)
        print(f"accepted={str(sol.accepted).lower()} lattice={lattice} "
              f"residual={fraction_to_decimal(sol.residual_exact)} x={x}")
    return EXIT_OK if report.accepted else EXIT_NONE


def cmd_koch(args, cfg: RunConfig, table: PrimeTable | None = None) -> int:
    t = table if table is not None else load_table(cfg)
    if args.action == "scan":
        samples = analysis.koch_scan(t, cfg.scan_from, cfg.scan_to, cfg.scan_step,
                                     cfg.li_tol, cfg.fd_step)
        with _output(cfg.out) as fh:
            fh.write(cfg.header("koch scan"))
            analysis.write_koch_csv(samples, fh)
    elif args.action == "lhospital":
        lo, hi = _parse_range(cfg.n_range)
        rows = analysis.lhospital_table(t, lo, hi)
        with _output(cfg.out) as fh:
            fh.write(cfg.header("koch lhospital"))
            fh.write("n,at_prime,at_midpoint\n")
            for n, a, b in rows.tolist():
                fh.write(f"{int(n)},{a:.15g},{b:.15g}\n")
    else:
        model = analysis.fit_regime(t, cfg.regime_n, alpha=cfg.alpha, tol=cfg.li_tol)
        with _output(cfg.out) as fh:
            fh.write(cfg.header("koch regime"))
            for key, value in analysis.regime_report(t, model, cfg.li_tol).items():
                fh.write(f"{key}={_fmt_value(value)}\n")
    return EXIT_OK


def cmd_check(args, cfg: RunConfig, table: PrimeTable | None = None) -> int:
    t = table if table is not None else load_table(cfg)
    results = run_checks(t, samples=cfg.check_samples, seed=cfg.seed)
    with _output(cfg.out) as fh:
        fh.write(cfg.header("check"))
        for name, ok, detail in results:
            fh.write(f"{'PASS' if ok else 'FAIL'} {name}" + (f" ({detail})" if detail else "") + "\n")
        passed = sum(ok for _, ok, _ in results)
        fh.write(f"{passed}/{len(results)} checks passed\n")
    return EXIT_OK if passed == len(results) else EXIT_NONE


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file (flags override it)")
    common.add_argument("--n-primes", dest="n_primes", type=int, default=S,
                        help="size of the prime table (default 100000)")
    common.add_argument("--prime-cache", dest="prime_cache", default=S,
                        help="binary prime table cache, created if missing")
    common.add_argument("--li-tol", dest="li_tol", type=float, default=S)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="primediffeo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="evaluate p, p^-1, derivatives, pi, Li, K")
    p.add_argument("what", choices=sorted(_EVAL))
    p.add_argument("x", type=float, nargs="+")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("solve", parents=[common], help="solve a Diophantine system")
    p.add_argument("problem", nargs="?", default=S)
    p.add_argument("--file", dest="problem_file", default=S)
    p.add_argument("--target", type=int, default=S)
    p.add_argument("--box", default=S, help="lo:hi shared, or one lo:hi per unknown")
    p.add_argument("--x0", default=S, help="extra starting points, 'a,b,c;d,e,f'")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--restarts", type=int, default=S)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=S)
    p.add_argument("--tol-F", dest="tol_F", type=float, default=S)
    p.add_argument("--tol-step", dest="tol_step", type=float, default=S)
    p.add_argument("--extractor-clamp", dest="extractor_clamp", type=float, default=S)
    p.add_argument("--candidate-tol", dest="candidate_tol", type=float, default=S)
    p.add_argument("--out", default=S, help="line-delimited JSON candidate records")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("koch", parents=[common], help="von Koch diagnostic")
    p.add_argument("action", choices=["scan", "lhospital", "regime"])
    p.add_argument("--from", dest="scan_from", type=float, default=S)
    p.add_argument("--to", dest="scan_to", type=float, default=S)
    p.add_argument("--step", dest="scan_step", type=float, default=S)
    p.add_argument("--fd-step", dest="fd_step", type=float, default=S)
    p.add_argument("--n", dest="n_range", default=S,
                   help="a:b for lhospital, a single n for regime")
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--out", default=S)
    p.set_defaults(func=cmd_koch)

    p = sub.add_parser("check", parents=[common], help="run the invariant suite")
    p.add_argument("--n", dest="n_primes", type=int, default=S, help="table size")
    p.add_argument("--samples", dest="check_samples", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None, *, table: PrimeTable | None = None) -> int:
    """Run the CLI; ``table`` replaces the generated prime table (for testing)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "koch" and args.action == "regime":
            try:
                cfg = dataclasses.replace(cfg, regime_n=int(cfg.n_range)) if ":" not in cfg.n_range else cfg
            except ValueError:
                raise UsageError(f"--n: expected an integer, got {cfg.n_range!r}") from None
        return args.func(args, cfg, table)
    except CoverageError as exc:
        print(f"error: {exc} (prime table holds {cfg.n_primes} primes; raise --n-primes)",
              file=sys.stderr)
    except (UsageError, ProblemFormatError, TableSizeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
