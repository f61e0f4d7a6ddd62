"""Command line interface.

Every run writes a one-line JSON manifest to stderr (and next to ``--out``
when given). Exit codes: 0 success, 2 domain error, 3 no convergence (best
estimate still printed), 64 usage error.
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import math
import operator
import os
import re
import sys
import time
import warnings as _warnings
from fractions import Fraction

import mpmath

from . import __version__, contfrac
from .errors import ConvergenceError, DomainError, PrecisionExhausted, RationalAlpha
from .params import StableParams

EXIT_OK, EXIT_DOMAIN, EXIT_CONVERGENCE, EXIT_USAGE = 0, 2, 3, 64
PRECISION_ENV = "STABLESUP_PRECISION"
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- number parsing

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"pi": lambda: mpmath.pi, "e": lambda: mpmath.e, "phi": lambda: mpmath.phi}
_FUNCS = {"sqrt": mpmath.sqrt, "exp": mpmath.exp, "log": mpmath.log}


def _eval(node):
    if isinstance(node, ast.Expression):
        return _eval(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return mpmath.mpf(node.value) if isinstance(node.value, int) else mpmath.mpf(str(node.value))
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]()
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS and len(node.args) == 1):
        return _FUNCS[node.func.id](_eval(node.args[0]))
    raise UsageError(f"unsupported expression element {ast.dump(node)[:40]}")


def parse_real(text: str, precision: int | None):
    """Return ``(value, bits)``.

    A plain decimal literal is read as a double (53 trustworthy bits) unless a
    precision is given explicitly. Expressions like ``sqrt(2)/2`` are evaluated
    with mpmath at the working precision.
    """
    text = text.strip()
    if _FLOAT_RE.match(text) and precision is None:
        return float(text), contfrac.FLOAT_PRECISION
    bits = precision or contfrac.DEFAULT_PRECISION
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise UsageError(f"cannot parse number {text!r}") from exc
    with mpmath.workprec(bits + 16):
        v = _eval(tree)
    return contfrac.to_fraction(v), bits


def _precision_default():
    v = os.environ.get(PRECISION_ENV)
    return int(v) if v else None


def _params(args, alpha_text, rho_text, *, need_irrational=True) -> StableParams:
    a, bits = parse_real(alpha_text, args.precision)
    r, _ = parse_real(rho_text, args.precision)
    p = StableParams.create(a, r, precision=bits, assume_irrational=args.assume_irrational)
    if need_irrational and p.is_rational:
        raise RationalAlpha(
            f"alpha={p.alpha!r} is numerically rational; pass --assume-irrational "
            "to treat the input as a truncated irrational"
        )
    return p


def _positive_float(text):
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive and finite: {text!r}")
    return v


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad list {text!r}") from exc


# ---------------------------------------------------------------- run context


class Run:
    """Collects output, warnings and manifest data for one invocation."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.warnings: list[str] = []
        self.seeds: list[int] = []
        self.precision: int | None = None
        self.exit = EXIT_OK
        self.t0 = time.perf_counter()

    def emit(self, text: str, stdout):
        if self.args.out:
            with open(self.args.out, "w", newline="") as fh:
                fh.write(text)
        else:
            stdout.write(text)

    def manifest(self) -> dict:
        return {
            "subcommand": self.args.command if self.args.command != "diag"
            else f"diag {self.args.diag_command}",
            "argv": self.argv,
            "version": __version__,
            "precision_bits": self.precision,
            "seeds": self.seeds,
            "wall_time": time.perf_counter() - self.t0,
            "warnings": self.warnings,
            "exit_code": self.exit,
        }


    def capture(self, fn, *a, **kw):
        """Call fn, recording any warnings it raises so outputs can carry them inline."""
        with _warnings.catch_warnings(record=True) as caught:
            _warnings.simplefilter("always")
            out = fn(*a, **kw)
        self.warnings.extend(f"{w.category.__name__}: {w.message}" for w in caught)
        return out


def load_schema(name: str) -> dict:
    """Committed JSON schema for a subcommand's output (``manifest`` included)."""
    from importlib import resources

    return json.loads(resources.files("stablesup").joinpath("schemas", f"{name}.json").read_text())


def _json(obj) -> str:
    return json.dumps(obj, allow_nan=True) + "\n"


# ---------------------------------------------------------------- subcommands


def cmd_cf(run: Run, args, stdout):
    x, bits = parse_real(args.x, args.precision)
    exp = run.capture(contfrac.expand, x, max_terms=args.terms, quotient_cap=args.quotient_cap,
                      precision=bits)
    run.precision = bits
    out = exp.to_json()
    out["warnings"] = list(run.warnings)
    run.emit(_json(out), stdout)


def cmd_coeff(run: Run, args, stdout):
    from .coeffs import CoefficientGrid

    p = _params(args, args.alpha, args.rho, need_irrational=False)
    run.precision = p.precision
    grid = CoefficientGrid(p)
    if args.which == "a":
        v = run.capture(grid.a_coeff, args.m, args.n)
    else:
        if args.n < 1:
            raise UsageError("b coefficients need --n >= 1")
        v = run.capture(grid.b_coeff, args.m, args.n)
    out = {"alpha": p.alpha, "rho": p.rho, "which": args.which, "m": args.m, "n": args.n,
           "sign": v.sign, "log_mag": v.log_mag,
           "value": float(v) if v.representable else None, "warnings": list(run.warnings)}
    if args.json:
        run.emit(_json(out), stdout)
    else:
        lin = "" if out["value"] is None else f" value={out['value']:.17g}"
        run.emit(f"{args.which}[{args.m},{args.n}] sign={v.sign} log_mag={v.log_mag:.17g}{lin} "
                 f"warnings={json.dumps(run.warnings)}\n", stdout)


def _density_result(p, x, args):
    from .series import density

    try:
        res = density(p, x, method=args.method, tol=args.tol, q_max=args.qmax)
    except ConvergenceError as exc:
        if exc.result is None:
            raise
        res = exc.result
    return res


def cmd_density(run: Run, args, stdout):
    from .series import Verdict

    p = _params(args, args.alpha, args.rho)
    run.precision = p.precision
    res = _density_result(p, args.x, args)
    run.warnings.extend(res.warnings)
    if res.verdict is not Verdict.CONVERGED:
        run.exit = EXIT_CONVERGENCE
    out = res.to_json()
    out["x"] = args.x
    if args.json:
        run.emit(_json(out), stdout)
    else:
        run.emit(
            f"p({args.x:g})={res.value:.17g} est_error={res.estimated_error:.3g} "
            f"method={res.method.value} verdict={res.verdict.value} "
            f"warnings={json.dumps(res.warnings)}\n",
            stdout,
        )


def cmd_table(run: Run, args, stdout):
    import numpy as np

    from .series import Verdict

    if not 0 < args.xmin < args.xmax or args.points < 1:
        raise UsageError("need 0 < xmin < xmax and points >= 1")
    p = _params(args, args.alpha, args.rho)
    run.precision = p.precision
    if args.spacing == "log":
        xs = np.geomspace(args.xmin, args.xmax, args.points)
    else:
        xs = np.linspace(args.xmin, args.xmax, args.points)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["x", "p", "method", "est_error", "verdict", "warnings"])
    for x in xs:
        res = _density_result(p, float(x), args)
        if res.verdict is not Verdict.CONVERGED:
            run.exit = EXIT_CONVERGENCE
        run.warnings.extend(f"x={x:g} {w_}" for w_ in res.warnings)
        w.writerow([repr(float(x)), repr(res.value), res.method.value,
                    repr(res.estimated_error), res.verdict.value, "; ".join(res.warnings)])
    run.emit(buf.getvalue(), stdout)


def cmd_trace(run: Run, args, stdout):
    from .series import partial_sum_trace

    p = _params(args, args.alpha, args.rho)
    run.precision = p.precision
    cutoffs = contfrac.cutoff_sequence(p, args.qmax)
    tr = run.capture(partial_sum_trace, p, args.x, cutoffs, args.tol)
    out = tr.to_json()
    out["cutoffs"] = cutoffs
    out["warnings"] = list(run.warnings)
    run.emit(_json(out), stdout)


def cmd_diag(run: Run, args, stdout):
    from . import diagnostics as dg

    c = args.diag_command
    if c == "sec":
        tau, bits = parse_real(args.tau, args.precision)
        run.precision = bits
        rep = run.capture(dg.secant_product_report, tau, args.kmax, precision=bits,
                          convention=args.convention)
        if rep.truncated:
            run.warnings.append("PrecisionExhausted: report truncated")
        out = rep.to_json()
        out["warnings"] = list(run.warnings)
    elif c == "buslaev":
        beta, bits = parse_real(args.beta, args.precision)
        run.precision = bits
        rows = run.capture(dg.buslaev_average, beta, args.kmax, precision=bits)
        out = {"beta": float(beta), "rows": [
            {"q_k": r.q_k, "average": r.average, "identity_gap": r.identity_gap} for r in rows]}
        out["warnings"] = list(run.warnings)
    elif c == "patho":
        pn = dg.build_pathological(args.levels)
        run.precision = pn.precision_bits
        out = pn.to_json()
        out["secant_log"] = [
            {"n": n, "q_n": pn.q[n], "log_abs_sec": pn.secant_log(n),
             "log_lower_bound": pn.q[n] ** 2 * math.log(2) - math.log(math.pi)}
            for n in range(1, pn.levels) if pn.q[n].bit_length() < 64
        ]
        out["warnings"] = []
    else:  # audit
        alpha, bits = parse_real(args.alpha, args.precision)
        run.precision = bits
        rows = run.capture(dg.exponential_bound_audit, alpha, args.kmax, precision=bits)
        out = {"alpha": float(alpha), "rows": [{"k": k, "log_product_over_k": v} for k, v in rows]}
        out["warnings"] = list(run.warnings)
    run.emit(_json(out), stdout)


def _sim_config(args, p):
    from .oracle import SimulationConfig

    return SimulationConfig(p, args.paths, args.steps, args.seed, estimator=args.estimator,
                            bins=args.bins, threads=args.threads)


def cmd_mc(run: Run, args, stdout):
    from .oracle import estimate_sup_density

    p = _params(args, args.alpha, args.rho, need_irrational=False)
    run.precision = p.precision
    run.seeds.append(args.seed)
    est = run.capture(estimate_sup_density, _sim_config(args, p))
    if est.tail_mass > 0:
        run.warnings.append(f"TailMass: {est.tail_mass:.6g} of maxima beyond the grid")
    note = "; ".join(run.warnings)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    has_ext = est.extrapolated is not None
    w.writerow(["x", "density", "stderr"] + (["extrapolated", "extrapolated_stderr"] if has_ext else [])
               + ["warnings"])
    for i, x in enumerate(est.grid):
        row = [repr(float(x)), repr(float(est.density[i])), repr(float(est.stderr[i]))]
        if has_ext:
            row += [repr(float(est.extrapolated[i])), repr(float(est.extrapolated_stderr[i]))]
        w.writerow(row + [note])
    run.emit(buf.getvalue(), stdout)


def cmd_compare(run: Run, args, stdout):
    from .oracle import compare_with_series, estimate_sup_density

    p = _params(args, args.alpha, args.rho)
    run.precision = p.precision
    run.seeds.append(args.seed)
    mc_p = p
    if args.mc_rho is not None:
        mc_p = _params(args, args.alpha, args.mc_rho)
    est = run.capture(estimate_sup_density, _sim_config(args, mc_p))
    rows = run.capture(compare_with_series, p, args.xs, est, series_tol=args.tol)
    for r in rows:
        if r.flagged:
            run.warnings.append(f"Flagged: |z|={abs(r.z):.2f} at x={r.x:g}")
    out = {"alpha": p.alpha, "rho": p.rho, "n_paths": args.paths, "n_steps": args.steps,
           "seed": args.seed, "rows": [
               {"x": r.x, "p_series": r.p_series, "p_series_bin": r.p_series_bin,
                "p_mc": r.p_mc, "stderr": r.stderr, "z": r.z, "flagged": bool(r.flagged)}
               for r in rows],
           "warnings": list(run.warnings)}
    run.emit(_json(out), stdout)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="stablesup", description="Supremum density of stable processes")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--precision", type=int, default=_precision_default(),
                        help=f"trustworthy bits of real inputs (env {PRECISION_ENV})")
    common.add_argument("--out", help="write output here; the manifest goes to OUT.manifest.json")
    common.add_argument("--assume-irrational", action="store_true",
                        help="treat a decimal alpha as a truncated irrational")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cf", parents=[common], help="continued fraction expansion")
    p.add_argument("x")
    p.add_argument("--terms", type=int, default=20)
    p.add_argument("--quotient-cap", type=int, default=contfrac.DEFAULT_QUOTIENT_CAP)

    p = sub.add_parser("coeff", parents=[common], help="series coefficient a or b")
    p.add_argument("alpha")
    p.add_argument("rho")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--which", choices=("a", "b"), default="a")
    p.add_argument("--json", action="store_true")

    def series_opts(p):
        p.add_argument("--method", choices=("tri", "abs", "auto"), default="tri")
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--qmax", type=int, default=4000)

    p = sub.add_parser("density", parents=[common], help="p(x) at one point")
    p.add_argument("alpha")
    p.add_argument("rho")
    p.add_argument("x", type=_positive_float)
    series_opts(p)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("table", parents=[common], help="CSV table of p(x)")
    p.add_argument("alpha")
    p.add_argument("rho")
    p.add_argument("--xmin", type=float, required=True)
    p.add_argument("--xmax", type=float, required=True)
    p.add_argument("--points", type=int, default=50)
    p.add_argument("--spacing", choices=("log", "linear"), default="log")
    series_opts(p)

    p = sub.add_parser("trace", parents=[common], help="per-cutoff partial sums as JSON")
    p.add_argument("alpha")
    p.add_argument("rho")
    p.add_argument("x", type=_positive_float)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--qmax", type=int, default=4000)

    p = sub.add_parser("diag", help="Diophantine diagnostics")
    dsub = p.add_subparsers(dest="diag_command", required=True)
    d = dsub.add_parser("sec", parents=[common])
    d.add_argument("tau")
    d.add_argument("--kmax", type=int, default=12)
    d.add_argument("--convention", choices=("2tau", "tau"), default="2tau")
    d = dsub.add_parser("buslaev", parents=[common])
    d.add_argument("beta")
    d.add_argument("--kmax", type=int, default=12)
    d = dsub.add_parser("patho", parents=[common])
    d.add_argument("--levels", type=int, default=3)
    d = dsub.add_parser("audit", parents=[common])
    d.add_argument("alpha")
    d.add_argument("--kmax", type=int, default=500)

    def mc_opts(p):
        p.add_argument("--paths", type=int, default=100_000)
        p.add_argument("--steps", type=int, default=1000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--estimator", choices=("histogram", "kde"), default="histogram")
        p.add_argument("--bins", type=int, default=400)

    p = sub.add_parser("mc", parents=[common], help="Monte Carlo supremum density (CSV)")
    p.add_argument("alpha")
    p.add_argument("rho")
    mc_opts(p)

    p = sub.add_parser("compare", parents=[common], help="series against Monte Carlo")
    p.add_argument("alpha")
    p.add_argument("rho")
    p.add_argument("--xs", type=_float_list, default=[0.5, 1.0, 2.0])
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--mc-rho", default=None, help="simulate at a different rho (negative control)")
    mc_opts(p)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    return ap


_COMMANDS = {"cf": cmd_cf, "coeff": cmd_coeff, "density": cmd_density, "table": cmd_table,
             "trace": cmd_trace, "diag": cmd_diag, "mc": cmd_mc, "compare": cmd_compare}


def _error_line(kind: str, exc: Exception) -> str:
    return json.dumps({"error": kind, "message": str(exc)})


def main(argv=None, stdout=None, stderr=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        stderr.write(_error_line("UsageError", exc) + "\n")
        return EXIT_USAGE
    if args.command == "rerun":
        try:
            with open(args.manifest) as fh:
                old = json.load(fh)
            argv = old["argv"]
        except (OSError, ValueError, KeyError) as exc:
            stderr.write(_error_line("UsageError", exc) + "\n")
            return EXIT_USAGE
        return main(argv, stdout, stderr)

    run = Run(args, argv)
    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        try:
            _COMMANDS[args.command](run, args, stdout)
        except UsageError as exc:
            stderr.write(_error_line("UsageError", exc) + "\n")
            return EXIT_USAGE
        except (DomainError, PrecisionExhausted) as exc:
            stderr.write(_error_line(type(exc).__name__, exc) + "\n")
            run.exit = EXIT_DOMAIN
        except ConvergenceError as exc:
            stderr.write(_error_line(type(exc).__name__, exc) + "\n")
            run.exit = EXIT_CONVERGENCE
        except ValueError as exc:
            # remaining invalid-argument cases caught by library validation
            stderr.write(_error_line("UsageError", exc) + "\n")
            return EXIT_USAGE
    for w in caught:
        msg = f"{w.category.__name__}: {w.message}"
        if issubclass(w.category, (RuntimeWarning, UserWarning)) and msg not in run.warnings:
            run.warnings.append(msg)
    man = run.manifest()
    stderr.write(json.dumps({"manifest": man}) + "\n")
    if args.out:
        with open(args.out + ".manifest.json", "w") as fh:
            json.dump(man, fh, indent=2)
    return run.exit


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
