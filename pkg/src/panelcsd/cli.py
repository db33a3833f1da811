"""Command-line interface.

Subcommands::

    panelcsd test --input panel.csv [--intercept] [--tests sn,qn,ln,cn,cd]
    panelcsd simulate --N 50 --T 50 --p 2 --hypothesis null --reps 1000
    panelcsd power-curve --reps 500 [--n-values 2-16]
    panelcsd verify

Exit codes: 0 success, 1 verification failure, 2 usage or data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from . import __version__
from .errors import DataError, DimensionError, DomainError, PanelCSDError
from .panel import PanelSchema, load_panel_csv, ols_residuals, pair_traces
from .correlation import residual_corr
from .simulation import DgpConfig, power_curve_csv, run_monte_carlo, run_power_curve
from .stattests import TEST_NAMES, run_tests_on_corr

SEED_ENV = "PANELCSD_SEED"
DEFAULT_SEED = 20240601

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _parse_tests(text):
    names = [t.strip().upper() for t in text.split(",") if t.strip()]
    bad = [t for t in names if t not in TEST_NAMES]
    if bad or not names:
        raise UsageError(f"--tests must be a comma list drawn from sn,qn,ln,cn,cd; got {text!r}")
    return names


def _parse_n_values(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def read_config_file(path) -> dict:
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            values[k.strip().replace("-", "_")] = v.strip()
    return values


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _write(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise UsageError(f"--alpha must lie in (0, 1), got {alpha}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="panelcsd", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"panelcsd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default=None)

    def sim_flags(p):
        p.add_argument("--config", default=None, help="key=value file mirroring the DGP config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--N", type=int, default=None)
        p.add_argument("--T", type=int, default=None)
        p.add_argument("--p", type=int, default=None)
        p.add_argument("--error-law", default=None, choices=("normal", "t6", "chi5"))
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--tests", default="sn,qn,ln,cn,cd")

    t = sub.add_parser("test", help="run the tests on a CSV panel")
    common(t)
    t.add_argument("--input", required=True)
    t.add_argument("--tests", default="sn,qn,ln,cn,cd")
    t.add_argument("--intercept", action="store_true", help="prepend a column of ones to every design")
    t.add_argument("--cd-alternative", choices=("two-sided", "greater"), default="two-sided")
    t.add_argument("--dump-traces", default=None, help="write pairwise traces to this CSV")
    t.add_argument("--dump-corr", default=None, help="write the correlation matrix to this CSV")

    s = sub.add_parser("simulate", help="Monte Carlo size/power for one configuration")
    common(s)
    sim_flags(s)
    s.add_argument("--hypothesis", default=None,
                   help="null, nonsparse, sparse or power_curve(n)")
    s.add_argument("--keep-decisions", action="store_true")

    pc = sub.add_parser("power-curve", help="power against block alternatives of size n")
    common(pc)
    sim_flags(pc)
    pc.add_argument("--n-values", default="2-16")

    v = sub.add_parser("verify", help="run the oracle suite")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--quick", action="store_true")
    v.add_argument("--out", default=None)
    return parser


# ---------------------------------------------------------------------------


def _outcomes_csv(rows) -> str:
    keys = ["test", "statistic", "transformed", "p_value", "alpha", "reject", "N", "T", "p"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in keys])
    return buf.getvalue()


def cmd_test(args) -> int:
    alpha = 0.05 if args.alpha is None else args.alpha
    _check_alpha(alpha)
    tests = _parse_tests(args.tests)
    if not os.path.exists(args.input):
        print(f"error: input file not found: {args.input}", file=sys.stderr)
        return EXIT_USAGE
    data = load_panel_csv(args.input, PanelSchema(add_intercept=args.intercept))
    res = ols_residuals(data)
    corr = residual_corr(res)
    traces = pair_traces(res)
    if args.dump_traces:
        traces.to_csv(args.dump_traces)
    if args.dump_corr:
        corr.to_csv(args.dump_corr)
    skip = {}
    if data.n_sections < 3:
        skip.update({t: "N >= 3" for t in ("LN", "CN")})
    if traces.m <= 4:
        skip["QN"] = "T - p > 4"
    for t in [t for t in tests if t in skip]:
        print(f"warning: {t} needs {skip[t]}; skipped", file=sys.stderr)
    tests = [t for t in tests if t not in skip]
    if not tests:
        raise UsageError("none of the requested tests applies to this panel")
    out = run_tests_on_corr(corr, traces, data.n_periods, alpha, tests, args.cd_alternative)
    rows = [o.to_dict() for o in out.values()]
    if (args.format or "json") == "csv":
        _write(_outcomes_csv(rows), args.out)
    else:
        _write(json.dumps(rows, indent=2) + "\n", args.out)
    return EXIT_OK


def _sim_config(args, **overrides) -> DgpConfig:
    values = {"master_seed": _default_seed()}
    if args.config:
        values.update(read_config_file(args.config))
    flags = {
        "master_seed": args.seed,
        "replications": args.reps,
        "N": args.N,
        "T": args.T,
        "p": args.p,
        "error_law": args.error_law,
        "alpha": args.alpha,
        "hypothesis": getattr(args, "hypothesis", None),
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    values.update(overrides)
    try:
        return DgpConfig.from_mapping(values)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    tests = _parse_tests(args.tests)
    report = run_monte_carlo(cfg, workers=args.workers, keep_decisions=args.keep_decisions, tests=tests)
    if (args.format or "json") == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(report.CSV_HEADER)
        for row in report.csv_rows():
            w.writerow([_fmt(v) for v in row])
        _write(buf.getvalue(), args.out)
    else:
        _write(report.to_json() + "\n", args.out)
    print(f"{cfg.replications} replications in {report.elapsed:.1f}s", file=sys.stderr)
    return EXIT_OK


def cmd_power_curve(args) -> int:
    if args.reps is None and not args.config:
        args.reps = 500
    cfg = _sim_config(args)
    tests = _parse_tests(args.tests)
    n_values = _parse_n_values(args.n_values)
    reports = run_power_curve(cfg, n_values, workers=args.workers, tests=tests)
    if (args.format or "csv") == "csv":
        _write(power_curve_csv(reports), args.out)
    else:
        _write(json.dumps([r.to_dict() for r in reports], indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .oracles import run_verification

    seed = _default_seed() if args.seed is None else args.seed
    checks = run_verification(seed=seed, quick=args.quick)
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"{mark}  {c.name}: target={c.target:.6g} estimate={c.estimate:.6g} "
              f"se={c.se:.3g} tol={c.tolerance:.3g}", file=sys.stderr)
    text = json.dumps([c.to_dict() for c in checks], indent=2) + "\n"
    _write(text, args.out)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY_FAILED


COMMANDS = {
    "test": cmd_test,
    "simulate": cmd_simulate,
    "power-curve": cmd_power_curve,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError, DimensionError, PanelCSDError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
