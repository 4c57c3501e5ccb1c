"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 invariant violation, 3 I/O error.
"""
from __future__ import annotations

import argparse
import itertools
import sys

import numpy as np

from .copulas import condition2_scan, make_copula
from .empirical import EmpiricalCopula, EvaluationGrid, RankMatrix, empirical_copula, read_sample_csv
from .harness import ConfigError, ExperimentConfig, emit_report, run_experiment, with_overrides
from .processes import DecompositionError, GridEvaluator, check_decomposition
from .smoothing import (MonteCarloSpec, SmoothingScheme, smooth_copula_closed,
                        smooth_copula_enumerate, smooth_copula_mc, variance_audit)

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _scheme(kind, gamma=None, m=None, rule="iqr", draws=10_000, seed=0) -> SmoothingScheme:
    mc = MonteCarloSpec(draws=draws, seed=seed)
    if kind == "beta":
        return SmoothingScheme.beta(mc=mc)
    if kind == "bernstein_fixed":
        if m is None:
            raise UsageError("--scheme bernstein_fixed needs --m")
        return SmoothingScheme.bernstein_fixed(m, mc=mc)
    if gamma is None:
        raise UsageError(f"--scheme {kind} needs --gamma")
    if kind == "bernstein_rate":
        return SmoothingScheme.bernstein_rate(gamma, mc=mc)
    return SmoothingScheme.adaptive_bernstein(gamma, rule, mc=mc)


SCHEMES = ("beta", "bernstein_fixed", "bernstein_rate", "adaptive_bernstein")
FAMILIES = ("independence", "clayton", "gumbel", "frank")


def cmd_eval(args) -> int:
    try:
        X = read_sample_csv(args.sample)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read sample: {exc}", file=sys.stderr)
        return EXIT_IO
    u = np.asarray(args.u, dtype=float)
    if u.size != X.shape[1]:
        raise UsageError(f"--u has {u.size} coordinates but the sample has {X.shape[1]} columns")
    ranks = EmpiricalCopula().fit(X).ranks_
    if args.scheme is None:
        print(f"{empirical_copula(ranks, u, variant=args.variant):.17g}")
        return EXIT_OK
    scheme = _scheme(args.scheme, args.gamma, args.m, args.rule, args.draws, args.seed)
    if args.mc:
        est, se = smooth_copula_mc(ranks, scheme, u)
        print(f"{est:.17g},{se:.17g}")
    else:
        print(f"{smooth_copula_closed(ranks, scheme, u):.17g}")
    return EXIT_OK


def cmd_rate_experiment(args) -> int:
    try:
        if args.config:
            config = ExperimentConfig.from_file(args.config)
        else:
            config = ExperimentConfig()
        changes = dict(copula=args.copula, theta=args.theta, replications=args.reps,
                       resolution=args.grid, master_seed=args.seed, output=args.out,
                       n_list=tuple(args.n) if args.n else None)
        if args.scheme is not None:
            changes["scheme"] = _scheme(args.scheme, args.gamma, args.m, args.rule)
        elif args.gamma is not None or args.m is not None:
            raise UsageError("--gamma and --m need --scheme")
        config = with_overrides(config, **changes)
        # re-validate the merged configuration
        config = ExperimentConfig.from_mapping(
            dict(line.split(" = ", 1) for line in config.to_text().splitlines()))
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if config.output is None:
        raise UsageError("an output path is required (--out or 'output' in the config)")
    try:
        report = run_experiment(config, workers=args.workers)
    except DecompositionError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    try:
        raw, summ = emit_report(report, config.output)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    slope, se = report.slope()
    print(f"wrote {raw} and {summ}")
    print(f"slope of median smooth remainder: {slope:.4f} (se {se:.4f})")
    return EXIT_OK


def cmd_variance_audit(args) -> int:
    scheme = _scheme(args.scheme, args.gamma, args.m)
    gamma = args.gamma if args.gamma is not None else scheme.rate
    if gamma is None:
        raise UsageError("--scheme bernstein_fixed needs --gamma to audit against")
    u_grid = np.linspace(0.0, 1.0, args.grid + 2)[1:-1]
    audit = variance_audit(scheme, args.n, u_grid, draws=args.draws, seed=args.seed, gamma=gamma)
    if args.out:
        try:
            audit.to_csv(args.out)
        except OSError as exc:
            print(f"error: cannot write audit: {exc}", file=sys.stderr)
            return EXIT_IO
    print(f"{len(audit.rows)} points audited, {audit.violations} violations "
          f"({audit.analytic_violations} analytic)")
    return EXIT_INVARIANT if audit.violations or audit.analytic_violations else EXIT_OK


def cmd_condition2_scan(args) -> int:
    model = make_copula(args.copula, args.theta, args.d)
    report = condition2_scan(model, lo=args.lo, hi=args.hi, levels=tuple(args.levels), h=args.h)
    if args.out:
        try:
            report.to_csv(args.out)
        except OSError as exc:
            print(f"error: cannot write scan: {exc}", file=sys.stderr)
            return EXIT_IO
    print(f"max weighted second derivative: {report.max_ratio:.6g}")
    for level, value in zip(report.grid_spec["levels"], report.level_max):
        print(f"  {level} points per axis: {value:.6g}")
    print(f"unstable finite differences: {report.unstable_count}")
    return EXIT_OK


def _selfcheck_closed(tol=1e-12) -> float:
    grid = np.stack(np.meshgrid(*(np.linspace(0, 1, 5),) * 2, indexing="ij"), axis=-1).reshape(-1, 2)
    worst = 0.0
    for n in range(1, 4):
        for perm in itertools.permutations(range(1, n + 1)):
            ranks = RankMatrix(np.column_stack([np.arange(1, n + 1), perm]))
            for m1, m2 in itertools.product(range(1, 5), repeat=2):
                closed = smooth_copula_closed(ranks, SmoothingScheme.beta(), grid, degrees=(m1, m2))
                exact = np.array([smooth_copula_enumerate(ranks, u, (m1, m2)) for u in grid])
                worst = max(worst, float(np.abs(closed - exact).max()))
    return worst


def _selfcheck_decomposition() -> int:
    failures = 0
    rng = np.random.default_rng(0)
    for family, theta in (("independence", None), ("clayton", 2.0), ("frank", 4.0)):
        model = make_copula(family, theta)
        for n in (4, 16):
            ev = GridEvaluator(model, SmoothingScheme.beta(), EvaluationGrid.build(2, n, resolution=11), n)
            for _ in range(5):
                try:
                    check_decomposition(ev.terms(model.sample(n, rng)))
                except DecompositionError:
                    failures += 1
    return failures


def cmd_selfcheck(args) -> int:
    ok = True
    worst = _selfcheck_closed()
    passed = worst <= 1e-12
    ok &= passed
    print(f"{'PASS' if passed else 'FAIL'} closed form vs enumeration, n<=3, m<=4: max diff {worst:.3g}")
    failures = _selfcheck_decomposition()
    ok &= failures == 0
    print(f"{'PASS' if failures == 0 else 'FAIL'} decomposition inequality on 30 small samples")
    return EXIT_OK if ok else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smoothcopula",
                     description="Smooth empirical copulas and their Stute remainders.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", help="evaluate C_n or the smooth C_n at a point")
    p.add_argument("--sample", required=True, help="CSV with header u1..ud")
    p.add_argument("--u", required=True, type=_floats, help="point, comma separated")
    p.add_argument("--variant", choices=("scaled_ranks", "deheuvels"), default="scaled_ranks")
    p.add_argument("--scheme", choices=SCHEMES, help="smooth estimator (default: empirical copula)")
    p.add_argument("--gamma", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--rule", choices=("iqr", "constant"), default="iqr")
    p.add_argument("--mc", action="store_true", help="Monte Carlo instead of the closed form")
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rate-experiment", help="replicated remainder measurement across n")
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--copula", choices=FAMILIES)
    p.add_argument("--theta", type=float)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--gamma", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--rule", choices=("iqr", "constant"), default="iqr")
    p.add_argument("--n", type=_ints, help="sample sizes, comma separated")
    p.add_argument("--reps", type=int)
    p.add_argument("--grid", type=int, help="points per axis of the uniform grid")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="raw CSV path; the summary goes next to it")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_rate_experiment)

    p = sub.add_parser("variance-audit", help="check the smoothing variance bound")
    p.add_argument("--scheme", choices=SCHEMES, default="bernstein_rate")
    p.add_argument("--gamma", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--grid", type=int, default=19, help="interior points per axis")
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_variance_audit)

    p = sub.add_parser("condition2-scan", help="scan weighted second derivatives of a copula")
    p.add_argument("--copula", choices=FAMILIES, required=True)
    p.add_argument("--theta", type=float)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--lo", type=float, default=0.01)
    p.add_argument("--hi", type=float, default=0.99)
    p.add_argument("--levels", type=_ints, default=[9, 17, 33])
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_condition2_scan)

    p = sub.add_parser("selfcheck", help="run the enumeration-oracle checks")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
