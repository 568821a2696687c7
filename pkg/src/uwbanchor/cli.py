"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 grad-check acceptance failure.
"""
import argparse
import logging
import sys
import time

from .errors import ConfigError, DegenerateGeometryError, NumericalFailure
from .harness.gradcheck import grad_check
from .harness.report import export_results, format_comparison, format_summary, rmse_table
from .harness.runner import compare, monte_carlo, run_scenario
from .harness.scenario import canonical_scenario, dump_scenario, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3
GRAD_TOL = 1e-5
TRACE_TOL = 1e-9


def _simulate(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    res = run_scenario(cfg)
    print(rmse_table(res), end="")
    if args.out:
        paths = export_results(res, args.out, stem=args.stem)
        for p in paths.values():
            print(f"wrote {p}")
    return EXIT_OK


def _montecarlo(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.compare:
        other = load_scenario(args.compare).with_seed(cfg.seed)
        print(format_comparison(compare(cfg, other, args.trials)))
    else:
        print(format_summary(monte_carlo(cfg, args.trials)))
    return EXIT_OK


def _grad_check(args) -> int:
    t0 = time.perf_counter()
    rep = grad_check(args.configs, seed=args.seed)
    elapsed = time.perf_counter() - t0
    ok = rep.max_rel_error < GRAD_TOL and rep.max_trace_error < TRACE_TOL
    print(f"configs {rep.configs}  max relative error {rep.max_rel_error:.3e}  "
          f"max |trace - N| {rep.max_trace_error:.3e}  ({elapsed:.2f} s)  "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


def _print_canonical(args) -> int:
    print(dump_scenario(canonical_scenario(mobile=not args.fixed, motion=args.motion)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uwbanchor", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one trial and optionally export CSVs")
    s.add_argument("scenario")
    s.add_argument("--out", help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--stem", default="trial", help="output file name stem")
    s.set_defaults(func=_simulate)

    m = sub.add_parser("montecarlo", help="repeat trials and summarise RMSE")
    m.add_argument("scenario")
    m.add_argument("--trials", type=int, required=True)
    m.add_argument("--compare", metavar="SCENARIO2",
                   help="second scenario run on the same noise realizations")
    m.add_argument("--seed", type=int)
    m.set_defaults(func=_montecarlo)

    g = sub.add_parser("grad-check", help="analytic vs finite-difference det gradient")
    g.add_argument("--configs", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_grad_check)

    sc = sub.add_parser("scenario", help="scenario utilities")
    scsub = sc.add_subparsers(dest="action", required=True)
    pc = scsub.add_parser("print-canonical", help="emit the built-in layout as YAML")
    pc.add_argument("--fixed", action="store_true",
                    help="make the fifth anchor fixed (baseline network)")
    pc.add_argument("--motion", choices=["hover", "still", "track"], default="hover")
    pc.set_defaults(func=_print_canonical)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, DegenerateGeometryError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
