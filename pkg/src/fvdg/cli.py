"""Command-line front-end: solve / bench / convergence.

Exit codes: 0 success, 2 configuration error, 3 solver error.  All flags
may also come from a TOML config file (--config); explicit flags win.
"""

import argparse
import logging
import sys

from .linalg import LinearSolveError
from .runner import (ConfigError, RunConfig, run_bench, run_convergence,
                     run_solve)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _load_config_file(path):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _eps_h(value):
    if value is None or str(value).lower() == "off":
        return None
    return float(value)


def _build_parser():
    top = argparse.ArgumentParser(prog="fvdg",
                                  description="coupled FV/DG convection-diffusion solver")
    top.add_argument("-v", "--verbose", action="store_true")
    sub = top.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run one configured solve")
    ps.add_argument("--config", help="TOML config file (flags override it)")
    ps.add_argument("--problem", help="benchmark name or problem file")
    ps.add_argument("--cells", type=int)
    ps.add_argument("--degree", type=int)
    ps.add_argument("--epsilon", type=int, choices=(-1, 0, 1))
    ps.add_argument("--sigma", type=float)
    ps.add_argument("--sigma-boundary", type=float, dest="sigma_boundary")
    ps.add_argument("--delta", type=float)
    ps.add_argument("--eps-bp", type=float, dest="eps_bp")
    ps.add_argument("--eps-h", dest="eps_h", help="accuracy tolerance or 'off'")
    ps.add_argument("--variant", choices=("cell_average", "nodal"))
    ps.add_argument("--scheme", choices=("fv", "dg", "coupled-adaptive"))
    ps.add_argument("--seed", type=int)
    ps.add_argument("--lloyd", type=int)
    ps.add_argument("--out")
    ps.add_argument("--no-figures", action="store_true")

    pb = sub.add_parser("bench", help="benchmark sweep writing a summary CSV")
    pb.add_argument("--suite", default="all",
                    help="'all' or one benchmark name")
    pb.add_argument("--sizes", type=int, nargs="+", default=[2000])
    pb.add_argument("--deltas", type=float, nargs="+", default=[1e-6])
    pb.add_argument("--seed", type=int, default=0)
    pb.add_argument("--degree", type=int, default=1)
    pb.add_argument("--out", default=None)

    pc = sub.add_parser("convergence", help="manufactured-solution order study")
    pc.add_argument("--levels", type=int, default=3)
    pc.add_argument("--schemes", nargs="+", default=["fv", "dg"],
                    choices=("fv", "dg"))
    pc.add_argument("--degree", type=int, default=1)
    pc.add_argument("--base-cells", type=int, default=1000, dest="base_cells")
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", default=None)
    return top


def _solve_config(args):
    values = {}
    if args.config:
        values.update(_load_config_file(args.config))
    for key in ("problem", "cells", "degree", "epsilon", "sigma", "sigma_boundary",
                "delta", "eps_bp", "variant", "scheme", "seed", "lloyd", "out"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if getattr(args, "eps_h", None) is not None:
        values["eps_h"] = _eps_h(args.eps_h)
    elif "eps_h" in values:
        values["eps_h"] = _eps_h(values["eps_h"])
    if args.no_figures:
        values["figures"] = False
    unknown = set(values) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            config = _solve_config(args)
            result = run_solve(config)
            print(f"wrote {result['out']}: {result['n_cells']} cells, "
                  f"osc={result['osc']:.6e}")
            return EXIT_OK
        if args.command == "bench":
            out = args.out or "bench"
            path = run_bench(args.suite, args.sizes, args.deltas, out,
                             seed=args.seed, degree=args.degree)
            print(f"summary written to {path}")
            return EXIT_OK
        if args.command == "convergence":
            table = run_convergence(args.levels, schemes=tuple(args.schemes),
                                    degree=args.degree, seed=args.seed,
                                    base_cells=args.base_cells, out=args.out)
            print(f"{'scheme':<8}{'cells':>9}{'L2 error':>14}{'order':>8}")
            for row in table:
                print(f"{row['scheme']:<8}{row['n_cells']:>9}"
                      f"{row['l2_error']:>14.6e}{row['order']:>8}")
            return EXIT_OK
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LinearSolveError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
