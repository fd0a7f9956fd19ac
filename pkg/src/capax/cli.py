"""Command-line front end: ``capax <subcommand> [options]``.

Exit codes: 0 success, 1 a verification verdict failed, 2 usage error,
3 the capacity solver did not converge, 4 input/output error.

A JSON config file (``--config``, ``{"schema": 1, "<option>": value}``)
supplies defaults that command-line flags override.  ``CAPAX_THREADS``
caps the thread pools of the numerical libraries.
"""

from __future__ import annotations

import os

_threads = os.environ.get("CAPAX_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import csv  # noqa: E402
import io  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402

CONFIG_SCHEMA = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4

logger = logging.getLogger("capax")


class UsageError(Exception):
    pass


class SolverFlag(Exception):
    def __init__(self, message, payload):
        super().__init__(message)
        self.payload = payload


def _pair(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}") from None
    if not hi > lo:
        raise argparse.ArgumentTypeError("need lo < hi")
    return lo, hi


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _add_grid(p: argparse.ArgumentParser):
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--h", type=_positive, default=1 / 64, help="cell size")
    p.add_argument("--box", type=_pair, default=(-1.0, 1.0), help="lo,hi (every axis)")


def _add_kernel(p: argparse.ArgumentParser, kernels=("riesz", "bessel", "variant")):
    p.add_argument("--weight", default="const", help="name:key=value,... (e.g. power:a=0.5)")
    p.add_argument("--alpha", type=_positive, default=0.5)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--rho", type=_positive, default=1.0)
    p.add_argument("--kernel", choices=kernels, default=kernels[0])
    p.add_argument("--tol", type=_positive, default=1e-6)
    p.add_argument("--max-iter", type=int, default=50_000)


def _add_output(p: argparse.ArgumentParser):
    p.add_argument("--out", help="output file (stdout when omitted)")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capax", description="Weighted local potential theory "
                                     "on grids: weights, maximal functions, potentials, "
                                     "capacities, Choquet integrals and checks.")
    parser.add_argument("--config", help="JSON file with option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", help="describe a grid")
    _add_grid(p)
    _add_output(p)

    p = sub.add_parser("weight", help="local Muckenhoupt constants of a weight")
    _add_grid(p)
    p.add_argument("--weight", default="const")
    p.add_argument("--p", type=float, action="append", help="exponent(s); 'inf' for A_inf")
    p.add_argument("--rho", type=_positive, default=0.5)
    p.add_argument("--policy", choices=("centered", "aligned"), default="centered")
    p.add_argument("--field-out", help="also write the sampled weight as a field file")
    _add_output(p)

    p = sub.add_parser("maximal", help="local maximal functions of a field")
    p.add_argument("input", help="field file (.json or text)")
    p.add_argument("--variant", choices=("uncentered", "centered", "fractional"),
                   default="uncentered")
    p.add_argument("--rho", type=_positive, default=0.5)
    p.add_argument("--alpha", type=_positive, default=0.5)
    p.add_argument("--out", help="output field file (stdout when omitted)")

    p = sub.add_parser("potential", help="potentials of a measure given as a density field")
    p.add_argument("input", help="density field file (.json or text)")
    p.add_argument("--kind", choices=("riesz", "V", "Vcal", "Wcal", "W", "bessel"), default="riesz")
    p.add_argument("--weight", default="const")
    p.add_argument("--alpha", type=_positive, default=0.5)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--rho", type=_positive, default=1.0)
    p.add_argument("--out", help="output field file (stdout when omitted)")

    p = sub.add_parser("capacity", help="capacity of a set with certified bounds")
    _add_grid(p)
    p.set_defaults(box=(-2.0, 2.0))
    p.add_argument("--set", dest="target", required=True,
                   help="box:a,b (closed box, every axis) or cells:FILE (nonzero cells of a field)")
    _add_kernel(p)
    _add_output(p)

    p = sub.add_parser("choquet", help="Choquet integral of a field")
    p.add_argument("input", help="field file (.json or text)")
    p.add_argument("--q", type=_positive, default=1.0)
    _add_kernel(p)
    p.add_argument("--levels", type=int, default=0,
                   help="geometric threshold ladder size; 0 uses every distinct value")
    _add_output(p)

    p = sub.add_parser("verify", help="run inequality checks")
    p.add_argument("--check", default="all", help="check id or 'all'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=_positive, default=1 / 64)
    _add_output(p)
    return parser


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError:
        raise
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path}: {exc}") from None
    if not isinstance(cfg, dict) or cfg.get("schema") != CONFIG_SCHEMA:
        raise UsageError(f"config {path}: expected an object with \"schema\": {CONFIG_SCHEMA}")
    return {k.replace("-", "_"): v for k, v in cfg.items() if k != "schema"}


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = _load_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"config keys not understood by '{args.command}': {unknown}")
        for key in ("box",):
            if key in cfg and isinstance(cfg[key], list):
                cfg[key] = tuple(cfg[key])
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _record(args: argparse.Namespace) -> dict:
    """Every option value, so reports describe their own configuration."""
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("out", "field_out", "verbose", "config"):
            continue
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    keys = list(rows[0])
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (json.dumps(v) if isinstance(v, (dict, list)) else v) for k, v in r.items()})
    return buf.getvalue()


def _dump(doc, fmt: str, rows: list[dict] | None = None) -> str:
    if fmt == "csv":
        return _rows_to_csv(rows if rows is not None else [doc])
    from .verify import _jsonable

    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def _grid(args):
    from .grid import make_grid

    return make_grid(args.dim, args.h, args.box)


def _read_field(path: str):
    from .grid import field_from_json, field_from_text

    with open(path) as fh:
        text = fh.read()
    try:
        return field_from_json(text) if path.endswith(".json") else field_from_text(text)
    except (ValueError, KeyError, IndexError) as exc:
        raise UsageError(f"cannot parse field file {path}: {exc}") from None


def _write_field(field, path: str | None):
    from .grid import field_to_json, field_to_text

    text = field_to_json(field) if path and path.endswith(".json") else field_to_text(field)
    _emit(text, path)


def _check_exponents(args, need_p: bool = True):
    if need_p and not args.p > 1:
        raise UsageError("--p must exceed 1")
    if hasattr(args, "max_iter") and args.max_iter < 1:
        raise UsageError("--max-iter must be positive")


# ----------------------------------------------------------------------------
# subcommands


def cmd_grid(args) -> tuple[int, str]:
    g = _grid(args)
    doc = dict(g.describe(), size=g.size, box=list(args.box))
    _emit(_dump(doc, args.format), args.out)
    return EXIT_OK, f"grid: {g.size} cells of side {g.h:g}"


def cmd_weight(args) -> tuple[int, str]:
    import math

    from .grid import enumerate_cubes, field_to_text
    from .weights import ainf_loc_constant, ap_loc_constant, parse_weight

    g = _grid(args)
    w = parse_weight(args.weight, g)
    lat = enumerate_cubes(g, args.rho, args.policy)
    rows = []
    for p in args.p or [2.0]:
        if math.isinf(p):
            rep = ainf_loc_constant(w, lat)
        else:
            if p < 1:
                raise UsageError("--p must be at least 1")
            rep = ap_loc_constant(w, p, lat)
        rows.append(rep.to_dict())
    if args.field_out:
        _emit(field_to_text(w), args.field_out)
    doc = {"config": _record(args), "reports": rows}
    _emit(_dump(doc, args.format, rows), args.out)
    return EXIT_OK, "weight: " + ", ".join(f"p={r['p']} constant={r['constant']:.6g}" for r in rows)


def cmd_maximal(args) -> tuple[int, str]:
    from .grid import DiscreteMeasure
    from .maximal import (centered_local_maximal, fractional_local_maximal,
                          uncentered_local_maximal)

    f = _read_field(args.input)
    if args.variant == "uncentered":
        out = uncentered_local_maximal(f, args.rho)
    elif args.variant == "centered":
        out = centered_local_maximal(f, args.rho)
    else:
        out = fractional_local_maximal(DiscreteMeasure.from_density(f), args.alpha, args.rho)
    _write_field(out, args.out)
    return EXIT_OK, f"maximal ({args.variant}): max {float(out.values.max()):.6g}"


def cmd_potential(args) -> tuple[int, str]:
    from .grid import DiscreteMeasure
    from .potentials import (bessel_convolve, nonlinear_potential_V, nonlinear_V_cal,
                             riesz_convolve, wolff_cal, wolff_variant)
    from .weights import parse_weight

    f = _read_field(args.input)
    mu = DiscreteMeasure.from_density(f)
    if args.kind in ("riesz", "bessel"):
        out = (riesz_convolve(mu, args.alpha, args.rho) if args.kind == "riesz"
               else bessel_convolve(mu, args.alpha))
    else:
        _check_exponents(args)
        w = parse_weight(args.weight, f.grid)
        fn = {"V": nonlinear_potential_V, "Vcal": nonlinear_V_cal, "Wcal": wolff_cal,
              "W": wolff_variant}[args.kind]
        out = fn(mu, w, args.alpha, args.p, args.rho)
    _write_field(out, args.out)
    return EXIT_OK, f"potential ({args.kind}): max {float(out.values.max()):.6g}"


def _kernel(args):
    from .potentials import BesselKernelApprox, LocalRieszKernel, SpaceTimeKernel

    if args.kernel == "riesz":
        return LocalRieszKernel(args.alpha, args.rho)
    if args.kernel == "bessel":
        return BesselKernelApprox(args.alpha)
    return SpaceTimeKernel(args.alpha, args.rho)


def _target(args):
    import numpy as np

    from .capacity import TargetSet

    kind, _, spec = args.target.partition(":")
    if kind == "box":
        try:
            lo, hi = (float(v) for v in spec.split(","))
        except ValueError:
            raise UsageError(f"--set box:a,b expected, got {args.target!r}") from None
        g = _grid(args)
        return g, TargetSet.box(g, lo, hi)
    if kind == "cells":
        f = _read_field(spec)
        return f.grid, TargetSet(f.grid, np.asarray(f.values) != 0)
    raise UsageError(f"unknown set kind {kind!r}; use box:a,b or cells:FILE")


def cmd_capacity(args) -> tuple[int, str]:
    from .capacity import SolverOptions, capacity_primal
    from .weights import parse_weight

    _check_exponents(args)
    g, E = _target(args)
    w = parse_weight(args.weight, g)
    kernel = _kernel(args)
    kernel.check(g)
    sol = capacity_primal(E, w, kernel, args.p,
                          options=SolverOptions(tol=args.tol, max_iter=args.max_iter))
    doc = dict(sol.to_dict(), cells=len(E), config=_record(args))
    _emit(_dump(doc, args.format, [sol.to_dict()]), args.out)
    line = (f"capacity: [{sol.value_lower:.8g}, {sol.value_upper:.8g}] gap {sol.gap:.2g} "
            f"after {sol.iterations} iterations")
    if not sol.converged:
        raise SolverFlag(line + " (not converged)", doc)
    return EXIT_OK, line


def cmd_choquet(args) -> tuple[int, str]:
    from .capacity import SolverOptions
    from .choquet import CapacityOracle, choquet_bounds, threshold_ladder
    from .weights import parse_weight

    _check_exponents(args)
    f = _read_field(args.input)
    w = parse_weight(args.weight, f.grid)
    kernel = _kernel(args)
    kernel.check(f.grid)
    oracle = CapacityOracle.from_kernel(w, kernel, args.p,
                                        SolverOptions(tol=args.tol, max_iter=args.max_iter))
    levels = threshold_ladder(f, args.levels) if args.levels > 0 else None
    b = choquet_bounds(f, args.q, oracle, levels)
    rows = b.to_rows()
    doc = {"value_lower": b.lower, "value_upper": b.upper, "levels": rows,
           "capacity_solves": oracle.calls, "monotonicity_violations": len(oracle.violations),
           "config": _record(args)}
    _emit(_dump(doc, args.format, rows), args.out)
    line = f"choquet: [{b.lower:.8g}, {b.upper:.8g}] over {len(rows)} levels"
    if oracle.unconverged:
        raise SolverFlag(line + f" ({oracle.unconverged} solves not converged)", doc)
    return EXIT_OK, line


def cmd_verify(args) -> tuple[int, str]:
    from .verify import CHECKS, reports_to_json, run_all

    names = list(CHECKS) if args.check == "all" else [args.check]
    for n in names:
        if n not in CHECKS:
            raise UsageError(f"unknown check {n!r}; choose from all, {', '.join(CHECKS)}")
    reports = run_all(seed=args.seed, h=args.h, names=names)
    if args.format == "csv":
        rows = [{"check": r.check, "verdict": "pass" if r.verdict else "fail",
                 "constant": r.constant, "constant_refined": r.constant_refined,
                 "refinement_ratio": r.refinement_ratio} for r in reports]
        text = _rows_to_csv(rows)
    else:
        text = reports_to_json(reports, args.seed, args.h)
    _emit(text, args.out)
    failed = [r.check for r in reports if not r.verdict]
    line = f"verify: {len(reports) - len(failed)}/{len(reports)} pass"
    if failed:
        line += " (failed: " + ", ".join(failed) + ")"
    return (EXIT_FAIL if failed else EXIT_OK), line


COMMANDS = {
    "grid": cmd_grid,
    "weight": cmd_weight,
    "maximal": cmd_maximal,
    "potential": cmd_potential,
    "capacity": cmd_capacity,
    "choquet": cmd_choquet,
    "verify": cmd_verify,
}


def parse_and_dispatch(argv=None) -> int:
    """Run one subcommand and return its exit code."""
    try:
        args = _parse(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"capax: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"capax: error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code, line = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"capax: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFlag as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"capax: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"capax: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(line, file=sys.stderr)
    return code


def main(argv=None):
    sys.exit(parse_and_dispatch(argv))


if __name__ == "__main__":
    main()
