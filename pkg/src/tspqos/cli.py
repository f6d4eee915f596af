"""Command-line front end: ``tspqos [options]``.

Without ``--sweep`` and ``--lambda-rt`` the default sweep (lambda_rt from 5
to 50 in steps of 5) is run. A single point is evaluated when
``--lambda-rt`` is given and ``--sweep`` is not.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .ctmc import build_generator, dump_matrix, solve_stationary
from .policy import SchemeKind
from .sim import DEFAULT_EVENTS, SimConfig, run_simulation, write_trace
from .sweep import SweepSpec, compare_schemes, default_base, normalize_param, run_sweep, write_csv

TRACE_EVENTS = 1000


class UsageError(ValueError):
    pass


def parse_sweep(text: str):
    parts = text.split(":")
    if len(parts) != 4:
        raise UsageError(f"--sweep expects param:start:stop:step, got {text!r}")
    name = normalize_param(parts[0])
    try:
        start, stop, step = (float(p) for p in parts[1:])
    except ValueError:
        raise UsageError(f"non-numeric sweep bounds in {text!r}") from None
    return name, start, stop, step


def build_parser() -> argparse.ArgumentParser:
    base = default_base()
    p = argparse.ArgumentParser(
        prog="tspqos",
        description="QoS of B-TSP / EB-TSP buffers: exact CTMC analysis and simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--scheme", choices=["eb-tsp", "b-tsp", "both"], default="both")
    p.add_argument("--n", type=int, default=base["n"], help="buffer capacity")
    p.add_argument("--r", type=int, default=base["r"], help="RT threshold")
    p.add_argument("--lambda-rt", type=float, default=None,
                   help="RT arrival rate (single point unless --sweep is given)")
    p.add_argument("--lambda-nrt", type=float, default=base["lambda_nrt"])
    p.add_argument("--mu-rt", type=float, default=base["mu_rt"])
    p.add_argument("--mu-nrt", type=float, default=base["mu_nrt"])
    p.add_argument("--sweep", metavar="PARAM:START:STOP:STEP",
                   help="vary one parameter, e.g. lambda_rt:5:50:5")
    p.add_argument("--mode", choices=["analytic", "sim", "both"], default="analytic")
    p.add_argument("--events", type=int, default=DEFAULT_EVENTS,
                   help="simulated events per point")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--warmup", type=float, default=0.1,
                   help="fraction of the event budget discarded before measuring")
    p.add_argument("--batches", type=int, default=32)
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    p.add_argument("--trace", action="store_true",
                   help=f"write the first {TRACE_EVENTS} events of each simulated row")
    p.add_argument("--dump-generator", metavar="DIR",
                   help="write generator and stationary vector of each analytic point")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the timestamp column so reruns are byte-identical")
    p.add_argument("--summary", action="store_true",
                   help="print the EB-TSP vs B-TSP comparison to stderr")
    return p


def spec_from_args(args) -> SweepSpec:
    base = default_base()
    base.update(n=args.n, r=args.r, lambda_nrt=args.lambda_nrt,
                mu_rt=args.mu_rt, mu_nrt=args.mu_nrt)
    if args.lambda_rt is not None:
        base["lambda_rt"] = args.lambda_rt
    if args.sweep:
        name, start, stop, step = parse_sweep(args.sweep)
    elif args.lambda_rt is not None:
        name, start, stop, step = "lambda_rt", args.lambda_rt, args.lambda_rt, 1.0
    else:
        name, start, stop, step = "lambda_rt", 5.0, 50.0, 5.0
    schemes = (("eb-tsp", "b-tsp") if args.scheme == "both" else (args.scheme,))
    modes = ("analytic", "sim") if args.mode == "both" else (args.mode,)
    return SweepSpec(param=name, start=start, stop=stop, step=step, base=base,
                     schemes=schemes, modes=modes, events=args.events,
                     warmup=args.warmup, batches=args.batches, seed=args.seed)


def _debug_outputs(spec: SweepSpec, rows, args) -> None:
    out_stem = Path(args.out if args.out != "-" else "tspqos")
    grid = spec.grid()
    for row in rows:
        if row.error:
            continue
        point = grid.index(row.param_value)
        scheme = SchemeKind.parse(row.scheme)
        params = spec.params_at(row.param_value)
        tag = f"{point:03d}-{scheme.value}"
        if args.trace and row.mode == "sim":
            counters = run_simulation(SimConfig(
                params, scheme, seed=row.seed, events=spec.events, warmup=spec.warmup,
                batches=spec.batches, trace=TRACE_EVENTS))
            write_trace(counters, out_stem.with_name(f"{out_stem.name}.trace-{tag}.txt"))
        if args.dump_generator and row.mode == "analytic":
            folder = Path(args.dump_generator)
            folder.mkdir(parents=True, exist_ok=True)
            q = build_generator(params, scheme)
            dump_matrix(q.q, folder / f"generator-{tag}.txt")
            dump_matrix(solve_stationary(q).p, folder / f"distribution-{tag}.txt")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = spec_from_args(args)
        if args.events <= 0:
            raise UsageError("--events must be positive")
        if not 0 <= args.warmup <= 0.5:
            raise UsageError("--warmup must lie in [0, 0.5]")
        if args.batches < 2:
            raise UsageError("--batches must be at least 2")
        if args.seed < 0:
            raise UsageError("--seed must be nonnegative")
    except ValueError as exc:
        print(f"tspqos: error: {exc}", file=sys.stderr)
        return 2

    stamp = not args.no_timestamp
    rows = run_sweep(spec, timestamp=stamp, workers=args.workers)
    if args.out == "-":
        write_csv(rows, sys.stdout, timestamp=stamp)
    else:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh, timestamp=stamp)

    if args.trace or args.dump_generator:
        _debug_outputs(spec, rows, args)
    if args.summary:
        try:
            print(compare_schemes(rows).format(), file=sys.stderr)
        except ValueError as exc:
            print(f"tspqos: no comparison: {exc}", file=sys.stderr)
    return 0
