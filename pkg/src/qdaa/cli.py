"""Command line front end.

Exit codes: 0 success, 1 model, validation or usage error, 2 integration
failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time

from .bundled import BUNDLED, resolve_model
from .model import ModelError, serialize_model
from .qdaa import build as build_qdaa
from .rats import build_rats
from .reach import StateLimitError, analyse, rectangle_set_bounds
from .sim import IntegrationError, write_trajectory_csv, sample_points
from .svg import heatmap_svg
from .validation import check_kappa, check_positive_int, check_seed, check_system, sim_params

log = logging.getLogger("qdaa")

FORMATS = ("json", "dot", "svg", "csv")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _projection(text: str) -> tuple[int, int]:
    try:
        i, j = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected i,j got {text!r}") from None
    return i, j


def _kappas(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty kappa list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qdaa", description="Reachability of multi-affine ODE systems over rectangular partitions.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, sampling=True):
        sp.add_argument("--model", required=True,
                        help=f"model file or bundled name ({', '.join(BUNDLED)})")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--format", action="append", choices=FORMATS,
                        help="restrict written artifacts to these formats (repeatable)")
        if sampling:
            sp.add_argument("--kappa", type=int, default=8)
            sp.add_argument("--samples", type=int, default=100, help="trajectories per region (M)")
            sp.add_argument("--seed", type=int, default=None, help="master seed (default: $QDAA_SEED or 0)")
            sp.add_argument("--tmax", type=float, default=None)
            sp.add_argument("--dt", type=float, default=None)
            sp.add_argument("--crossing-tol", type=float, default=None)
            sp.add_argument("--backward", dest="backward", action="store_true", default=True,
                            help="confirm entry tiles by backward simulation (default)")
            sp.add_argument("--no-backward", dest="backward", action="store_false")
            sp.add_argument("--threads", type=int, default=os.cpu_count() or 1)
            sp.add_argument("--max-states", type=int, default=None)

    r = sub.add_parser("reach", help="build the automaton and report reachable rectangles")
    common(r)
    r.add_argument("--project", action="append", type=_projection, default=None,
                   help="axis pair i,j for a heatmap panel (repeatable)")
    r.add_argument("--heatmap-limit", type=int, default=20000,
                   help="largest automaton solved exactly for the heatmap")
    r.add_argument("--trajectories", type=int, default=0,
                   help="also dump this many RK4 trajectories from the initial set to trajectories.csv")

    ra = sub.add_parser("rats", help="rectangular abstraction baseline")
    common(ra, sampling=False)

    sw = sub.add_parser("sweep", help="reachable rectangle count and rho for several kappa values")
    common(sw)
    sw.add_argument("--kappas", type=_kappas, required=True, help="comma separated kappa values")

    ex = sub.add_parser("export", help="write the model and its automaton without analysis products")
    common(ex)

    va = sub.add_parser("validate", help="parse and check a model file")
    va.add_argument("--model", required=True)
    return p


def _wants(args, fmt: str) -> bool:
    return not args.format or fmt in args.format


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _seed(args) -> int:
    if args.seed is not None:
        return check_seed(args.seed)
    env = os.environ.get("QDAA_SEED")
    if env is None:
        return 0
    try:
        return check_seed(int(env))
    except ValueError:
        raise UsageError(f"QDAA_SEED must be a non-negative integer, got {env!r}") from None


def _setup(args):
    system = check_system(resolve_model(args.model))
    kappa = check_kappa(args.kappa)
    params = sim_params(system, args.samples, args.dt, args.tmax, args.crossing_tol)
    threads = check_positive_int(args.threads, "threads")
    return system, kappa, params, _seed(args), threads


def _print_bounds(system, bounds, out):
    for name, (lo, hi) in zip(system.species, bounds):
        print(f"  {name}: [{lo:.6g}, {hi:.6g}]", file=out)


def cmd_reach(args, out=None) -> int:
    out = out or sys.stdout
    system, kappa, params, seed, threads = _setup(args)
    os.makedirs(args.out, exist_ok=True)
    report = analyse(system, kappa, params, args.backward, seed, threads, args.max_states, args.heatmap_limit)
    if _wants(args, "json"):
        _write(os.path.join(args.out, "report.json"), report.to_json())
        _write(os.path.join(args.out, "automaton.json"), report.automaton.to_json())
    if _wants(args, "dot"):
        _write(os.path.join(args.out, "automaton.dot"), report.automaton.to_dot())
    if _wants(args, "csv"):
        _write(os.path.join(args.out, "bounds.csv"), report.bounds_csv())
    if _wants(args, "svg"):
        _write(os.path.join(args.out, "heatmap.svg"), heatmap_svg(system, report.heatmap, args.project))
    if args.trajectories:
        starts = sample_points(system.partition, system.initial[0], args.trajectories, seed) if system.initial else []
        write_trajectory_csv(os.path.join(args.out, "trajectories.csv"), system.field, starts, params,
                             system.species)
    print(f"model {system.name or args.model}: kappa={kappa} M={params.M} seed={seed} "
          f"backward={'on' if args.backward else 'off'}", file=out)
    print(f"reachable rectangles: {report.n_rectangles}", file=out)
    print(f"states: {len(report.states)}", file=out)
    print(f"rho: {report.rho:.6g}", file=out)
    print(f"sink mass: {report.sink_mass:.6g}", file=out)
    print(f"lost mass: {report.lost_mass:.6g}", file=out)
    print("bounds:", file=out)
    _print_bounds(system, report.bounds, out)
    return 0


def cmd_rats(args, out=None) -> int:
    out = out or sys.stdout
    system = check_system(resolve_model(args.model))
    os.makedirs(args.out, exist_ok=True)
    rats = build_rats(system)
    if _wants(args, "json"):
        _write(os.path.join(args.out, "report.json"), rats.to_json())
    if _wants(args, "dot"):
        _write(os.path.join(args.out, "automaton.dot"), rats.to_dot())
    if _wants(args, "csv"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["species", "lower", "upper"])
        for name, (lo, hi) in zip(system.species, rectangle_set_bounds(system, rats.rectangles)):
            w.writerow([name, repr(float(lo)), repr(float(hi))])
        _write(os.path.join(args.out, "bounds.csv"), buf.getvalue())
    print(f"model {system.name or args.model}: rectangular abstraction", file=out)
    print(f"reachable rectangles: {len(rats.rectangles)}", file=out)
    print("bounds:", file=out)
    _print_bounds(system, rectangle_set_bounds(system, rats.rectangles), out)
    return 0


def cmd_sweep(args, out=None) -> int:
    out = out or sys.stdout
    system, _, params, seed, threads = _setup(args)
    kappas = [check_kappa(k) for k in args.kappas]
    os.makedirs(args.out, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kappa", "rectangles", "states", "rho", "sink_mass", "lost_mass", "seconds"])
    for k in kappas:
        t0 = time.perf_counter()
        rep = analyse(system, k, params, args.backward, seed, threads, args.max_states, heatmap_limit=0)
        secs = time.perf_counter() - t0
        w.writerow([k, rep.n_rectangles, len(rep.states), repr(rep.rho), repr(rep.sink_mass),
                    repr(rep.lost_mass), f"{secs:.3f}"])
        print(f"kappa={k}: rectangles={rep.n_rectangles} states={len(rep.states)} rho={rep.rho:.4g} "
              f"({secs:.1f} s)", file=out)
    _write(os.path.join(args.out, "sweep.csv"), buf.getvalue())
    return 0


def cmd_export(args, out=None) -> int:
    out = out or sys.stdout
    system, kappa, params, seed, threads = _setup(args)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "model.json"), serialize_model(system))
    automaton = build_qdaa(system, kappa, params, args.backward, seed, n_jobs=threads, max_states=args.max_states)
    if _wants(args, "json"):
        _write(os.path.join(args.out, "automaton.json"), automaton.to_json())
    if _wants(args, "dot"):
        _write(os.path.join(args.out, "automaton.dot"), automaton.to_dot())
    print(f"wrote model.json and automaton with {len(automaton.states)} states to {args.out}", file=out)
    return 0


def cmd_validate(args, out=None) -> int:
    out = out or sys.stdout
    system = check_system(resolve_model(args.model))
    shape = "x".join(str(m) for m in system.partition.shape)
    print(f"ok: {system.name or args.model}, {system.dimension} species, partition {shape}, "
          f"{len(system.initial)} initial rectangles", file=out)
    return 0


COMMANDS = {"reach": cmd_reach, "rats": cmd_rats, "sweep": cmd_sweep, "export": cmd_export,
            "validate": cmd_validate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ModelError, UsageError, ValueError, KeyError, OSError, StateLimitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except IntegrationError as exc:
        print(f"integration failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
