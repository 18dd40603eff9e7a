"""Command-line interface.

Machine-readable output (JSON lines, CSV) goes to stdout; human-readable
messages go to stderr.  Set ``PWA_LOG=info`` or ``PWA_LOG=debug`` for
progress logging.

Exit codes: 0 success, 2 budget exhausted, 3 certificate check failed,
4 no valid alpha, 64 bad input, 65 partition hash mismatch, 66 initial state
outside the domain, 67 too many neurons, 68 system not two-dimensional.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import formats
from .barrier_lp import OBJECTIVES, Epsilons, assemble
from .exceptions import NotTwoDimensional, OutOfDomain, PwaError, SolverFailure, TooManyNeurons
from .formats import FormatError
from .pwa import build_index_sets
from .relu import enumerate_regions
from .search import Status, bisect_alpha, synthesize
from .verify import check_certificate, levelset_segments, normalize_barrier, simulate

logger = logging.getLogger("pwabarrier")

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_CHECK_FAILED = 3
EXIT_NO_ALPHA = 4
EXIT_BAD_INPUT = 64
EXIT_HASH_MISMATCH = 65
EXIT_X0_OUTSIDE = 66
EXIT_TOO_MANY_NEURONS = 67
EXIT_NOT_2D = 68


class CliError(Exception):
    def __init__(self, message, code=EXIT_BAD_INPUT):
        super().__init__(message)
        self.code = code


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _load_system(path):
    """System from a system file, or from a network file by exact extraction."""
    doc = formats.read_json(path)
    if formats.is_network(doc):
        net, dom = formats.network_from_dict(doc)
        try:
            return enumerate_regions(net, dom)
        except TooManyNeurons as exc:
            raise CliError(str(exc), EXIT_TOO_MANY_NEURONS) from exc
    return formats.system_from_dict(doc)


def _load_barrier(path, d):
    b, alpha, eps, digest = formats.barrier_from_dict(formats.read_json(path))
    if digest != formats.partition_hash(d):
        raise CliError("barrier was synthesized for a different partition "
                       "(partition_hash mismatch)", EXIT_HASH_MISMATCH)
    if set(b.cell_ids) != set(d.cell_ids):
        raise CliError("barrier cell ids do not match the system")
    return b, alpha, eps


def _parse_eps(text):
    if text is None:
        return Epsilons()
    parts = [float(x) for x in str(text).split(",")]
    if len(parts) not in (1, 3):
        raise CliError("--eps takes one value or three comma-separated values")
    try:
        return Epsilons.coerce(parts[0] if len(parts) == 1 else parts)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_result(out, res):
    b = normalize_barrier(res.barrier, res.dynamics)
    formats.write_json(out / "barrier.json", formats.barrier_to_dict(b, res.dynamics, res.alpha, res.eps))
    formats.write_json(out / "system.json", formats.system_to_dict(res.dynamics))


def _history(res):
    return [
        {"iteration": r.iteration, "cells": r.n_cells, "sum_tau_b": r.sum_tau_b,
         "sum_tau_int": r.sum_tau_int, "lp_seconds": r.lp_seconds, "elapsed": r.elapsed}
        for r in res.history
    ]


# -- commands ------------------------------------------------------------
def cmd_synthesize(args) -> int:
    d = _load_system(args.input)
    eps = _parse_eps(args.eps)
    res = synthesize(d, args.alpha, eps, budget_s=args.budget_s, objective=args.objective)
    out = _out_dir(args.out)
    summary = {
        "status": res.status.value, "alpha": res.alpha, "iterations": res.iterations,
        "initial_cells": res.initial_cells, "final_cells": res.final_cells,
        "elapsed": res.elapsed,
    }
    if res.valid:
        _write_result(out, res)
        _emit(summary)
        print(f"valid barrier with {res.final_cells} cells written to {out}", file=sys.stderr)
        return EXIT_OK
    diag = dict(summary)
    diag["history"] = _history(res)
    if res.report is not None:
        diag["best_sum_tau_b"] = res.report.sum_tau_b
        diag["flagged_boundary"] = sorted(
            [list(k), t] for k, t in res.report.tau_b.items() if t > 1e-8
        )
    formats.write_json(out / "diagnostics.json", diag)
    _emit(summary)
    print(f"no valid barrier within {args.budget_s} s; diagnostics in {out}", file=sys.stderr)
    return EXIT_BUDGET


def cmd_check(args) -> int:
    d = _load_system(args.system)
    b, alpha, eps = _load_barrier(args.barrier, d)
    rep = check_certificate(b, d, build_index_sets(d), alpha, eps,
                            samples_per_cell=args.samples, rng=args.seed)
    print(rep.summary(), file=sys.stderr)
    for v in rep.violations[:20]:
        print(f"  {v.check} cells={list(v.cells)} at {np.round(v.location, 6).tolist()} "
              f"value={v.value:.6g}", file=sys.stderr)
    _emit({
        "ok": rep.ok,
        "boundary_ok": rep.boundary_ok,
        "continuity_ok": rep.continuity_ok,
        "nagumo_vertex_ok": rep.nagumo_vertex_ok,
        "nagumo_sampled_ok": rep.nagumo_sampled_ok,
        "worst_boundary": rep.worst_boundary,
        "worst_continuity": rep.worst_continuity,
        "worst_vertex_margin": rep.worst_vertex_margin,
        "worst_sampled_margin": rep.worst_sampled_margin,
        "violations": [
            {"check": v.check, "cells": list(v.cells), "location": v.location.tolist(),
             "value": v.value}
            for v in rep.violations
        ],
    })
    return EXIT_OK if rep.ok else EXIT_CHECK_FAILED


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _fmt(x):
    return "%.17g" % x


def cmd_simulate(args) -> int:
    d = _load_system(args.system)
    try:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    except ValueError as exc:
        raise CliError(f"--x0: {exc}") from exc
    if x0.size != d.dim:
        raise CliError(f"--x0 needs {d.dim} values")
    b = None
    if args.barrier:
        b, _, _ = _load_barrier(args.barrier, d)
    try:
        tr = simulate(d, x0, args.T, args.dt, b)
    except OutOfDomain as exc:
        raise CliError(f"x0 is outside the domain: {exc}", EXIT_X0_OUTSIDE) from exc
    header = ["t"] + [f"x{k + 1}" for k in range(d.dim)] + ["h"]
    rows = []
    for k, t in enumerate(tr.times):
        h = _fmt(tr.h[k]) if tr.h is not None else ""
        rows.append([_fmt(t)] + [_fmt(v) for v in tr.states[k]] + [h])
    _write_csv(args.out, header, rows)
    if tr.exited:
        print(f"trajectory left the domain at t={tr.exit_time:g}", file=sys.stderr)
    return EXIT_OK


def cmd_bisect_alpha(args) -> int:
    d = _load_system(args.system)
    eps = _parse_eps(args.eps)
    lo, hi = args.interval
    try:
        res = bisect_alpha(d, (lo, hi), eps, alpha_tol=args.alpha_tol,
                           per_probe_budget_s=args.probe_budget_s)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    for a, status in res.probes:
        _emit({"alpha": a, "status": status.value})
    if res.status is Status.NO_VALID_ALPHA:
        _emit({"status": res.status.value, "best_alpha": None})
        print("no valid alpha in the interval", file=sys.stderr)
        return EXIT_NO_ALPHA
    _emit({"status": res.status.value, "best_alpha": res.best_alpha,
           "extend_interval": res.extend_interval})
    if args.out:
        _write_result(_out_dir(args.out), res.result)
    if res.extend_interval:
        print("upper end of the interval is valid; consider a wider interval", file=sys.stderr)
    return EXIT_OK


def cmd_relu2pwa(args) -> int:
    net, dom = formats.network_from_dict(formats.read_json(args.network))
    try:
        d = enumerate_regions(net, dom)
    except TooManyNeurons as exc:
        raise CliError(str(exc), EXIT_TOO_MANY_NEURONS) from exc
    formats.write_json(args.out, formats.system_to_dict(d))
    _emit({"cells": d.n_cells, "partition_hash": formats.partition_hash(d)})
    return EXIT_OK


def cmd_levelset(args) -> int:
    d = _load_system(args.system)
    if d.dim != 2:
        raise CliError(f"level sets need a 2-D system, got dimension {d.dim}", EXIT_NOT_2D)
    b, _, _ = _load_barrier(args.barrier, d)
    segs = levelset_segments(b, d, args.level)
    rows = [[cid, _fmt(p[0]), _fmt(p[1]), _fmt(r[0]), _fmt(r[1])] for cid, p, r in segs]
    _write_csv(args.out, ["cell", "x1_start", "x2_start", "x1_end", "x2_end"], rows)
    return EXIT_OK


def cmd_export_lp(args) -> int:
    d = _load_system(args.system)
    lp = assemble(d, build_index_sets(d), args.alpha, _parse_eps(args.eps))
    text = lp.to_lp_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser --------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pwabarrier",
                                description="Barrier functions for piecewise-affine systems.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", help="solve-refine loop on a system or network file")
    s.add_argument("input")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--eps", default=None, help="eps or eps1,eps2,eps3 (default 1e-4)")
    s.add_argument("--budget-s", type=float, default=3600.0)
    s.add_argument("--objective", choices=OBJECTIVES, default="lexicographic")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("check", help="verify a barrier file against a system file")
    s.add_argument("system")
    s.add_argument("barrier")
    s.add_argument("--samples", type=int, default=100, help="sampled points per cell")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="RK4 trajectory to CSV")
    s.add_argument("system")
    s.add_argument("--x0", required=True, help="comma-separated initial state")
    s.add_argument("--T", type=float, default=10.0)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--barrier", default=None)
    s.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bisect-alpha", help="largest alpha with a valid barrier")
    s.add_argument("system")
    s.add_argument("--interval", type=float, nargs=2, default=(1e-3, 10.0), metavar=("LO", "HI"))
    s.add_argument("--alpha-tol", type=float, default=0.05)
    s.add_argument("--probe-budget-s", type=float, default=3600.0)
    s.add_argument("--eps", default=None)
    s.add_argument("--out", default=None, help="output directory for the best barrier")
    s.set_defaults(func=cmd_bisect_alpha)

    s = sub.add_parser("relu2pwa", help="exact PWA form of a ReLU network")
    s.add_argument("network")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_relu2pwa)

    s = sub.add_parser("levelset", help="zero level set of a 2-D barrier as CSV segments")
    s.add_argument("system")
    s.add_argument("barrier")
    s.add_argument("--level", type=float, default=0.0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_levelset)

    s = sub.add_parser("export-lp", help="write the barrier LP in LP-file format")
    s.add_argument("system")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--eps", default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_export_lp)
    return p


def _configure_logging():
    level = os.environ.get("PWA_LOG", "").strip().lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO}
    logging.basicConfig(stream=sys.stderr, level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except NotTwoDimensional as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_2D
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except (FormatError, PwaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
