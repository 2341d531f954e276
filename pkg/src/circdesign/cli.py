"""Command-line front end: enumerate, solve, verify, efficiency, round."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .blocks import CovarianceSpec, build_sigma, enumerate_blocks
from .equivalence import verify
from .errors import (
    DegenerateTotalEffect,
    NoConvergence,
    NotEstimable,
    NotPositiveDefinite,
)
from .model import (
    CRITERIA,
    Measure,
    ModelConfig,
    criterion_value,
    schur_quantities,
    v_xi,
)
from .solver import SolveOptions, round_to_exact, solve

SCHEMA_VERSION = 1


def _add_common(p: argparse.ArgumentParser, need_criterion=True):
    p.add_argument("-k", type=int, required=True, help="block size")
    p.add_argument("-t", type=int, required=True, help="number of treatments")
    p.add_argument("--rho", type=float, default=0.0, help="neighbor correlation")
    p.add_argument("--sigma-file", help="explicit covariance: k lines of k reals")
    p.add_argument("--l1", type=float, default=0.0, help="left-neighbor ratio")
    p.add_argument("--l2", type=float, default=0.0, help="right-neighbor ratio")
    p.add_argument("--model", choices=("directional", "undirectional"),
                   default="directional")
    p.add_argument("--target", choices=("direct", "total"), default="direct")
    if need_criterion:
        p.add_argument("--criterion", choices=CRITERIA, default="E")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gap-tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--csv", action="store_true", help="flat table output")


def _sigma_of(args) -> np.ndarray:
    if args.sigma_file:
        mat = np.loadtxt(args.sigma_file, ndmin=2)
        return build_sigma(CovarianceSpec(args.k, explicit=mat))
    return build_sigma(CovarianceSpec(args.k, rho=args.rho))


def _config_of(args, criterion=None) -> ModelConfig:
    return ModelConfig(
        t=args.t,
        lambda1=args.l1,
        lambda2=args.l2,
        model=args.model,
        target=args.target,
        criterion=criterion or getattr(args, "criterion", "E"),
    )


def _options_of(args) -> SolveOptions:
    kwargs = {}
    if args.gap_tol is not None:
        kwargs["gap_tol"] = args.gap_tol
    if args.max_iters is not None:
        kwargs["max_iters"] = args.max_iters
    if args.restarts is not None:
        kwargs["restarts"] = args.restarts
    return SolveOptions(**kwargs)


def _job_doc(args, criterion=None) -> dict:
    return {
        "k": args.k,
        "t": args.t,
        "rho": None if args.sigma_file else args.rho,
        "sigma_file": args.sigma_file,
        "lambda1": args.l1,
        "lambda2": args.l2,
        "model": args.model,
        "target": args.target,
        "criterion": criterion or getattr(args, "criterion", None),
        "seed": args.seed,
    }


def _emit(doc: dict):
    print(json.dumps(doc, sort_keys=True, indent=2))


def _load_measure(path: str) -> Measure:
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict) and "measure" in data:
        data = data["measure"]
    if isinstance(data, list):
        weights = {entry["rep"]: float(entry["p"]) for entry in data}
    else:
        weights = {str(rep): float(p) for rep, p in data.items()}
    return Measure(weights)


def _measure_doc(measure: Measure) -> list[dict]:
    return [{"rep": rep, "p": p} for rep, p in sorted(measure.weights.items())]


def cmd_enumerate(args) -> int:
    sigma = _sigma_of(args)
    blocks = enumerate_blocks(args.k, args.t, sigma)
    if args.csv:
        print("rep,merged,orbit_size,v00,v01,v02,v11,v12,v22")
        for b in blocks:
            V = b.moments.V
            merged = "|".join("".join(map(str, r)) for r in b.merged_reps)
            print(f"{b.rep_str},{merged},{b.orbit_size},"
                  f"{V[0,0]:.6f},{V[0,1]:.6f},{V[0,2]:.6f},"
                  f"{V[1,1]:.6f},{V[1,2]:.6f},{V[2,2]:.6f}")
        return 0
    _emit({
        "schema_version": SCHEMA_VERSION,
        "job": _job_doc(args),
        "blocks": [
            {
                "rep": b.rep_str,
                "merged_reps": ["".join(map(str, r)) for r in b.merged_reps],
                "orbit_size": b.orbit_size,
                "V": b.moments.V.tolist(),
            }
            for b in blocks
        ],
    })
    return 0


def cmd_solve(args) -> int:
    sigma = _sigma_of(args)
    config = _config_of(args)
    try:
        result = solve(args.k, args.t, sigma, config,
                       opts=_options_of(args), seed=args.seed)
    except NotEstimable as exc:
        print(f"not estimable: {exc}", file=sys.stderr)
        return 2
    except NoConvergence as exc:
        result = exc.result
        if result is not None:
            _emit(_solution_doc(args, result))
        print(f"no convergence: {exc}", file=sys.stderr)
        return 3
    if args.csv:
        print("rep,p")
        for rep, p in sorted(result.measure.weights.items()):
            print(f"{rep},{p:.6f}")
        return 0
    _emit(_solution_doc(args, result))
    return 0


def _solution_doc(args, result) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "job": _job_doc(args),
        "measure": _measure_doc(result.measure),
        "value": result.value,
        "certificate": {
            "gap": result.report.gap,
            "scores": {r: s for r, s in sorted(result.report.scores.items())},
        },
        "diagnostics": {
            "iterations": result.iterations,
            "converged": result.converged,
            "branch": result.report.branch,
            "verdict": result.report.verdict,
            "version": __version__,
        },
    }


def cmd_verify(args) -> int:
    sigma = _sigma_of(args)
    config = _config_of(args)
    measure = _load_measure(args.measure)
    blocks = enumerate_blocks(args.k, args.t, sigma)
    tol = args.gap_tol if args.gap_tol is not None else 1e-8
    report = verify(measure, blocks, config, tolerance=tol)
    _emit({
        "schema_version": SCHEMA_VERSION,
        "job": _job_doc(args),
        "measure": _measure_doc(measure),
        "certificate": {"gap": report.gap, "scores": report.scores},
        "verdict": report.verdict,
        "notes": report.notes,
    })
    return 0 if report.verdict == "optimal" else 1


def cmd_efficiency(args) -> int:
    sigma = _sigma_of(args)
    blocks = enumerate_blocks(args.k, args.t, sigma)
    if args.cross:
        optima = {}
        for crit in CRITERIA:
            config = _config_of(args, criterion=crit)
            optima[crit] = solve(args.k, args.t, sigma, config,
                                 opts=_options_of(args), seed=args.seed)
        table = []
        for crit_of_measure in CRITERIA:
            row = []
            for crit_evaluated in CRITERIA:
                config = _config_of(args, criterion=crit_evaluated)
                V = v_xi(optima[crit_of_measure].measure, blocks)
                value = criterion_value(schur_quantities(V, config),
                                        crit_evaluated)
                row.append(value / optima[crit_evaluated].value)
            table.append(row)
        if args.csv:
            print("measure," + ",".join(CRITERIA))
            for crit, row in zip(CRITERIA, table):
                print(crit + "," + ",".join(f"{v:.6f}" for v in row))
            return 0
        _emit({
            "schema_version": SCHEMA_VERSION,
            "job": _job_doc(args, criterion=None),
            "criteria": list(CRITERIA),
            "table": table,
            "optima": {c: _measure_doc(r.measure) for c, r in optima.items()},
        })
        return 0

    if not args.measure:
        print("either --measure or --cross is required", file=sys.stderr)
        return 2
    measure = _load_measure(args.measure)
    config = _config_of(args)
    reference = solve(args.k, args.t, sigma, config,
                      opts=_options_of(args), seed=args.seed)
    V = v_xi(measure, blocks)
    value = criterion_value(schur_quantities(V, config), config.criterion)
    eff = value / reference.value
    if args.csv:
        print("criterion,efficiency")
        print(f"{config.criterion},{eff:.6f}")
        return 0
    _emit({
        "schema_version": SCHEMA_VERSION,
        "job": _job_doc(args),
        "measure": _measure_doc(measure),
        "value": value,
        "efficiency": eff,
    })
    return 0


def cmd_round(args) -> int:
    sigma = _sigma_of(args)
    config = _config_of(args)
    measure = _load_measure(args.measure)
    try:
        counts = round_to_exact(measure, args.n)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    rounded = Measure({rep: c / args.n for rep, c in counts.items() if c > 0})
    blocks = enumerate_blocks(args.k, args.t, sigma)
    eff = None
    try:
        reference = solve(args.k, args.t, sigma, config,
                          opts=_options_of(args), seed=args.seed)
        V = v_xi(rounded, blocks)
        value = criterion_value(schur_quantities(V, config), config.criterion)
        eff = value / reference.value
    except (NotEstimable, NoConvergence):
        pass
    layout = []
    for rep in sorted(counts):
        layout.extend([rep] * counts[rep])
    if args.csv:
        print("rep,count")
        for rep in sorted(counts):
            print(f"{rep},{counts[rep]}")
        return 0
    _emit({
        "schema_version": SCHEMA_VERSION,
        "job": _job_doc(args),
        "n": args.n,
        "counts": {rep: counts[rep] for rep in sorted(counts)},
        "layout": layout,
        "efficiency": eff,
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circdesign",
        description="Optimal approximate circular block designs under "
                    "proportional neighbor interference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="list symmetric blocks")
    _add_common(p, need_criterion=False)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("solve", help="find the optimal measure")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check a measure's optimality certificate")
    _add_common(p)
    p.add_argument("--measure", required=True, help="JSON measure file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("efficiency", help="relative efficiency of a measure")
    _add_common(p)
    p.add_argument("--measure", help="JSON measure file")
    p.add_argument("--cross", action="store_true",
                   help="4x4 cross-criteria efficiency table")
    p.set_defaults(func=cmd_efficiency)

    p = sub.add_parser("round", help="round a measure to an exact design")
    _add_common(p)
    p.add_argument("--measure", required=True, help="JSON measure file")
    p.add_argument("-n", type=int, required=True, help="number of blocks")
    p.set_defaults(func=cmd_round)
    return parser


def main(argv=None) -> int:
    threads = os.environ.get("DESIGN_SOLVER_THREADS")
    if threads is not None:
        try:
            if int(threads) < 1:
                raise ValueError
        except ValueError:
            print("DESIGN_SOLVER_THREADS must be a positive integer",
                  file=sys.stderr)
            return 2
        # Cap the BLAS pools backing the vectorized kernels.
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NotPositiveDefinite, DegenerateTotalEffect, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
