"""Command-line entry point: ``propvol <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import instance as inst_mod
from . import pipeline
from .errors import DesignError, InvalidInputError
from .relax import ObjectiveSpec, solve_relaxation


def _emit(text: str, out) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _shared(p, instance=True, objective=True):
    if instance:
        p.add_argument("--instance", required=True, help="instance JSON path")
    if objective:
        p.add_argument("--objective", default="a-opt",
                       help="a-opt | small-k | e-opt | ratio:LP:L (default a-opt)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="propvol",
                                 description="Proportional volume sampling for experimental design.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("solve", help="solve the convex relaxation")
    _shared(p)

    p = sub.add_parser("round", help="solve, round and evaluate")
    _shared(p)
    p.add_argument("--regime", default="auto", choices=pipeline.CLI_REGIMES)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--derandomize", action="store_true")

    p = sub.add_parser("gap", help="relaxation value vs brute-force optimum")
    _shared(p)

    p = sub.add_parser("rip", help="restricted-invertibility subset")
    _shared(p, objective=False)
    p.add_argument("--weights", help="JSON list of nonnegative weights (default all ones)")

    p = sub.add_parser("eopt", help="E-opt integrality experiment on the complete-graph instance")
    _shared(p, instance=False, objective=False)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--trials", type=int, default=1000)

    p = sub.add_parser("gen", help="generate an instance")
    p.add_argument("kind", choices=("random", "aopt-gap", "eopt-gap", "ratio-gap", "graph"))
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--N", type=float, default=1e8)
    p.add_argument("--l", type=int)
    p.add_argument("--lp", type=int)
    p.add_argument("--graph", help="graph JSON path (kind=graph)")
    p.add_argument("--repetitions", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("bench", help="run a batch config and write CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    return ap


def _timed(report: dict, t0: float, args) -> dict:
    if getattr(args, "timing", False):
        report["wall_time_s"] = time.perf_counter() - t0
    return report


def _run(args) -> str:
    t0 = time.perf_counter()
    if args.cmd == "gen":
        params = {k: v for k, v in vars(args).items() if v is not None}
        return pipeline.to_json(pipeline.generate(args.kind, params).to_dict())
    if args.cmd == "bench":
        return pipeline.bench(args.config)
    if args.cmd == "eopt":
        rep = pipeline.eopt_experiment(args.d, args.k, args.trials, args.seed)
        return pipeline.to_json(_timed(rep, t0, args))

    inst = inst_mod.load_instance(args.instance)
    if args.cmd == "rip":
        if args.weights:
            try:
                c = np.asarray(json.loads(Path(args.weights).read_text()), dtype=float)
            except (OSError, ValueError) as exc:
                raise InvalidInputError(f"cannot read weights: {exc}") from exc
        else:
            c = np.ones(inst.n)
        _, rep = pipeline.rip_subset(inst.vectors, c, inst.k)
        return pipeline.to_json(_timed(rep, t0, args))

    obj = ObjectiveSpec.parse(args.objective)
    if args.cmd == "solve":
        sol = solve_relaxation(inst, obj, tol=args.tol, max_iters=args.max_iters)
        rep = {"instance": inst.summary(), "objective": obj.label(), "cp_value": sol.cp_value,
               "x": [float(v) for v in sol.x], "iterations": sol.iterations,
               "converged": sol.converged, "fw_gap": sol.gap}
        return pipeline.to_json(_timed(rep, t0, args))
    if args.cmd == "gap":
        return pipeline.to_json(_timed(pipeline.evaluate_gap(inst, obj), t0, args))
    # round
    if obj.kind == "e-opt":
        raise InvalidInputError("e-opt has no rounding guarantee; use the 'eopt' subcommand")
    rep = pipeline.run_design(inst, obj, args.regime, seed=args.seed,
                              derandomize=args.derandomize, eps=args.epsilon,
                              tol=args.tol, max_iters=args.max_iters)
    return pipeline.to_json(rep.to_dict(timing=args.timing))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = _run(args)
    except DesignError as exc:
        print(f"propvol: error: {exc}", file=sys.stderr)
        return exc.exit_code
    _emit(text, getattr(args, "out", None))
    return 0


if __name__ == "__main__":
    sys.exit(main())
