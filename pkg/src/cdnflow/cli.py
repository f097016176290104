"""Command-line harness: generate instances, run solvers, compare algorithms.

Exit codes: 0 all requested work done, 1 at least one solver cell failed,
2 usage error.  Distributed algorithms run on the simulation kernel and
report message totals and causal-chain length instead of wall-clock time;
``--wallclock`` adds host runtime, which is explicitly not reproducible.
"""

from __future__ import annotations

import argparse
import os
import statistics
import sys
import time

from .auction import auction_tp
from .distinit import basis_completion, dist_init_protocol
from .distts import dist_ts
from .instances import GeneratorParams, emit_rrsp, emit_stats, generate, parse_rrsp
from .seq import brute_force_optimum, minimum_cost_method, northwest_corner, \
    transportation_simplex
from .tp import Infeasible, objective, reduce_rrsp_to_tp

ALGORITHMS = ("nwc", "mcm", "seq-ts", "dist-init", "dist-ts", "auction", "oracle")

COMPARE_COLUMNS = [
    "instance", "algorithm", "status", "opt", "value", "pct_opt", "sd",
    "feasible_value", "feasible_pivots", "total_pivots", "parallel_rounds",
    "phases", "msg_count", "chain_len",
]


def _out_path(path):
    base = os.environ.get("CDNFLOW_OUT")
    if path and base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _write(text, path):
    if path:
        path = _out_path(path)
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_tp(path):
    with open(path) as fh:
        rrsp = parse_rrsp(fh.read())
    return reduce_rrsp_to_tp(rrsp)


def _dump_flows(x, path):
    with open(_out_path(path), "w") as fh:
        for row in x:
            fh.write(" ".join(str(v) for v in row) + "\n")


def run_algorithm(inst, alg, seed=0, delay="unit", init="mcm", record_events=False):
    """One (instance, algorithm, seed) cell; returns a result dict."""
    if alg == "nwc":
        state = northwest_corner(inst)
        return {"value": objective(inst, state.x), "x": state.x}
    if alg == "mcm":
        state = minimum_cost_method(inst)
        return {"value": objective(inst, state.x), "x": state.x}
    if alg == "seq-ts":
        start = northwest_corner(inst) if init == "nwc" else minimum_cost_method(inst)
        res = transportation_simplex(inst, start)
        return {
            "value": res.solution.objective,
            "x": res.solution.x,
            "feasible_value": res.feasible_value,
            "feasible_pivots": res.feasible_pivots,
            "total_pivots": res.pivots,
        }
    if alg == "dist-init":
        sol, transcript = dist_init_protocol(inst, delay=delay, seed=seed)
        return {
            "value": sol.objective,
            "x": sol.x,
            "msg_count": transcript.msg_count,
            "chain_len": transcript.chain_len,
        }
    if alg == "dist-ts":
        sol, _ = dist_init_protocol(inst, delay=delay, seed=seed)
        basis = basis_completion(inst, sol.x)
        res = dist_ts(inst, basis, delay=delay, seed=seed,
                      record_events=record_events)
        return {
            "value": res.stats.objective,
            "x": res.solution.x,
            "feasible_value": res.stats.feasible_value,
            "feasible_pivots": res.stats.feasible_pivots,
            "total_pivots": res.stats.total_pivots,
            "parallel_rounds": res.stats.parallel_rounds,
            "msg_count": res.stats.msg_count,
            "chain_len": res.stats.chain_len,
        }
    if alg == "auction":
        res = auction_tp(inst, delay=delay, seed=seed, record_events=record_events)
        return {
            "value": res.stats.objective,
            "x": res.solution.x,
            "feasible_value": None,
            "feasible_round": res.stats.feasible_round,
            "total_rounds": res.stats.parallel_rounds,
            "phases": res.stats.phases,
            "msg_count": res.stats.msg_count,
            "chain_len": res.stats.chain_len,
        }
    if alg == "oracle":
        return {"value": brute_force_optimum(inst), "x": None}
    raise ValueError(f"unknown algorithm {alg!r}")


SOLVE_COLUMNS = {
    "nwc": ["instance", "algorithm", "value"],
    "mcm": ["instance", "algorithm", "value"],
    "oracle": ["instance", "algorithm", "value"],
    "seq-ts": ["instance", "algorithm", "value", "feasible_value",
               "feasible_pivots", "total_pivots"],
    "dist-init": ["instance", "algorithm", "value", "msg_count", "chain_len"],
    "dist-ts": ["instance", "objective", "feasible_first_value",
                "feasible_first_pivots", "total_pivots", "parallel_rounds",
                "msg_count", "chain_len"],
    "auction": ["instance", "opt", "feasible_first_value", "feasible_round",
                "total_rounds", "msg_count", "chain_len"],
}


def cmd_gen(args):
    params = GeneratorParams(
        n_servers=args.n,
        avg_requests_per_server=args.requests,
        content_count=args.contents,
        replication_degree=args.replication,
        bandwidth_tightness=args.tightness,
        klass=getattr(args, "class"),
        seed=args.seed,
        central_server=args.central,
    )
    _write(emit_rrsp(generate(params)), args.out)
    return 0


def cmd_solve(args):
    inst = _load_tp(args.instance)
    name = os.path.splitext(os.path.basename(args.instance))[0]
    started = time.monotonic()
    result = run_algorithm(inst, args.alg, seed=args.seed, delay=args.delay,
                           init=args.init)
    elapsed = time.monotonic() - started
    if args.alg == "dist-ts":
        row = {
            "instance": name,
            "objective": result["value"],
            "feasible_first_value": result["feasible_value"],
            "feasible_first_pivots": result["feasible_pivots"],
            "total_pivots": result["total_pivots"],
            "parallel_rounds": result["parallel_rounds"],
            "msg_count": result["msg_count"],
            "chain_len": result["chain_len"],
        }
    elif args.alg == "auction":
        row = {
            "instance": name,
            "opt": result["value"],
            "feasible_first_value": result["value"],
            "feasible_round": result["feasible_round"],
            "total_rounds": result["total_rounds"],
            "msg_count": result["msg_count"],
            "chain_len": result["chain_len"],
        }
    else:
        row = {"instance": name, "algorithm": args.alg}
        row.update({k: v for k, v in result.items() if k != "x"})
    columns = list(SOLVE_COLUMNS[args.alg])
    if args.wallclock:
        columns.append("wall_s")
        row["wall_s"] = round(elapsed, 3)
    _write(emit_stats([row], columns=columns), args.out)
    if args.dump and result.get("x") is not None:
        _dump_flows(result["x"], args.dump)
    return 0


def cmd_compare(args):
    algs = [a.strip() for a in args.algs.split(",") if a.strip()]
    for alg in algs:
        if alg not in ALGORITHMS:
            raise SystemExit(f"unknown algorithm {alg!r}")
    rows = []
    failures = 0
    for path in args.instances:
        name = os.path.splitext(os.path.basename(path))[0]
        try:
            inst = _load_tp(path)
            opt = transportation_simplex(
                inst, minimum_cost_method(inst)
            ).solution.objective
        except (Infeasible, ValueError, OSError) as exc:
            for alg in algs:
                failures += 1
                rows.append({
                    "instance": name, "algorithm": alg,
                    "status": f"error:{exc.__class__.__name__}",
                })
            continue
        for alg in algs:
            reps = args.reps if alg in ("dist-init",) else 1
            seeds = [args.seed + k for k in range(reps)]
            values = []
            row = {"instance": name, "algorithm": alg, "status": "ok", "opt": opt}
            started = time.monotonic()
            try:
                for s in seeds:
                    result = run_algorithm(inst, alg, seed=s, delay=args.delay,
                                           init=args.init)
                    values.append(result["value"])
                last = result
                if reps > 1:
                    mean = statistics.fmean(values)
                    row["value"] = round(mean, 1)
                    row["pct_opt"] = round(100.0 * (mean - opt) / opt, 1) if opt else None
                    row["sd"] = round(statistics.pstdev(values), 1)
                else:
                    row["value"] = last["value"]
                    row["pct_opt"] = (
                        round(100.0 * (last["value"] - opt) / opt, 1) if opt else None
                    )
                for key in ("feasible_value", "feasible_pivots", "total_pivots",
                            "parallel_rounds", "phases", "msg_count", "chain_len"):
                    if key in last:
                        row[key] = last[key]
            except (Infeasible, ValueError, RuntimeError) as exc:
                failures += 1
                row["status"] = f"error:{exc.__class__.__name__}"
            if args.wallclock:
                row["wall_s"] = round(time.monotonic() - started, 3)
            rows.append(row)
    columns = COMPARE_COLUMNS + (["wall_s"] if args.wallclock else [])
    _write(emit_stats(rows, columns=columns), args.out)
    return 1 if failures else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cdnflow",
        description="Transportation-problem solvers for CDN request routing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a routing instance")
    gen.add_argument("--n", type=int, required=True, help="number of servers")
    gen.add_argument("--requests", type=int, default=70,
                     help="average requests per server")
    gen.add_argument("--contents", type=int, default=None)
    gen.add_argument("--replication", type=int, default=3,
                     help="holders per content")
    gen.add_argument("--class", choices=("medium", "hard"), default="medium")
    gen.add_argument("--tightness", type=float, default=None,
                     help="total bandwidth / total demand (overrides --class)")
    gen.add_argument("--central", action="store_true",
                     help="server 1 holds every content")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default=None)
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser("solve", help="run one solver on one instance")
    solve.add_argument("instance")
    solve.add_argument("--alg", choices=ALGORITHMS, required=True)
    solve.add_argument("--init", choices=("nwc", "mcm"), default="mcm",
                       help="starting basis for seq-ts")
    solve.add_argument("--seed", type=int, default=0, help="kernel seed")
    solve.add_argument("--delay", default="unit",
                       help="kernel delay model: unit or uniform:LO:HI")
    solve.add_argument("--dump", default=None, help="write the flow matrix here")
    solve.add_argument("--wallclock", action="store_true",
                       help="add host runtime (not reproducible)")
    solve.add_argument("--out", default=None)
    solve.set_defaults(func=cmd_solve)

    comp = sub.add_parser("compare", help="run several algorithms side by side")
    comp.add_argument("instances", nargs="+")
    comp.add_argument("--algs", required=True,
                      help="comma-separated algorithm list")
    comp.add_argument("--init", choices=("nwc", "mcm"), default="mcm")
    comp.add_argument("--seed", type=int, default=0)
    comp.add_argument("--reps", type=int, default=10,
                      help="seeds per dist-init cell")
    comp.add_argument("--delay", default="unit")
    comp.add_argument("--wallclock", action="store_true")
    comp.add_argument("--out", default=None)
    comp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "reps", 1) < 1:
        parser.error("--reps must be at least 1")
    try:
        return args.func(args)
    except (Infeasible, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
