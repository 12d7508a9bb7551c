"""Command-line front end: ``slevel run`` and ``slevel verify``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from . import io as sio
from . import verify as sverify
from .geometry import ENTROPY_FLOOR, GeometrySpec, estimate_constants
from .levelset import DflsConfig, SflsConfig, dfls_solve, sfls_solve
from .oracle import OracleConfig
from .problems import (FairnessSpec, MulticlassNpSpec, PerishableMdpSpec, build_alp, build_fairness,
                       build_np_multiclass, fairness_data, gaussian_classes, one_d, split_classes, two_d)
from .soec import SaddleFunction

EXIT_SOLVER = 1
EXIT_CONFIG = 2


def build_problem(ps: sio.ProblemSettings):
    if ps.name == "toy1d":
        return one_d(ps.noise)
    if ps.name == "toy2d":
        return two_d(ps.noise)
    if ps.name == "np":
        if ps.data_path:
            dm = sio.load_libsvm(ps.data_path)
        else:
            dm = gaussian_classes(ps.num_points, ps.num_classes, ps.feature_dim, seed=ps.data_seed)
        return build_np_multiclass(MulticlassNpSpec(split_classes(dm), ps.radius))
    if ps.name == "fairness":
        if ps.data_path:
            raise sio.ConfigError("problem.data_path", "fairness runs use synthetic groups only")
        labeled, gm, gf = fairness_data(ps.num_points, ps.feature_dim, seed=ps.data_seed)
        return build_fairness(FairnessSpec(labeled, gm, gf, kappa=ps.kappa, radius=ps.radius))
    if ps.name == "alp":
        return build_alp(PerishableMdpSpec.standard_instance(ps.cost_profile), ps.num_samples, seed=ps.data_seed)
    raise sio.ConfigError("problem.name", f"unknown problem {ps.name!r}")


def initial_level(problem, s: sio.SolverSettings):
    """``r0`` in minimization units: explicit, or ``f0(x0) + margin``."""
    if s.r0_mode == "explicit":
        return float(s.r0)
    x0 = problem.initial_point
    if problem.has_exact:
        f0 = float(problem.exact_values(x0)[0])
    else:
        f0 = float(problem.saa_values(x0, 10_000, problem.eval_seed)[0])
    return f0 + s.r0_margin


def _opt(v):
    return None if v is None or math.isnan(v) else float(v)


def solve_seed(cfg: sio.RunConfig, seed, problem=None):
    """Run the configured solver for one seed; returns ``(trace, step_constant)``."""
    s = cfg.solver
    problem = problem or build_problem(cfg.problem)
    r0 = initial_level(problem, s)
    ref = _opt(s.reference_f_star)
    if s.name == "dfls":
        return dfls_solve(problem, DflsConfig(r0, s.outer_limit, s.iterations, s.step_constant,
                                              s.max_data_passes, ref)), s.step_constant
    geo = GeometrySpec.for_problem(problem)
    c = s.step_constant
    if s.step_rule == "theory":
        c = estimate_constants(SaddleFunction(problem, r0), geo, seed=seed, batch_size=s.batch_size).m
    oc = OracleConfig(s.iterations, c, s.batch_size, s.delta, seed)
    outer = 1 if s.name == "ovsmd-only" else s.outer_limit
    cfg_l = SflsConfig(r0, s.theta, outer, oc, s.delta, eps_opt=_opt(s.eps_opt),
                       max_data_passes=s.max_data_passes, reference_f_star=ref)
    return sfls_solve(problem, geo, cfg_l), c


def _seed_task(cfg, seed, out_dir, wall_time):
    try:
        trace, c = solve_seed(cfg, seed)
    except Exception as exc:  # reported per seed, the sweep continues
        return {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}
    if not trace.records:
        return {"seed": seed, "error": "no outer iteration fit in the data-pass budget"}
    path = Path(out_dir) / f"trace_seed{seed}.csv"
    sio.write_metrics_csv(trace, path, wall_time=wall_time)
    m = trace.final.metrics
    return {"seed": seed, "csv": path.name, "outer_iterations": len(trace), "halted": trace.halted,
            "objective": m.objective_value, "max_violation": m.max_violation,
            "relative_gap": m.relative_gap, "data_passes": trace.final.data_passes,
            "feasible_path": trace.feasible_path(0.0), "step_constant": c, "warnings": trace.warnings}


def effective_jobs(requested):
    cap = os.environ.get("SLEVEL_THREADS")
    jobs = max(1, int(requested))
    if cap:
        jobs = min(jobs, max(1, int(cap)))
    return jobs


def _summary(cfg, rows):
    done = [r for r in rows if "error" not in r]
    freq = float(np.mean([r["feasible_path"] for r in done])) if done else None
    return {"problem": cfg.problem.name, "solver": cfg.solver.name, "seeds": list(cfg.seeds),
            "completed": len(done), "failed": [r["seed"] for r in rows if "error" in r],
            "feasible_path_frequency": freq, "per_seed": sorted(rows, key=lambda r: r["seed"])}


def run_experiment(cfg: sio.RunConfig, wall_time=True, log=print):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summary_path = out / "summary.json"
    rows = []

    def flush():
        summary_path.write_text(json.dumps(_summary(cfg, rows), indent=2) + "\n", encoding="utf-8")

    jobs = effective_jobs(cfg.jobs)
    if jobs == 1 or len(cfg.seeds) == 1:
        for seed in cfg.seeds:
            rows.append(_seed_task(cfg, seed, out, wall_time))
            log(_describe(rows[-1]))
            flush()
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_seed_task, cfg, seed, out, wall_time) for seed in cfg.seeds]
            for fut in as_completed(futures):
                rows.append(fut.result())
                log(_describe(rows[-1]))
                flush()
    flush()
    return _summary(cfg, rows)


def _describe(row):
    if "error" in row:
        return f"seed {row['seed']}: error {row['error']}"
    return (f"seed {row['seed']}: {row['outer_iterations']} outer, objective {row['objective']:.6g}, "
            f"max violation {row['max_violation']:.3g}, feasible path {row['feasible_path']}")


def _cmd_run(args):
    try:
        overrides = list(args.set or [])
        if args.seed is not None:
            overrides.append(f"run.seeds={args.seed}")
        if args.jobs is not None:
            overrides.append(f"run.jobs={args.jobs}")
        if args.out is not None:
            overrides.append(f"run.out={args.out}")
        cfg = sio.load_run_config(args.config, overrides)
        if cfg.problem.data_path and not os.path.exists(cfg.problem.data_path):
            raise sio.ConfigError("problem.data_path", f"no such file {cfg.problem.data_path!r}")
    except (sio.ConfigError, sio.LibsvmParseError, FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = run_experiment(cfg, wall_time=not args.no_wall_time)
    print(f"feasible path frequency: {summary['feasible_path_frequency']}")
    if summary["failed"]:
        print(f"solver errors on seeds {summary['failed']}", file=sys.stderr)
        return EXIT_SOLVER
    return 0


def _run_check(check, floor):
    kw = {"entropy_floor": floor} if check is sverify.criterion_prox else {}
    return check(**kw)


def _cmd_verify(args):
    checks = sverify.QUICK if args.level == "quick" else sverify.FULL
    jobs = effective_jobs(args.jobs)
    results = []
    if jobs == 1:
        for check in checks:
            results.append(_run_check(check, args.entropy_floor))
            print(results[-1].line(), flush=True)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_check, c, args.entropy_floor) for c in checks]
            for fut in as_completed(futures):
                results.append(fut.result())
                print(results[-1].line(), flush=True)
    results.sort(key=lambda r: r.cid)
    failed = [r.cid for r in results if not r.passed]
    report = {"level": args.level, "passed": not failed, "failed": failed,
              "criteria": [{"id": r.cid, "name": r.name, "passed": r.passed, "detail": r.detail,
                            "seconds": round(r.seconds, 3)} for r in results]}
    text = json.dumps(report, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    print(text)
    if failed:
        print(f"failed criteria: {', '.join(map(str, failed))}", file=sys.stderr)
        return 1
    return 0


def make_parser():
    ap = argparse.ArgumentParser(prog="slevel", description="Stochastic level-set solvers and checks.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a solver over one or more seeds")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--jobs", type=int)
    run.add_argument("--out")
    run.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    run.add_argument("--no-wall-time", action="store_true",
                     help="leave wall_ms empty so repeated runs give identical CSVs")
    run.set_defaults(func=_cmd_run)
    ver = sub.add_parser("verify", help="run the reduced-scale verification checks")
    ver.add_argument("--level", choices=("quick", "full"), default="quick")
    ver.add_argument("--jobs", type=int, default=1)
    ver.add_argument("--report", help="also write the JSON report here")
    ver.add_argument("--entropy-floor", type=float, default=ENTROPY_FLOOR, help=argparse.SUPPRESS)
    ver.set_defaults(func=_cmd_verify)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
