"""Reduced-scale verification checks, shared by the CLI and the test suite.

Each ``criterion_*`` function runs one check and returns a :class:`CheckResult`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import io as sio
from .geometry import (ENTROPY_FLOOR, GeometrySpec, TheoryConstants, bregman_entropy, compute_omega,
                       estimate_constants, iteration_bound_t, iteration_bound_w, prox_entropy_simplex)
from .levelset import (DflsConfig, LevelNotAboveOptimumError, SflsConfig, condition_diagnostics,
                       derive_tolerances, dfls_solve, estimate_initial_bound, outer_iteration_bound,
                       sfls_solve)
from .oracle import OracleConfig, run_ovsmd
from .problems import (FairnessSpec, MulticlassNpSpec, PerishableMdpSpec, build_alp, build_fairness,
                       build_np_multiclass, fairness_data, gaussian_classes, one_d, split_classes, two_d)
from .soec import Box, GridLevelOracle, SaddleFunction


@dataclass
class CheckResult:
    cid: int
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0
    data: dict = field(default_factory=dict, repr=False)

    def line(self):
        return f"criterion {self.cid:>2} [{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(cid, name):
    def wrap(fn):
        def run(**kw):
            t = time.perf_counter()
            passed, detail, data = fn(**kw)
            return CheckResult(cid, name, bool(passed), detail, time.perf_counter() - t, data)
        run.cid = cid
        run.__name__ = run.__qualname__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


# ---------------------------------------------------------------------------


@_timed(1, "level-set function shape")
def criterion_level_function():
    """Grid ``H`` is non-increasing, vanishes at ``f*`` and changes sign there."""
    msgs, ok = [], True
    for prob in (one_d(), two_d()):
        grid = GridLevelOracle(prob, 201)
        rs = np.linspace(prob.f_star - 1.0, prob.f_star + 1.0, 20)
        hs = np.array([grid(r) for r in rs])
        rise = float(np.max(np.diff(hs)))
        h_star = grid(prob.f_star)
        band = 1e-2
        signs = np.all(hs[rs < prob.f_star - band] > 0) and np.all(hs[rs > prob.f_star + band] < 0)
        good = rise <= 1e-6 and abs(h_star) <= 1e-3 and signs
        ok &= good
        msgs.append(f"{prob.name}: max rise {rise:.1e}, |H(f*)| {abs(h_star):.1e}, signs {'ok' if signs else 'bad'}")
    return ok, "; ".join(msgs), {}


def _grid_prox_2(y, zeta):
    """Argmin of ``zeta @ (u - y) + KL(u || y)`` over the 2-simplex by grid plus bounded polish."""
    def obj(s):
        u = np.array([s, 1.0 - s])
        return float(zeta @ (u - y) + np.sum(u * np.log(u / y)))
    s = np.linspace(1e-9, 1 - 1e-9, 20001)
    vals = zeta[0] * (s - y[0]) + zeta[1] * ((1 - s) - y[1]) + s * np.log(s / y[0]) + (1 - s) * np.log((1 - s) / y[1])
    k = int(np.argmin(vals))
    lo, hi = s[max(k - 1, 0)], s[min(k + 1, len(s) - 1)]
    res = optimize.minimize_scalar(obj, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return np.array([res.x, 1 - res.x])


@_timed(2, "prox correctness")
def criterion_prox(entropy_floor=ENTROPY_FLOOR, seed=0):
    """Entropy prox equals a grid-search argmin; projection is idempotent and nonexpansive."""
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(100):
        y = rng.dirichlet([1.0, 1.0])
        y = np.clip(y, 1e-3, None)
        y /= y.sum()
        zeta = rng.uniform(-3, 3, size=2)
        err = max(err, float(np.max(np.abs(prox_entropy_simplex(y, zeta, entropy_floor) - _grid_prox_2(y, zeta)))))
    # a step large enough to underflow exp must still leave a strictly positive point
    extreme = prox_entropy_simplex(np.full(3, 1 / 3), np.array([2000.0, 0.0, 0.0]), entropy_floor)
    positive = bool(np.all(extreme > 0))
    try:
        bregman_entropy(extreme, np.full(3, 1 / 3))
        domain_ok = positive
    except ValueError:
        domain_ok = False
    box = Box(-np.ones(3), np.ones(3))
    a = rng.normal(scale=3, size=(1000, 3))
    b = rng.normal(scale=3, size=(1000, 3))
    pa = np.array([box.project(v) for v in a])
    pb = np.array([box.project(v) for v in b])
    idem = max(float(np.max(np.abs(box.project(p) - p))) for p in pa)
    nonexp = bool(np.all(np.linalg.norm(pa - pb, axis=1) <= np.linalg.norm(a - b, axis=1) + 1e-12))
    ok = err <= 1e-4 and domain_ok and idem == 0.0 and nonexp
    return ok, (f"max prox error {err:.1e}, strictly positive under extreme step {domain_ok}, "
                f"idempotent {idem == 0.0}, nonexpansive {nonexp}"), {"prox_error": err}


@_timed(3, "zero-noise bound sandwich")
def criterion_sandwich():
    """``l_hat_t <= H(2) <= u_hat_t`` and ``u_hat_t >= P(2, x_bar_t)`` at every step."""
    prob = one_d()
    h = GridLevelOracle(prob)(2.0)
    rep = run_ovsmd(SaddleFunction(prob, 2.0), GeometrySpec.for_problem(prob), OracleConfig(2000, 1.0),
                    record_history=True)
    hist = rep.history
    low = float(np.max(hist["lower"] - h))
    up = float(np.min(hist["upper"] - h))
    dom = float(np.min(hist["upper"] - hist["p_bar"]))
    ok = low <= 1e-3 and up >= -1e-3 and dom >= -1e-12
    return ok, (f"H(2)={h:.6f}, max(l-H)={low:.2e}, min(u-H)={up:.2e}, min(u-P(x_bar))={dom:.2e}, "
                f"final gap {rep.upper - rep.lower:.3f}"), {}


@_timed(4, "OVSMD rate")
def criterion_rate():
    """Log-log slope of the certificate gap over T in {100, 400, 1600, 6400}."""
    prob = one_d()
    rep = run_ovsmd(SaddleFunction(prob, 2.0), GeometrySpec.for_problem(prob), OracleConfig(6400, 1.0),
                    record_history=True)
    ts = np.array([100, 400, 1600, 6400])
    gaps = rep.history["upper"][ts - 1] - rep.history["lower"][ts - 1]
    slope = float(np.polyfit(np.log(ts), np.log(gaps), 1)[0])
    return -0.65 <= slope <= -0.35, f"gaps {np.round(gaps, 4).tolist()}, slope {slope:.3f}", {"slope": slope}


@_timed(5, "SFLS zero-noise convergence")
def criterion_sfls_zero_noise(step_constant=1.0):
    """Feasible path, relative gap <= 0.01 and outer count within the measured-beta bound."""
    theta, eps = 1.25, 0.01
    msgs, ok = [], True
    for prob in (one_d(), two_d()):
        r0 = float(prob.exact_values(prob.initial_point)[0])
        geo = GeometrySpec.for_problem(prob)
        diag = condition_diagnostics(prob, r0, theta, eps)
        oc = OracleConfig(2000, step_constant)
        est = estimate_initial_bound(SaddleFunction(prob, r0), geo, 0.1, 0.1, theta, oc)
        eps_opt, _ = derive_tolerances(est.u_bar, theta, eps)
        trace = sfls_solve(prob, geo, SflsConfig(r0, theta, 200, oc, 0.1, eps_opt=eps_opt,
                                                  reference_f_star=prob.f_star))
        viol = max(rec.metrics.max_violation for rec in trace.records)
        gap = trace.final.metrics.relative_gap
        good = trace.halted and viol <= 1e-9 and gap <= eps and len(trace) <= diag.outer_bound + 2
        ok &= good
        msgs.append(f"{prob.name}: {len(trace)} outer (bound {diag.outer_bound}+2, beta {diag.beta_hat:.3f}), "
                    f"max violation {viol:.2e}, final gap {gap:.4f}")
    return ok, "; ".join(msgs), {}


def noisy_toy_sweep(seeds=range(50), noise=0.5, delta=0.1, batch=16, iterations=500, outer=20, step_constant=1.0):
    prob = one_d(noise)
    geo = GeometrySpec.for_problem(prob)
    flags = []
    for s in seeds:
        trace = sfls_solve(prob, geo, SflsConfig(2.0, 1.1, outer, OracleConfig(iterations, step_constant, batch, seed=s),
                                                  delta, reference_f_star=1.0))
        flags.append(trace.feasible_path(0.0))
    return np.array(flags)


@_timed(6, "high-probability feasible path")
def criterion_feasible_path(num_seeds=50):
    flags = noisy_toy_sweep(range(num_seeds))
    freq = float(flags.mean())
    return freq >= 0.9, f"{int(flags.sum())}/{len(flags)} seeds feasible throughout (frequency {freq:.2f})", {"frequency": freq}


@_timed(7, "initial bound estimator")
def criterion_bound_estimator():
    prob = one_d()
    geo = GeometrySpec.for_problem(prob)
    oc = OracleConfig(500, 1.0)
    est = estimate_initial_bound(SaddleFunction(prob, 2.0), geo, 0.1, 0.1, 1.1, oc)
    ok = -0.5 <= est.u_bar < 0 and 0.5 / abs(est.u_bar) <= 1.1
    try:
        estimate_initial_bound(SaddleFunction(prob, prob.f_star), geo, 0.1, 0.1, 1.1, oc, max_iterations=4000)
        capped = False
    except LevelNotAboveOptimumError:
        capped = True
    return ok and capped, (f"r0=2: u_bar={est.u_bar:.4f} after {est.halvings} halvings, "
                           f"ratio {0.5 / abs(est.u_bar):.4f}; r0=f*: cap reached {capped}"), {}


NP_C_GRID = (0.05, 0.1, 1.0, 2.0, 5.0)


def np_comparison(data_seed=0, budget=50.0, batch=100, sfls_t=(50, 100, 200), dfls_t=(5, 10, 25)):
    """Tune each method over the same step-constant grid and compare at a pass budget."""
    dm = gaussian_classes(3000, 3, 2, seed=data_seed)
    prob = build_np_multiclass(MulticlassNpSpec(split_classes(dm), 5.0))
    geo = GeometrySpec.for_problem(prob)
    r0 = float(prob.exact_values(prob.initial_point)[0])
    dfls = {(t, c): dfls_solve(prob, DflsConfig(r0, 10**6, t, c, max_data_passes=budget))
            for t in dfls_t for c in NP_C_GRID}
    sfls = {(t, c): sfls_solve(prob, geo, SflsConfig(r0, 1.1, 10**6, OracleConfig(t, c, batch, seed=data_seed),
                                                     0.1, max_data_passes=budget))
            for t in sfls_t for c in NP_C_GRID}
    best_d = min(dfls, key=lambda k: dfls[k].final.metrics.objective_value)
    best_s = min(sfls, key=lambda k: sfls[k].final.metrics.objective_value)
    ref = dfls_solve(prob, DflsConfig(r0, 10**6, best_d[0], best_d[1], max_data_passes=10 * budget))
    f_star = ref.final.metrics.objective_value

    def gap(tr):
        return (tr.final.metrics.objective_value - f_star) / (r0 - f_star)

    def worst(tr):
        return max(rec.metrics.max_violation for rec in tr.records)

    return dict(f_star=f_star, best_dfls=best_d, best_sfls=best_s, gap_dfls=gap(dfls[best_d]),
                gap_sfls=gap(sfls[best_s]), viol_dfls=worst(dfls[best_d]), viol_sfls=worst(sfls[best_s]),
                passes_dfls=dfls[best_d].final.data_passes, passes_sfls=sfls[best_s].final.data_passes)


@_timed(8, "SFLS vs DFLS data complexity")
def criterion_np_comparison():
    res = np_comparison()
    ok = res["gap_sfls"] <= res["gap_dfls"] and res["viol_sfls"] <= 1e-8 and res["viol_dfls"] <= 1e-8
    return ok, (f"f*={res['f_star']:.5f}; SFLS (T,c)={res['best_sfls']} gap {res['gap_sfls']:.5f} "
                f"viol {res['viol_sfls']:.2e}; DFLS (T,c)={res['best_dfls']} gap {res['gap_dfls']:.5f} "
                f"viol {res['viol_dfls']:.2e}"), res


@_timed(9, "fairness feasibility at zero")
def criterion_fairness_init():
    labeled, gm, gf = fairness_data(400, 4, seed=0)
    msgs, ok = [], True
    for kappa in (0.5, 0.95, 1.0):
        prob = build_fairness(FairnessSpec(labeled, gm, gf, kappa=kappa))
        vals = prob.exact_values(np.zeros(prob.dimension))
        slack = prob.thresholds - vals[1:]
        want = (1 - kappa) / (2 * kappa)
        good = abs(vals[0] - 1.0) <= 1e-12 and np.all(np.abs(slack - want) <= 1e-12)
        ok &= bool(good)
        msgs.append(f"kappa={kappa}: f0={vals[0]:.12f} slack={np.round(slack, 12).tolist()}")
    return ok, "; ".join(msgs), {}


def alp_sweep(seeds=range(10), m=50, batch=20, outer=20, iterations=200, theta=1.1):
    """SFLS on reduced ALP instances with the step constant set to the probe-estimated ``M``."""
    spec = PerishableMdpSpec.standard_instance(0)
    rows = []
    for s in seeds:
        prob = build_alp(spec, m, seed=s)
        geo = GeometrySpec.for_problem(prob)
        r0 = float(prob.saa_values(prob.initial_point, prob.saa_count, prob.eval_seed)[0])
        c = estimate_constants(SaddleFunction(prob, r0), geo, seed=s, batch_size=batch).m
        trace = sfls_solve(prob, geo, SflsConfig(r0, theta, outer, OracleConfig(iterations, c, batch, seed=s), 0.1))
        objs = np.array([rec.metrics.objective_value for rec in trace.records])
        rows.append(dict(seed=s, c=c, max_violation=max(rec.metrics.max_violation for rec in trace.records),
                         min_increase=float(np.min(np.diff(objs))) if len(objs) > 1 else 0.0,
                         final_objective=float(objs[-1])))
    return rows


@_timed(10, "ALP reduced scale")
def criterion_alp(num_seeds=10):
    rows = alp_sweep(range(num_seeds))
    feas = sum(r["max_violation"] <= 1e-3 for r in rows)
    mono = sum(r["min_increase"] >= -1e-3 for r in rows)
    ok = feas >= 0.9 * len(rows) and mono == len(rows)
    return ok, (f"SAA-feasible paths {feas}/{len(rows)}, monotone objective {mono}/{len(rows)}, "
                f"worst violation {max(r['max_violation'] for r in rows):.2f}"), {"rows": rows}


@_timed(11, "theory formulas")
def criterion_formulas():
    checks = []

    def close(a, b):
        return abs(a - b) <= 1e-9 * max(abs(b), 1e-300)

    checks.append(close(compute_omega(0.05), math.sqrt(12 * math.log(480))))
    checks.append(round(compute_omega(0.05), 3) == 8.607)
    checks.append(close(compute_omega(24 * math.exp(-12)), 16.0))
    tc = TheoryConstants(mx=1.0, my=0.0, q=1.0, dx=math.sqrt(0.5), dy=1.0)  # M = 1
    checks.append(iteration_bound_t(tc, 0.05, 100.0, omega=2.0) == 9)
    checks.append(iteration_bound_w(tc, 0.05, 100.0, omega=2.0) == 6)
    eo, ea = derive_tolerances(-0.5, 1.1, 0.01)
    checks.append(close(eo, 0.5 * 0.01 / 1.1) and round(eo, 6) == 4.545e-3)
    checks.append(close(ea, 0.1 * 0.5 * 0.01 / (2 * 1.21 * 2.1)) and round(ea, 8) == 9.839e-5)
    checks.append(outer_iteration_bound(0.5, 1.25, 0.01) == 36)
    return all(checks), f"{sum(checks)}/{len(checks)} formula checks", {}


@_timed(12, "LIBSVM parser")
def criterion_parser(seed=0):
    rng = np.random.default_rng(seed)
    lines = []
    for _ in range(100):
        k = int(rng.integers(0, 8))
        idx = np.sort(rng.choice(np.arange(1, 51), size=k, replace=False))
        vals = rng.normal(size=k)
        lines.append(" ".join([str(int(rng.integers(1, 5)))] + [f"{i}:{float(v)!r}" for i, v in zip(idx, vals)]))
    first = sio.parse_libsvm("\n".join(lines) + "\n")
    second = sio.parse_libsvm(sio.serialize_libsvm(first), first.feature_dim)
    same = (np.array_equal(first.data, second.data) and np.array_equal(first.indices, second.indices)
            and np.array_equal(first.indptr, second.indptr) and np.array_equal(first.labels, second.labels)
            and first.label_map == second.label_map)
    line_nos = []
    for bad in ("1 1:0.5\n2 3:x\n", "1 1:1\n\n1 4:1 2:1\n", "1 1:1\n2 3\n"):
        try:
            sio.parse_libsvm(bad)
        except sio.LibsvmParseError as exc:
            line_nos.append(exc.line_no)
    ok = same and line_nos == [2, 3, 2]
    return ok, f"round trip identical {same}, error line numbers {line_nos}", {}


QUICK = (criterion_prox, criterion_formulas, criterion_parser, criterion_fairness_init,
         criterion_level_function, criterion_sandwich)
FULL = (criterion_level_function, criterion_prox, criterion_sandwich, criterion_rate,
        criterion_sfls_zero_noise, criterion_feasible_path, criterion_bound_estimator,
        criterion_np_comparison, criterion_fairness_init, criterion_alp, criterion_formulas,
        criterion_parser)


def run_suite(level="quick", entropy_floor=ENTROPY_FLOOR, report=print):
    checks = QUICK if level == "quick" else FULL
    results = []
    for check in checks:
        kw = {"entropy_floor": entropy_floor} if check is criterion_prox else {}
        res = check(**kw)
        report(res.line())
        results.append(res)
    return results
