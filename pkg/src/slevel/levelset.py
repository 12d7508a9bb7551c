"""Level-set outer loops (stochastic and deterministic) and their diagnostics."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import optimize

from .geometry import GeometrySpec
from .oracle import OracleConfig, OracleError, run_ovsmd
from .soec import GridLevelOracle, QualityMetrics, SaddleFunction, UnsupportedModeError, compute_metrics

POSITIVE_STREAK = 3


class LevelSetError(RuntimeError):
    def __init__(self, outer_iter, cause):
        super().__init__(f"oracle failed at outer iteration {outer_iter}: {cause}")
        self.outer_iter = outer_iter


class LevelNotAboveOptimumError(RuntimeError):
    """The bound estimator could not certify ``H(r0) < 0``; ``r0`` is likely at or below ``f*``."""


# ---------------------------------------------------------------------------
# Small formulas


def delta_at_iteration(delta, k, offset=1):
    return delta / 2.0 ** (k + offset)


def level_update(r, u_hat, theta):
    if not theta > 1:
        raise ValueError("theta must exceed 1")
    return r + u_hat / (2.0 * theta)


def derive_tolerances(u_bar, theta, epsilon):
    """``(eps_opt, eps_a)`` from a certified upper bound ``u_bar < 0`` on ``H(r0)``."""
    if not u_bar < 0:
        raise ValueError("u_bar must be negative; rerun the bound estimator")
    if not theta > 1:
        raise ValueError("theta must exceed 1")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    eps_opt = -u_bar * epsilon / theta
    eps_a = -(theta - 1.0) * u_bar * epsilon / (2.0 * theta**2 * (theta + 1.0))
    return eps_opt, eps_a


def outer_iteration_bound(beta, theta, epsilon):
    """Oracle calls needed for a relative ``epsilon``-optimal solution at condition ``beta``."""
    return math.ceil(2.0 * theta**2 / beta * math.log(theta**2 / (beta * epsilon)))


# ---------------------------------------------------------------------------
# Traces


@dataclass
class LevelRecord:
    outer_iter: int
    r: float
    u_hat: float
    l_hat: Optional[float]
    x: np.ndarray
    delta: float
    metrics: QualityMetrics
    grad_iters: int
    data_passes: float
    wall_ms: float


@dataclass
class LevelTrace:
    records: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    halted: bool = False
    solver: str = "sfls"

    def __len__(self):
        return len(self.records)

    @property
    def final(self):
        return self.records[-1]

    def feasible_path(self, tol=0.0):
        return all(rec.metrics.max_violation <= tol for rec in self.records)


@dataclass(frozen=True)
class SflsConfig:
    """Outer-loop settings.

    ``eps_opt = None`` runs the fixed budget of ``outer_limit`` oracle calls.
    ``max_data_passes`` stops before an oracle call that would exceed it.
    """

    r0: float
    theta: float = 1.1
    outer_limit: int = 20
    oracle: OracleConfig = OracleConfig()
    delta: float = 0.1
    eps_opt: Optional[float] = None
    delta_offset: int = 1
    max_data_passes: float = math.inf
    reference_f_star: Optional[float] = None
    reference_x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.theta > 1:
            raise ValueError("theta must exceed 1")
        if not math.isfinite(self.r0):
            raise ValueError("r0 must be finite")
        if self.outer_limit < 1:
            raise ValueError("outer limit must be at least 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


def _reference_x0(problem, x0):
    if x0 is not None:
        return x0
    return problem.initial_point


def _snapshot(problem, x, config, passes):
    return compute_metrics(problem, x, config.reference_f_star,
                           _reference_x0(problem, config.reference_x0), passes)


def _per_call_passes(problem, oc):
    rows = sum(c.rows_per_draw for c in problem.components)
    return oc.iterations * oc.batch_size * rows / problem.dataset_size


def sfls_solve(problem, geometry: GeometrySpec, config: SflsConfig, oracle=run_ovsmd) -> LevelTrace:
    """Stochastic feasible level-set method.

    Each outer step calls the oracle at ``r_k`` with failure probability
    ``delta / 2^(k+1)`` and a fresh seed, records ``x_k`` with its metrics,
    then halts if ``u_hat >= -eps_opt`` or moves to ``r_k + u_hat / (2 theta)``.
    """
    trace = LevelTrace(solver="sfls")
    r = float(config.r0)
    grad_iters = 0
    consumed = 0
    streak = 0
    est = _per_call_passes(problem, config.oracle)
    start = time.perf_counter()
    for k in range(config.outer_limit):
        passes = consumed / problem.dataset_size
        if passes + est > config.max_data_passes + 1e-9:
            break
        dk = delta_at_iteration(config.delta, k, config.delta_offset)
        oc = replace(config.oracle, delta=dk, seed=[int(np.asarray(config.oracle.seed).ravel()[0]), k])
        try:
            rep = oracle(SaddleFunction(problem, r), geometry, oc)
        except (OracleError, FloatingPointError) as exc:
            raise LevelSetError(k, exc) from exc
        grad_iters += rep.iterations
        consumed += rep.consumed
        passes = consumed / problem.dataset_size
        metrics = _snapshot(problem, rep.x_bar, config, passes)
        trace.records.append(LevelRecord(k, r, float(rep.upper), rep.lower, rep.x_bar, dk, metrics,
                                         grad_iters, passes, (time.perf_counter() - start) * 1e3))
        streak = streak + 1 if rep.upper > 0 else 0
        if streak == POSITIVE_STREAK:
            trace.warnings.append(f"u_hat > 0 for {streak} consecutive outer iterations "
                                  f"(through k={k}): r likely below f*")
        if config.eps_opt is not None and rep.upper >= -config.eps_opt:
            trace.halted = True
            break
        r = level_update(r, rep.upper, config.theta)
    return trace


# ---------------------------------------------------------------------------
# Initial bound estimation


def bound_is_tight(u_hat, alpha, theta):
    """Stop rule of the bound estimator: ``u_hat + alpha < 0`` and ratio at most ``theta``."""
    return u_hat + alpha < 0 and (u_hat - alpha) / (u_hat + alpha) <= theta


@dataclass
class BoundEstimate:
    u_bar: float
    u_hat: float
    alpha: float
    halvings: int
    iterations: int


def estimate_initial_bound(sf, geometry, base_alpha, delta, theta, oracle_config,
                           max_halvings=40, max_iterations=None) -> BoundEstimate:
    """Certified upper bound ``u_bar`` on ``H(r0)`` with ``|H(r0)| / |u_bar| <= theta``.

    Round ``h`` uses ``alpha_h = base_alpha / 2^h`` and ``delta / 2^(h+1)``;
    the oracle runs from ``oracle_config.iterations`` steps until its own
    certificate gap ``u_hat - l_hat`` drops below ``alpha_h`` (capped at
    ``max_iterations``, default 32 times the base horizon). The loop stops once
    ``u_hat + alpha < 0`` and ``(u_hat - alpha) / (u_hat + alpha) <= theta``.
    """
    if not base_alpha > 0:
        raise ValueError("base alpha must be positive")
    cap = max_iterations or 32 * oracle_config.iterations
    total = 0
    for h in range(max_halvings + 1):
        alpha = base_alpha / 2.0**h
        oc = replace(oracle_config, iterations=cap, delta=delta / 2.0 ** (h + 1),
                     seed=[int(np.asarray(oracle_config.seed).ravel()[0]), 1_000 + h])
        rep = run_ovsmd(sf, geometry, oc, stop_gap=alpha, min_iterations=oracle_config.iterations)
        total += rep.iterations
        u = rep.upper
        if bound_is_tight(u, alpha, theta):
            return BoundEstimate(u + alpha, u, alpha, h, total)
    raise LevelNotAboveOptimumError(
        f"no certified negative bound after {max_halvings} halvings at r0={sf.r}: "
        "the level is not strictly above f*")


# ---------------------------------------------------------------------------
# Deterministic baseline


@dataclass(frozen=True)
class DflsConfig:
    """Deterministic level-set baseline settings.

    Inner loop: ``inner_iterations`` projected subgradient steps on
    ``P(r, .)`` with step ``1 / (c sqrt(t+1))``.
    """

    r0: float
    outer_limit: int = 20
    inner_iterations: int = 100
    step_constant: float = 1.0
    max_data_passes: float = math.inf
    reference_f_star: Optional[float] = None
    reference_x0: Optional[np.ndarray] = None
    warm_start: bool = True


def _subgradient_descent(problem, r, x, iters, c):
    """Projected subgradient on ``P(r, .)``; returns the best iterate and its value."""
    shifts = np.concatenate(([r], problem.thresholds))
    best_x, best_p = x, math.inf
    for t in range(iters):
        values, grads = problem.exact_oracle(x)
        shifted = values - shifts
        i = int(np.argmax(shifted))  # lowest index on ties
        p = float(shifted[i])
        if p < best_p:
            best_x, best_p = x, p
        x = problem.domain.project(x - grads[i] / (c * math.sqrt(t + 1.0)))
    return best_x, best_p


def dfls_solve(problem, config: DflsConfig) -> LevelTrace:
    """Level-set method with full-data subgradients and ``r <- r + P(r, x)/2``.

    Every inner step reads the data twice (value and subgradient), so it is
    charged two passes.
    """
    if not problem.has_exact:
        raise UnsupportedModeError(f"{problem.name} has no exact evaluator")
    trace = LevelTrace(solver="dfls")
    r = float(config.r0)
    x0 = problem.initial_point if problem.initial_point is not None else \
        problem.domain.project(np.zeros(problem.dimension))
    x = x0
    grad_iters = 0
    passes = 0.0
    start = time.perf_counter()
    for k in range(config.outer_limit):
        if passes + 2 * config.inner_iterations > config.max_data_passes + 1e-9:
            break
        start_x = x if config.warm_start else x0
        x, p = _subgradient_descent(problem, r, start_x, config.inner_iterations, config.step_constant)
        grad_iters += config.inner_iterations
        passes += 2.0 * config.inner_iterations
        metrics = compute_metrics(problem, x, config.reference_f_star,
                                  _reference_x0(problem, config.reference_x0), passes)
        trace.records.append(LevelRecord(k, r, p, None, x, 0.0, metrics, grad_iters, passes,
                                         (time.perf_counter() - start) * 1e3))
        r = r + p / 2.0
    return trace


# ---------------------------------------------------------------------------
# Condition diagnostics


@dataclass
class ConditionDiagnostics:
    beta_hat: float
    h_r0: float
    f_star: float
    outer_bound: Optional[int]


def locate_f_star(grid: GridLevelOracle, r0, xtol=1e-10):
    """Root of the grid ``H`` below ``r0`` by bracketing then Brent's method."""
    h0 = grid(r0)
    if not h0 < 0:
        raise ValueError(f"H(r0) = {h0} is not negative; root not bracketed")
    step = max(1.0, abs(r0))
    lo = r0 - step
    for _ in range(60):
        if grid(lo) > 0:
            break
        step *= 2.0
        lo = r0 - step
    else:
        raise ValueError("could not bracket the root of H below r0")
    return optimize.brentq(grid, lo, r0, xtol=xtol)


def condition_diagnostics(problem, r0, theta=None, epsilon=None, grid_resolution=201):
    grid = GridLevelOracle(problem, grid_resolution)
    f_star = locate_f_star(grid, r0)
    h0 = grid(r0)
    beta = -h0 / (r0 - f_star)
    bound = outer_iteration_bound(beta, theta, epsilon) if theta and epsilon else None
    return ConditionDiagnostics(beta, h0, f_star, bound)
