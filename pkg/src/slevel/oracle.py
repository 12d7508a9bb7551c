"""Stochastic oracles for ``H(r)``: plain SMD and OVSMD with online bounds.

Both oracles run stochastic mirror descent on the saddle function over
``X x simplex`` from the minimizer of ``omega_z`` with step ``1/(c sqrt(t+1))``.
OVSMD also keeps two step-weighted affine forms whose extrema give a
computable upper bound ``u_hat`` and lower bound ``l_hat`` on ``H(r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import GeometrySpec, prox_product
from .soec import Exact, SaddleFunction, UnsupportedModeError, evaluate_p, sample_saddle_subgradient

DOMAIN_TOL = 1e-6


class OracleError(RuntimeError):
    """An oracle run hit a non-finite iterate or left the feasible set."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class OracleConfig:
    """Settings for a single oracle call.

    Parameters
    ----------
    iterations : int
        Number of mirror-descent steps ``T``.
    step_constant : float
        ``c`` in ``gamma_t = 1 / (c sqrt(t + 1))``.
    batch_size : int
        Scenarios per component stream per step.
    delta : float
        Failure probability attached to the call (bookkeeping only).
    seed : int
        Seed for the scenario streams.
    """

    iterations: int = 1000
    step_constant: float = 1.0
    batch_size: int = 1
    delta: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not self.step_constant > 0:
            raise ValueError("step constant must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


def step_size(t, c):
    return 1.0 / (c * math.sqrt(t + 1.0))


class BoundAccumulators:
    """Step-weighted affine forms behind ``u_hat`` and ``l_hat``.

    Upper form over ``y``: ``upper_const + upper_lin @ y``.
    Lower form over ``x``: ``lower_const + lower_lin @ x``.
    Both are sums of ``gamma_s``-weighted first-order models of the sampled
    saddle function, so the bounds are their extrema divided by ``sum gamma``.
    """

    def __init__(self, dimension, num_constraints):
        self.weight = 0.0
        self.upper_const = 0.0
        self.upper_lin = np.zeros(num_constraints + 1)
        self.lower_const = 0.0
        self.lower_lin = np.zeros(dimension)

    def accumulate(self, gamma, phi, grad_x, grad_y, x, y):
        self.weight += gamma
        self.upper_const += gamma * (phi - float(grad_y @ y))
        self.upper_lin += gamma * grad_y
        self.lower_const += gamma * (phi - float(grad_x @ x))
        self.lower_lin += gamma * grad_x
        return self

    def finalize_upper(self):
        if self.weight <= 0:
            raise ValueError("no steps accumulated")
        return (self.upper_const + float(self.upper_lin.max())) / self.weight

    def finalize_lower(self, domain):
        if self.weight <= 0:
            raise ValueError("no steps accumulated")
        try:
            lin_min = domain.linear_min(self.lower_lin)
        except NotImplementedError:
            raise UnsupportedModeError(f"no linear minimization for {type(domain).__name__}") from None
        return (self.lower_const + lin_min) / self.weight


@dataclass
class OracleReport:
    upper: float
    lower: Optional[float]
    x_bar: np.ndarray
    y_bar: np.ndarray
    iterations: int
    consumed: int
    history: Optional[dict] = field(default=None, repr=False)


def _mirror_descent(sf, geometry, config, bounds, record_history, stop_gap=None, min_iterations=1):
    problem = sf.problem
    domain = geometry.domain
    x, y = geometry.initial_point()
    rngs = problem.make_streams(config.seed)
    x_sum = np.zeros_like(x)
    y_sum = np.zeros_like(y)
    w = 0.0
    consumed = 0
    hist = {"upper": [], "lower": [], "p_bar": []} if record_history else None
    for t in range(config.iterations):
        s = sample_saddle_subgradient(sf, x, y, config.batch_size, rngs)
        consumed += s.consumed
        gamma = step_size(t, config.step_constant)
        w += gamma
        x_sum += gamma * x
        y_sum += gamma * y
        if bounds is not None:
            bounds.accumulate(gamma, s.value, s.grad_x, s.grad_y, x, y)
        if hist is not None:
            xb = x_sum / w
            hist["upper"].append(bounds.finalize_upper() if bounds else math.nan)
            hist["lower"].append(bounds.finalize_lower(domain) if bounds else math.nan)
            hist["p_bar"].append(float(evaluate_p(problem, sf.r, xb)) if problem.has_exact else math.nan)
        if (stop_gap is not None and t + 1 >= min_iterations
                and bounds.finalize_upper() - bounds.finalize_lower(domain) <= stop_gap):
            break
        # min over x, max over y: descend in x, ascend in y
        x, y = prox_product(geometry, x, y, gamma * s.grad_x, -gamma * s.grad_y)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise OracleError("non-finite iterate", t)
        if np.linalg.norm(domain.project(x) - x) > DOMAIN_TOL or abs(y.sum() - 1.0) > DOMAIN_TOL:
            raise OracleError("iterate left X x simplex", t)
    x_bar = domain.project(x_sum / w)
    y_bar = y_sum / y_sum.sum()
    if hist is not None:
        hist = {k: np.asarray(v) for k, v in hist.items()}
    return x_bar, y_bar, consumed, hist, t + 1


def run_ovsmd(sf: SaddleFunction, geometry: GeometrySpec, config: OracleConfig,
              record_history=False, stop_gap=None, min_iterations=1) -> OracleReport:
    """Run OVSMD for ``config.iterations`` steps.

    Returns the online upper bound ``u_hat`` (a max of an affine form over the
    simplex), the lower bound ``l_hat`` (a min of an affine form over ``X``),
    and the step-weighted averages ``x_bar`` and ``y_bar``. With
    ``record_history`` the per-step bounds and ``P(r, x_bar_t)`` are kept.

    With ``stop_gap`` the run ends at the first step ``t >= min_iterations``
    whose certificate ``u_hat - l_hat`` is at most ``stop_gap``;
    ``config.iterations`` is then a cap. The step sizes do not depend on the
    horizon, so this equals the fixed-horizon run truncated at that step.
    """
    acc = BoundAccumulators(sf.problem.dimension, sf.problem.num_constraints)
    x_bar, y_bar, consumed, hist, steps = _mirror_descent(
        sf, geometry, config, acc, record_history, stop_gap, min_iterations)
    return OracleReport(acc.finalize_upper(), acc.finalize_lower(geometry.domain), x_bar, y_bar,
                        steps, consumed, hist)


def run_smd(sf: SaddleFunction, geometry: GeometrySpec, config: OracleConfig,
            record_history=False) -> OracleReport:
    """Plain SMD; the returned value is the exact ``P(r, x_bar)``.

    Needs an exact evaluator, so it is a reference oracle for small problems.
    """
    if not sf.problem.has_exact:
        raise UnsupportedModeError(f"{sf.problem.name} has no exact evaluator")
    x_bar, y_bar, consumed, hist, steps = _mirror_descent(sf, geometry, config, None, record_history)
    u = float(evaluate_p(sf.problem, sf.r, x_bar, Exact()))
    return OracleReport(u, None, x_bar, y_bar, steps, consumed, hist)
