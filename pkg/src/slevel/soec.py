"""Expectation-constrained convex programs and their level-set / saddle views.

A problem is ``min f_0(x)`` subject to ``f_i(x) <= r_i`` for ``i = 1..m`` over a
closed convex set ``X``, where every ``f_i(x) = E[F_i(x, xi_i)]``. Each component
``i`` is a :class:`Component` that can draw scenarios and return batch means of
``F_i`` and of one subgradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from . import _kernels

KAHAN_THRESHOLD = 10_000
DEFAULT_SAA_SAMPLES = 10_000


class UnsupportedModeError(ValueError):
    """Raised when an evaluation mode needs something the problem lacks."""


class NonFiniteSampleError(FloatingPointError):
    def __init__(self, component, what="value"):
        super().__init__(f"non-finite sampled {what} for component {component}")
        self.component = component


def batch_mean(a):
    """Mean over axis 0; compensated sequential sum for batches above 10^4 rows."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] > KAHAN_THRESHOLD:
        return _kernels.kahan_mean(a)
    return a.mean(axis=0)


# ---------------------------------------------------------------------------
# Domains


class DomainSpec:
    """A closed convex set supporting projection and linear minimization."""

    dimension: int

    def project(self, point):
        raise NotImplementedError

    def contains(self, point, tol=1e-9):
        point = np.asarray(point, dtype=np.float64)
        return bool(np.linalg.norm(self.project(point) - point) <= tol)

    def contains_many(self, points, tol=1e-9):
        return np.array([self.contains(p, tol) for p in points], dtype=bool)

    def linear_min(self, a):
        """Return ``min_{x in X} a^T x``."""
        raise NotImplementedError

    def half_sq_norm_range(self):
        """Return ``(min, max)`` of ``0.5 * ||x||^2`` over the set."""
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(DomainSpec):
    radius: float
    center: np.ndarray

    def __init__(self, radius, center=None, dimension=None):
        if not radius > 0:
            raise ValueError(f"ball radius must be positive, got {radius}")
        if center is None:
            if dimension is None:
                raise ValueError("ball needs a center or a dimension")
            center = np.zeros(dimension)
        center = np.array(center, dtype=np.float64).ravel()
        center.setflags(write=False)
        object.__setattr__(self, "radius", float(radius))
        object.__setattr__(self, "center", center)

    @property
    def dimension(self):
        return self.center.shape[0]

    def project(self, point):
        d = np.asarray(point, dtype=np.float64) - self.center
        n = np.linalg.norm(d)
        if n <= self.radius:
            return self.center + d
        return self.center + d * (self.radius / n)

    def contains_many(self, points, tol=1e-9):
        return np.linalg.norm(np.asarray(points) - self.center, axis=1) <= self.radius + tol

    def linear_min(self, a):
        return float(a @ self.center - self.radius * np.linalg.norm(a))

    def half_sq_norm_range(self):
        c = np.linalg.norm(self.center)
        lo = max(c - self.radius, 0.0)
        return 0.5 * lo * lo, 0.5 * (c + self.radius) ** 2

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius


@dataclass(frozen=True)
class Box(DomainSpec):
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lower = np.array(lower, dtype=np.float64).ravel()
        upper = np.array(upper, dtype=np.float64).ravel()
        if lower.shape != upper.shape:
            raise ValueError("box bounds have different lengths")
        if np.any(lower > upper):
            raise ValueError("box lower bound exceeds upper bound")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dimension(self):
        return self.lower.shape[0]

    def project(self, point):
        return np.clip(np.asarray(point, dtype=np.float64), self.lower, self.upper)

    def contains_many(self, points, tol=1e-9):
        points = np.asarray(points)
        return np.all((points >= self.lower - tol) & (points <= self.upper + tol), axis=1)

    def linear_min(self, a):
        return float(np.where(a > 0, self.lower, self.upper) @ a)

    def half_sq_norm_range(self):
        hi = 0.5 * np.sum(np.maximum(self.lower**2, self.upper**2))
        lo = 0.5 * np.sum(np.clip(0.0, self.lower, self.upper) ** 2)
        return float(lo), float(hi)

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()


@dataclass(frozen=True)
class Product(DomainSpec):
    """Cartesian product; block ``k`` owns the next ``blocks[k].dimension`` coordinates."""

    blocks: tuple

    def __init__(self, blocks):
        blocks = tuple(blocks)
        if not blocks:
            raise ValueError("product of zero blocks")
        object.__setattr__(self, "blocks", blocks)
        bounds = np.cumsum([0] + [b.dimension for b in blocks])
        object.__setattr__(self, "_bounds", bounds)

    @property
    def dimension(self):
        return int(self._bounds[-1])

    def slices(self):
        return [slice(int(a), int(b)) for a, b in zip(self._bounds[:-1], self._bounds[1:])]

    def project(self, point):
        point = np.asarray(point, dtype=np.float64)
        return np.concatenate([b.project(point[s]) for b, s in zip(self.blocks, self.slices())])

    def contains_many(self, points, tol=1e-9):
        points = np.asarray(points)
        keep = np.ones(points.shape[0], dtype=bool)
        for b, s in zip(self.blocks, self.slices()):
            keep &= b.contains_many(points[:, s], tol)
        return keep

    def linear_min(self, a):
        return float(sum(b.linear_min(a[s]) for b, s in zip(self.blocks, self.slices())))

    def half_sq_norm_range(self):
        parts = [b.half_sq_norm_range() for b in self.blocks]
        return sum(p[0] for p in parts), sum(p[1] for p in parts)

    def bounding_box(self):
        boxes = [b.bounding_box() for b in self.blocks]
        return np.concatenate([b[0] for b in boxes]), np.concatenate([b[1] for b in boxes])


# ---------------------------------------------------------------------------
# Problems


class Component:
    """One expectation ``f_i(x) = E[F_i(x, xi_i)]``.

    Subclasses implement :meth:`draw` and :meth:`evaluate`. Finite-sum components
    also set ``support_size`` and let :meth:`exact` evaluate the full support.
    """

    rows_per_draw = 1
    support_size: Optional[int] = None

    def draw(self, rng, n):
        raise NotImplementedError

    def evaluate(self, x, scenarios):
        """Return ``(batch-mean F_i, batch-mean subgradient)`` over ``scenarios``."""
        raise NotImplementedError

    def support(self):
        raise UnsupportedModeError("component has no finite support")

    @property
    def has_exact(self):
        return self.support_size is not None

    def exact(self, x):
        return self.evaluate(x, self.support())


class SoecProblem:
    """An expectation-constrained program built from components ``f_0 .. f_m``.

    Parameters
    ----------
    components : sequence of Component
        Objective first, then the ``m`` constraints.
    thresholds : array_like
        Right-hand sides ``r_1 .. r_m``.
    domain : DomainSpec
    dataset_size : int, optional
        Number of data rows that make up one data pass. Defaults to ``m + 1``,
        i.e. one scenario per component stream.
    objective_sign : {1, -1}
        ``-1`` marks a maximization problem stored as ``min -f``; reported
        objectives are multiplied by this sign.
    initial_point : array_like, optional
        A known feasible point.
    """

    def __init__(self, components, thresholds, domain, *, name="soec", dataset_size=None,
                 objective_sign=1, initial_point=None, eval_seed=20_240_101, metadata=None):
        self.components = list(components)
        self.thresholds = np.asarray(thresholds, dtype=np.float64).ravel()
        if len(self.components) != self.thresholds.shape[0] + 1:
            raise ValueError("need one component per constraint plus the objective")
        self.domain = domain
        self.name = name
        self.dataset_size = dataset_size if dataset_size is not None else len(self.components)
        self.objective_sign = objective_sign
        self.initial_point = None if initial_point is None else np.asarray(initial_point, dtype=np.float64)
        self.eval_seed = eval_seed
        self.metadata = dict(metadata or {})

    @property
    def dimension(self):
        return self.domain.dimension

    @property
    def num_constraints(self):
        return self.thresholds.shape[0]

    @property
    def num_streams(self):
        return len(self.components)

    @property
    def has_exact(self):
        return all(c.has_exact for c in self.components)

    def make_streams(self, seed):
        """One independent generator per scenario stream."""
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        return [np.random.default_rng(child) for child in ss.spawn(self.num_streams)]

    def sample(self, x, rngs, batch_size):
        """Batch-mean values ``(m+1,)``, subgradients ``(m+1, d)`` and rows consumed."""
        values = np.empty(len(self.components))
        grads = np.empty((len(self.components), self.dimension))
        consumed = 0
        for i, (comp, rng) in enumerate(zip(self.components, rngs)):
            scen = comp.draw(rng, batch_size)
            values[i], grads[i] = comp.evaluate(x, scen)
            consumed += batch_size * comp.rows_per_draw
        _check_finite(values, grads)
        return values, grads, consumed

    def exact_oracle(self, x):
        if not self.has_exact:
            raise UnsupportedModeError(f"{self.name} has no exact evaluator")
        values = np.empty(len(self.components))
        grads = np.empty((len(self.components), self.dimension))
        for i, comp in enumerate(self.components):
            values[i], grads[i] = comp.exact(x)
        return values, grads

    def exact_values(self, x):
        return self.exact_oracle(x)[0]

    def exact_values_many(self, points):
        return np.array([self.exact_values(p) for p in np.atleast_2d(points)])

    def saa_values(self, x, count, seed):
        """Sample-average values of all components from an evaluation-only stream."""
        rngs = self.make_streams(seed)
        out = np.empty(len(self.components))
        for i, (comp, rng) in enumerate(zip(self.components, rngs)):
            out[i] = comp.evaluate(x, comp.draw(rng, count))[0]
        return out

    def full_pass_rows(self):
        """Rows touched by one exact evaluation of every component."""
        return self.dataset_size


def _check_finite(values, grads):
    if not np.all(np.isfinite(values)):
        raise NonFiniteSampleError(int(np.flatnonzero(~np.isfinite(values))[0]))
    if not np.all(np.isfinite(grads)):
        bad = np.flatnonzero(~np.all(np.isfinite(grads), axis=1))[0]
        raise NonFiniteSampleError(int(bad), "subgradient")


# ---------------------------------------------------------------------------
# Saddle view


@dataclass(frozen=True)
class SaddleFunction:
    """``Phi(x, y, xi) = sum_i y_i (F_i(x, xi_i) - r_i)`` with ``r_0 = r``."""

    problem: SoecProblem
    r: float

    @property
    def shifts(self):
        return np.concatenate(([self.r], self.problem.thresholds))

    def phi_exact(self, x, y):
        return float(np.asarray(y) @ (self.problem.exact_values(x) - self.shifts))


@dataclass
class SaddleSample:
    value: float
    grad_x: np.ndarray
    grad_y: np.ndarray
    consumed: int


def sample_saddle_subgradient(sf, x, y, batch_size, rngs):
    """Stochastic subgradient of the saddle function at ``(x, y)``.

    ``grad_y[i]`` is the batch mean of ``F_i - r_i``; ``grad_x`` weights the
    component subgradients by ``y``; the value is ``y @ grad_y``.
    """
    if batch_size < 1:
        raise ValueError("batch size must be at least 1")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not sf.problem.domain.contains(x, 1e-9):
        raise ValueError("x lies outside the domain")
    if np.any(y < -1e-12) or abs(y.sum() - 1.0) > 1e-12:
        raise ValueError("y is not on the simplex")
    values, grads, consumed = sf.problem.sample(x, rngs, batch_size)
    grad_y = values - sf.shifts
    return SaddleSample(float(y @ grad_y), y @ grads, grad_y, consumed)


# ---------------------------------------------------------------------------
# Level-set function


@dataclass(frozen=True)
class Exact:
    pass


@dataclass(frozen=True)
class Saa:
    count: int = DEFAULT_SAA_SAMPLES
    seed: Optional[int] = None


class Measured(float):
    """A float that remembers how many scenarios produced it (``None`` = exact)."""

    sample_count: Optional[int]

    def __new__(cls, value, sample_count=None):
        obj = super().__new__(cls, value)
        obj.sample_count = sample_count
        return obj


def component_values(problem, x, mode=Exact()):
    if isinstance(mode, Exact):
        if not problem.has_exact:
            raise UnsupportedModeError(f"{problem.name} has no exact evaluator")
        return problem.exact_values(x), None
    seed = problem.eval_seed if mode.seed is None else mode.seed
    return problem.saa_values(x, mode.count, seed), mode.count


def level_value(values, r, thresholds):
    return float(max(values[0] - r, np.max(values[1:] - thresholds, initial=-np.inf)))


def evaluate_p(problem, r, x, mode=Exact()):
    """``P(r, x) = max{f_0(x) - r, f_i(x) - r_i}``."""
    values, count = component_values(problem, x, mode)
    return Measured(level_value(values, r, problem.thresholds), count)


class GridLevelOracle:
    """Brute-force ``H(r) = min_x P(r, x)`` for problems with ``d <= 3``.

    Component values are computed once on a regular grid over the bounding box
    (points outside the domain are dropped), so each ``H(r)`` costs one vectorized
    reduction plus a bounded scalar search along each axis from the best grid
    point. Accuracy is on the order of the grid spacing.
    """

    def __init__(self, problem, resolution=201):
        if problem.dimension > 3:
            raise UnsupportedModeError("grid oracle supports d <= 3")
        if not problem.has_exact:
            raise UnsupportedModeError("grid oracle needs an exact evaluator")
        if resolution < 101:
            raise ValueError("grid resolution must be at least 101 per axis")
        self.problem = problem
        lo, hi = problem.domain.bounding_box()
        axes = [np.linspace(a, b, resolution) if b > a else np.array([a]) for a, b in zip(lo, hi)]
        self.spacing = np.array([(b - a) / (resolution - 1) for a, b in zip(lo, hi)])
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        mesh = mesh[problem.domain.contains_many(mesh, 1e-12)]
        self.points = mesh
        vals = problem.exact_values_many(mesh)
        self.objective = vals[:, 0]
        if vals.shape[1] > 1:
            self.constraint_max = np.max(vals[:, 1:] - problem.thresholds, axis=1)
        else:
            self.constraint_max = np.full(len(mesh), -np.inf)
        self.lo, self.hi = lo, hi

    def _p(self, r, x):
        if not self.problem.domain.contains(x, 1e-12):
            return math.inf
        return level_value(self.problem.exact_values(x), r, self.problem.thresholds)

    def minimize(self, r):
        """Return ``(H(r), argmin)``."""
        grid_p = np.maximum(self.objective - r, self.constraint_max)
        k = int(np.argmin(grid_p))
        best_x = self.points[k].copy()
        best = float(grid_p[k])
        for axis in range(best_x.shape[0]):
            h = self.spacing[axis]
            if h == 0:
                continue
            a = max(best_x[axis] - h, self.lo[axis])
            b = min(best_x[axis] + h, self.hi[axis])

            def along(t, axis=axis, base=best_x.copy()):
                base[axis] = t
                return self._p(r, base)

            res = optimize.minimize_scalar(along, bounds=(a, b), method="bounded",
                                           options={"xatol": 1e-10})
            if res.fun < best:
                best = float(res.fun)
                best_x[axis] = res.x
        return best, best_x

    def __call__(self, r):
        return self.minimize(r)[0]


def evaluate_h_grid(problem, r, grid_resolution=201):
    return GridLevelOracle(problem, grid_resolution)(r)


# ---------------------------------------------------------------------------
# Quality metrics


@dataclass
class QualityMetrics:
    objective_value: float
    max_violation: float
    relative_gap: Optional[float] = None
    data_passes: float = 0.0
    sample_count: Optional[int] = None


def compute_metrics(problem, x, reference_f_star=None, reference_x0=None, data_passes=0.0,
                    saa=None):
    """Objective, worst constraint violation and optional relative gap at ``x``.

    Uses the exact evaluator when available, otherwise an SAA with
    ``saa.count`` scenarios (default 10,000) from the problem's evaluation seed.
    ``reference_f_star`` is in reported (sign-adjusted) units.
    """
    mode = Exact() if problem.has_exact and saa is None else (saa or Saa())
    values, count = component_values(problem, x, mode)
    objective = problem.objective_sign * float(values[0])
    violation = float(np.max(values[1:] - problem.thresholds, initial=-np.inf))
    gap = None
    if reference_f_star is not None and reference_x0 is not None:
        v0, _ = component_values(problem, reference_x0, mode)
        obj0 = problem.objective_sign * float(v0[0])
        gap = (objective - reference_f_star) / (obj0 - reference_f_star)
    return QualityMetrics(objective, violation, gap, float(data_passes), count)
