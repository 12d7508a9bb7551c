"""Mirror-descent geometry: Euclidean primal, entropic dual, product-space prox.

The primal uses ``omega_x(x) = ||x||^2 / 2`` (modulus 1 in the 2-norm) and the
dual simplex uses negative entropy (modulus 1 in the 1-norm). On the product
space the two are weighted by ``1 / (2 D^2)`` so that ``omega_z`` has unit
range, which makes the joint prox split into a scaled primal projection and a
scaled multiplicative-weights step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .soec import DomainSpec

ENTROPY_FLOOR = 1e-12


def project_primal(domain: DomainSpec, point) -> np.ndarray:
    """Euclidean projection onto the domain."""
    return domain.project(point)


def prox_entropy_simplex(y, step, floor=ENTROPY_FLOOR):
    """Entropic prox: ``argmin_u step^T (u - y) + KL(u || y)`` over the simplex.

    The closed form is ``u ~ y * exp(-step)``. Exponents are shifted by their
    max before exponentiating; components are floored and renormalized so the
    result stays strictly inside the simplex.
    """
    y = np.asarray(y, dtype=np.float64)
    logits = np.log(y) - np.asarray(step, dtype=np.float64)
    logits -= logits.max()
    u = np.exp(logits)
    u /= u.sum()
    if floor > 0 and u.min() < floor:
        u = np.maximum(u, floor)
        u /= u.sum()
    return u


def diameters(domain: DomainSpec, m: int):
    """``(D_x, D_y)`` for the Euclidean primal and the ``(m+1)``-simplex."""
    lo, hi = domain.half_sq_norm_range()
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("domain is unbounded")
    return math.sqrt(max(hi - lo, 0.0)), math.sqrt(math.log(m + 1))


@dataclass(frozen=True)
class GeometrySpec:
    """Distance-generating setup for ``Z = X x simplex``.

    ``dx`` and ``dy`` default to the true diameters of the domain and of the
    ``(m+1)``-simplex but may be given explicitly.
    """

    domain: DomainSpec
    num_constraints: int
    dx: float = None
    dy: float = None
    entropy_floor: float = ENTROPY_FLOOR

    def __post_init__(self):
        if self.dx is None or self.dy is None:
            dx, dy = diameters(self.domain, self.num_constraints)
            if self.dx is None:
                object.__setattr__(self, "dx", dx)
            if self.dy is None:
                object.__setattr__(self, "dy", dy)

    @classmethod
    def for_problem(cls, problem, **kw):
        return cls(problem.domain, problem.num_constraints, **kw)

    def initial_point(self):
        """``argmin omega_z``: projection of the origin and the uniform simplex point."""
        x0 = self.domain.project(np.zeros(self.domain.dimension))
        m1 = self.num_constraints + 1
        return x0, np.full(m1, 1.0 / m1)

    def omega_z(self, x, y):
        y = np.asarray(y, dtype=np.float64)
        ent = float(np.sum(np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0)), 0.0)))
        return 0.5 * float(np.dot(x, x)) / (2 * self.dx**2) + ent / (2 * self.dy**2)


def prox_product(geometry: GeometrySpec, x, y, zeta_x, zeta_y):
    """Joint prox on ``Z``; splits into per-space steps scaled by ``2 D^2``."""
    x_new = geometry.domain.project(np.asarray(x) - 2 * geometry.dx**2 * np.asarray(zeta_x))
    y_new = prox_entropy_simplex(y, 2 * geometry.dy**2 * np.asarray(zeta_y), geometry.entropy_floor)
    return x_new, y_new


def bregman_euclidean(center, point):
    d = np.asarray(point, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    return 0.5 * float(d @ d)


def bregman_entropy(center, point):
    """``V(center, point) = sum point * log(point / center)`` on the simplex."""
    center = np.asarray(center, dtype=np.float64)
    point = np.asarray(point, dtype=np.float64)
    if np.any(center <= 0):
        raise ValueError("entropy divergence needs a strictly positive center")
    mask = point > 0
    return float(np.sum(point[mask] * np.log(point[mask] / center[mask])))


def bregman(kind, center, point):
    if kind == "euclidean":
        return bregman_euclidean(center, point)
    if kind == "entropy":
        return bregman_entropy(center, point)
    raise ValueError(f"unknown distance-generating function {kind!r}")


# ---------------------------------------------------------------------------
# Theory constants


def compute_omega(delta):
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    ell = math.log(24.0 / delta)
    return max(math.sqrt(12.0 * ell), 4.0 * ell / 3.0)


@dataclass(frozen=True)
class TheoryConstants:
    mx: float
    my: float
    q: float
    dx: float
    dy: float
    alpha_x: float = 1.0
    alpha_y: float = 1.0

    @property
    def m(self):
        return math.sqrt(2 * self.dx**2 / self.alpha_x * self.mx**2
                         + 2 * self.dy**2 / self.alpha_y * self.my**2)


def _bound(scale_hi, scale_lo, eps):
    inner = (scale_hi / eps) * math.log(scale_lo / eps)
    return math.ceil(max(6.0, inner * inner - 2.0))


def iteration_bound_t(constants, delta, eps, omega=None):
    """OVSMD iteration count that certifies accuracy ``eps`` w.p. ``1 - delta``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    om = compute_omega(delta) if omega is None else omega
    m = constants.m
    a = constants.q * om + 10 * m * om + 4.5 * m
    return _bound(16 * a, 8 * a, eps)


def iteration_bound_w(constants, delta, eps, omega=None):
    """Same as :func:`iteration_bound_t` for plain SMD (no validation term)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    om = compute_omega(delta) if omega is None else omega
    m = constants.m
    a = 10 * m * om + 4.5 * m
    return _bound(8 * a, 4 * a, eps)


def estimate_constants(sf, geometry, seed=0, probes=200, batch_size=1, inflate=1.2):
    """Probe-based estimates of the light-tail scales at the initial point.

    Each scale is ``inflate`` times the largest sampled norm over ``probes``
    draws: ``||G_x||_2`` for ``mx``, ``||G_y||_inf`` for ``my`` and the spread
    of ``Phi`` around its probe mean for ``q``.
    """
    x0, y0 = geometry.initial_point()
    rngs = sf.problem.make_streams(seed)
    shifts = sf.shifts
    gx_norms, gy_norms, phis = [], [], []
    for _ in range(probes):
        values, grads, _ = sf.problem.sample(x0, rngs, batch_size)
        gy = values - shifts
        gx_norms.append(np.linalg.norm(y0 @ grads))
        gy_norms.append(np.max(np.abs(gy)))
        phis.append(y0 @ gy)
    phis = np.asarray(phis)
    q = float(np.max(np.abs(phis - phis.mean())))
    tiny = 1e-12
    return TheoryConstants(
        mx=inflate * max(max(gx_norms), tiny),
        my=inflate * max(max(gy_norms), tiny),
        q=inflate * max(q, tiny),
        dx=geometry.dx,
        dy=geometry.dy,
    )
