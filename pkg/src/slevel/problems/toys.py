"""Small analytic instances whose ``H(r)`` and ``f*`` are grid-computable."""

import numpy as np

from ..soec import Ball, Box, Component, SoecProblem


class NoisyComponent(Component):
    """``F(x, xi) = f(x) + xi`` with ``xi ~ U(-a, a)``; the subgradient is noise-free."""

    def __init__(self, value, grad, amplitude=0.0):
        if amplitude < 0:
            raise ValueError("noise amplitude must be nonnegative")
        self._value = value
        self._grad = grad
        self.amplitude = float(amplitude)

    @property
    def has_exact(self):
        return True

    def draw(self, rng, n):
        if self.amplitude == 0:
            return np.zeros(n)
        return rng.uniform(-self.amplitude, self.amplitude, size=n)

    def evaluate(self, x, scenarios):
        return self._value(x) + float(np.mean(scenarios)), self._grad(x)

    def exact(self, x):
        return self._value(x), self._grad(x)


class ToyProblem(SoecProblem):
    def __init__(self, *args, values_many, f_star, **kw):
        super().__init__(*args, **kw)
        self._values_many = values_many
        self.f_star = f_star

    def exact_values_many(self, points):
        return self._values_many(np.atleast_2d(np.asarray(points, dtype=np.float64)))


def one_d(noise=0.0):
    """``min x`` s.t. ``1 - x <= 0`` on ``[0, 2]``; ``f* = 1``, ``H(r) = (1 - r)/2`` for ``r <= 3``."""
    f0 = NoisyComponent(lambda x: float(x[0]), lambda x: np.array([1.0]), noise)
    f1 = NoisyComponent(lambda x: 1.0 - float(x[0]), lambda x: np.array([-1.0]), noise)

    def many(p):
        return np.column_stack([p[:, 0], 1.0 - p[:, 0]])

    return ToyProblem([f0, f1], [0.0], Box([0.0], [2.0]), name="toy1d", values_many=many,
                      f_star=1.0, initial_point=[2.0], metadata={"noise": noise})


_C = np.array([1.0, 1.0])


def two_d(noise=0.0):
    """``min 0.5 ||x - (1,1)||^2`` s.t. ``x1 + x2 <= 1`` on the radius-2 ball; ``f* = 0.25``."""
    f0 = NoisyComponent(lambda x: 0.5 * float((x - _C) @ (x - _C)), lambda x: x - _C, noise)
    f1 = NoisyComponent(lambda x: float(x[0] + x[1]), lambda x: np.array([1.0, 1.0]), noise)

    def many(p):
        d = p - _C
        return np.column_stack([0.5 * np.einsum("ij,ij->i", d, d), p[:, 0] + p[:, 1]])

    return ToyProblem([f0, f1], [1.0], Ball(2.0, dimension=2), name="toy2d", values_many=many,
                      f_star=0.25, initial_point=[0.0, 0.0], metadata={"noise": noise})


def build_analytic_toy(variant="oneD", noise=0.0):
    if variant in ("oneD", "toy1d", "1d"):
        return one_d(noise)
    if variant in ("twoD", "toy2d", "2d"):
        return two_d(noise)
    raise ValueError(f"unknown toy variant {variant!r}")
