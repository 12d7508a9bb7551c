import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slevel.problems import one_d, two_d
from slevel.soec import (Ball, Box, Component, Exact, GridLevelOracle, NonFiniteSampleError, Product, Saa,
                         SaddleFunction, SoecProblem, UnsupportedModeError, batch_mean, compute_metrics,
                         evaluate_p, sample_saddle_subgradient)

finite = st.floats(-50, 50, allow_nan=False)


def h_one_d(r):
    # closed form of the level function of the 1-D toy on [-1, 3]
    return (1.0 - r) / 2.0


def test_saddle_subgradient_hand_example():
    prob = one_d()
    sf = SaddleFunction(prob, 2.0)
    s = sample_saddle_subgradient(sf, np.array([0.5]), np.array([0.5, 0.5]), 1, prob.make_streams(0))
    np.testing.assert_allclose(s.grad_y, [-1.5, 0.5])
    np.testing.assert_allclose(s.grad_x, [0.0])
    assert s.value == pytest.approx(-0.5)


def test_unit_vector_on_objective():
    prob = two_d()
    sf = SaddleFunction(prob, 0.3)
    x = np.array([0.2, -0.4])
    s = sample_saddle_subgradient(sf, x, np.array([1.0, 0.0]), 4, prob.make_streams(1))
    np.testing.assert_allclose(s.grad_x, x - 1.0)
    assert s.value == pytest.approx(0.5 * ((0.2 - 1) ** 2 + (-0.4 - 1) ** 2) - 0.3)


def test_subgradient_rejects_off_simplex_and_off_domain():
    prob = one_d()
    sf = SaddleFunction(prob, 2.0)
    with pytest.raises(ValueError):
        sample_saddle_subgradient(sf, np.array([0.5]), np.array([0.6, 0.6]), 1, prob.make_streams(0))
    with pytest.raises(ValueError):
        sample_saddle_subgradient(sf, np.array([2.5]), np.array([0.5, 0.5]), 1, prob.make_streams(0))


class _Bad(Component):
    support_size = 1

    def draw(self, rng, n):
        return np.zeros(n)

    def evaluate(self, x, scenarios):
        return math.nan, np.zeros_like(x)


def test_non_finite_sample_names_component():
    prob = SoecProblem([one_d().components[0], _Bad()], [0.0], Box([0.0], [1.0]))
    with pytest.raises(NonFiniteSampleError) as err:
        prob.sample(np.array([0.5]), prob.make_streams(0), 2)
    assert err.value.component == 1


def test_evaluate_p_examples():
    prob = one_d()
    assert evaluate_p(prob, 2.0, np.array([0.75])) == pytest.approx(0.25)
    assert evaluate_p(prob, 1.0, np.array([1.0])) == 0.0
    assert evaluate_p(prob, 2.0, np.array([0.75])).sample_count is None


def test_exact_mode_without_evaluator():
    prob = SoecProblem([_Bad(), _Bad()], [0.0], Box([0.0], [1.0]))
    with pytest.raises(UnsupportedModeError):
        evaluate_p(prob, 0.0, np.array([0.5]), Exact())


def test_grid_level_examples():
    grid = GridLevelOracle(one_d())
    h, x = grid.minimize(2.0)
    assert h == pytest.approx(-0.5, abs=1e-8)
    assert x[0] == pytest.approx(1.5, abs=1e-6)
    assert abs(grid(1.0)) <= 1e-8
    assert grid(0.5) == pytest.approx(0.25, abs=1e-8)


@given(st.floats(-1.0, 3.0))
def test_grid_level_matches_closed_form(r):
    assert GRID_1D(r) == pytest.approx(h_one_d(r), abs=1e-6)


GRID_1D = GridLevelOracle(one_d())
GRID_2D = GridLevelOracle(two_d())


@pytest.mark.parametrize("grid,f_star", [(GRID_1D, 1.0), (GRID_2D, 0.25)])
def test_level_function_shape(grid, f_star):
    rs = np.linspace(f_star - 1, f_star + 1, 25)
    hs = np.array([grid(r) for r in rs])
    assert np.all(np.diff(hs) <= 1e-6)
    assert abs(grid(f_star)) <= 1e-3
    assert np.all(hs[rs < f_star - 1e-2] > 0) and np.all(hs[rs > f_star + 1e-2] < 0)


def test_grid_rejects_high_dimension():
    prob = SoecProblem([_Bad()] * 2, [0.0], Box(np.zeros(4), np.ones(4)))
    with pytest.raises(UnsupportedModeError):
        GridLevelOracle(prob)


@given(arrays(np.float64, 2, elements=st.floats(-2, 2)), st.floats(0, 1), st.floats(-3, 3))
def test_phi_exact_matches_definition(x, y0, r):
    prob = two_d()
    x = prob.domain.project(x)
    y = np.array([y0, 1 - y0])
    vals = prob.exact_values(x)
    want = y[0] * (vals[0] - r) + y[1] * (vals[1] - 1.0)
    assert SaddleFunction(prob, r).phi_exact(x, y) == pytest.approx(want, rel=1e-10, abs=1e-12)


@given(arrays(np.float64, 2, elements=st.floats(-2, 2)), st.floats(-3, 3))
def test_p_nonpositive_means_feasible(x, r):
    prob = two_d()
    x = prob.domain.project(x)
    if evaluate_p(prob, r, x) <= 0:
        m = compute_metrics(prob, x)
        assert m.max_violation <= 0 and m.objective_value <= r


def test_saa_with_full_support_reproduces_exact():
    # a finite-support component whose SAA over the whole support is the exact mean
    from slevel.io import DatasetMatrix
    from slevel.problems.classification import LabeledHinge, _Rows

    rng = np.random.default_rng(0)
    dm = DatasetMatrix.from_dense(rng.normal(size=(64, 3)), [0] * 64)
    comp = LabeledHinge(_Rows(dm), np.where(rng.random(64) > 0.5, 1.0, -1.0))
    x = rng.normal(size=3)
    exact = comp.exact(x)[0]
    saa = comp.evaluate(x, comp.support())[0]
    assert saa == exact


def test_metrics_example():
    prob = one_d()
    m = compute_metrics(prob, np.array([1.2]), reference_f_star=1.0, reference_x0=np.array([2.0]))
    assert m.max_violation == pytest.approx(-0.2)
    assert m.relative_gap == pytest.approx(0.2)
    m0 = compute_metrics(prob, np.array([2.0]), reference_f_star=1.0, reference_x0=np.array([2.0]))
    assert m0.relative_gap == 1.0


def test_metrics_saa_mode_reports_count():
    prob = one_d(0.5)
    m = compute_metrics(prob, np.array([1.5]), saa=Saa(2000, 7))
    assert m.sample_count == 2000
    assert m.objective_value == pytest.approx(1.5, abs=0.05)


def test_batch_mean_compensated():
    a = np.full(20_001, 0.1)
    assert batch_mean(a) == pytest.approx(0.1, rel=1e-15)
    assert batch_mean(np.array([1.0, 2.0])) == 1.5


# ---------------------------------------------------------------------------
# Domains


def test_projection_examples():
    assert np.allclose(Ball(5.0, dimension=2).project(np.array([6.0, 8.0])), [3.0, 4.0])
    assert Box([0.0], [2.0]).project(np.array([3.5]))[0] == 2.0
    p = np.array([0.3, -0.1])
    assert np.array_equal(Ball(1.0, dimension=2).project(p), p)


DOMAINS = [Ball(1.5, dimension=3), Ball(2.0, center=np.array([1.0, -1.0, 0.5])),
           Box(-np.ones(3), np.array([1.0, 2.0, 0.5])),
           Product([Ball(1.0, dimension=1), Box([0.0, 0.0], [1.0, 3.0])])]


@pytest.mark.parametrize("dom", DOMAINS)
@given(a=arrays(np.float64, 3, elements=finite), b=arrays(np.float64, 3, elements=finite))
def test_projection_idempotent_nonexpansive(dom, a, b):
    pa, pb = dom.project(a), dom.project(b)
    assert dom.contains(pa)
    np.testing.assert_allclose(dom.project(pa), pa, atol=1e-12)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-9


@pytest.mark.parametrize("dom", DOMAINS)
@given(arrays(np.float64, 3, elements=st.floats(-5, 5)))
def test_linear_min_is_a_lower_bound(dom, a):
    lo, hi = dom.bounding_box()
    raw = np.random.default_rng(0).uniform(lo - 1, hi + 1, size=(500, 3))
    pts = np.array([dom.project(p) for p in raw])
    assert dom.linear_min(a) <= float(np.min(pts @ a)) + 1e-9


def test_linear_min_examples():
    assert Ball(1.0, dimension=2).linear_min(np.array([3.0, 4.0])) == pytest.approx(-5.0)
    assert Box([0.0, 0.0], [2.0, 2.0]).linear_min(np.array([1.0, -1.0])) == -2.0
