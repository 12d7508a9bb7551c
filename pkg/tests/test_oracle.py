import math

import numpy as np
import pytest

from slevel.geometry import GeometrySpec
from slevel.oracle import BoundAccumulators, OracleConfig, OracleError, run_ovsmd, run_smd, step_size
from slevel.problems import one_d, two_d
from slevel.soec import Ball, Box, GridLevelOracle, SaddleFunction, SoecProblem, evaluate_p


def test_step_size():
    assert step_size(3, 2.0) == 0.25
    assert step_size(0, 4.0) == 0.25


def test_accumulator_examples():
    acc = BoundAccumulators(2, 1).accumulate(1.0, 0.3, np.array([3.0, 4.0]), np.array([-1.0, 2.0]),
                                             np.zeros(2), np.array([0.5, 0.5]))
    assert acc.finalize_upper() == pytest.approx(1.8)
    assert acc.finalize_lower(Ball(1.0, dimension=2)) == pytest.approx(-4.7)
    flat = BoundAccumulators(2, 1).accumulate(0.5, 0.7, np.zeros(2), np.zeros(2), np.ones(2), np.array([0.2, 0.8]))
    assert flat.finalize_upper() == pytest.approx(0.7)
    assert flat.finalize_lower(Box([0.0, 0.0], [2.0, 2.0])) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        BoundAccumulators(1, 1).finalize_upper()


def test_config_validation():
    for kw in ({"iterations": 0}, {"step_constant": 0.0}, {"batch_size": 0}, {"delta": 1.0}):
        with pytest.raises(ValueError):
            OracleConfig(**kw)


@pytest.fixture(scope="module")
def toy_run():
    prob = one_d()
    rep = run_ovsmd(SaddleFunction(prob, 2.0), GeometrySpec.for_problem(prob), OracleConfig(2000, 1.0),
                    record_history=True)
    return prob, rep


def test_sandwich_every_step(toy_run):
    prob, rep = toy_run
    h = GridLevelOracle(prob)(2.0)
    assert h == pytest.approx(-0.5, abs=1e-8)
    assert np.all(rep.history["lower"] <= h + 1e-3)
    assert np.all(rep.history["upper"] >= h - 1e-3)
    assert np.all(rep.history["upper"] >= rep.history["p_bar"] - 1e-12)
    assert rep.lower <= -0.5 <= rep.upper and rep.upper - rep.lower <= 0.1


def test_iterates_stay_in_domain(toy_run):
    prob, rep = toy_run
    assert prob.domain.contains(rep.x_bar)
    assert rep.y_bar.min() > 0 and abs(rep.y_bar.sum() - 1) <= 1e-12


def test_at_optimal_level():
    prob = one_d()
    rep = run_ovsmd(SaddleFunction(prob, 1.0), GeometrySpec.for_problem(prob), OracleConfig(2000, 1.0))
    assert abs(rep.upper) <= 0.1


def test_smd_reference_value():
    prob = one_d()
    rep = run_smd(SaddleFunction(prob, 2.0), GeometrySpec.for_problem(prob), OracleConfig(2000, 1.0))
    assert -0.5 <= rep.upper <= -0.4
    assert rep.upper == evaluate_p(prob, 2.0, rep.x_bar)
    assert rep.lower is None


def test_deterministic_given_seed():
    prob = two_d(0.3)
    geo = GeometrySpec.for_problem(prob)
    cfg = OracleConfig(300, 1.0, 4, seed=11)
    a = run_ovsmd(SaddleFunction(prob, 0.8), geo, cfg)
    b = run_ovsmd(SaddleFunction(prob, 0.8), geo, cfg)
    assert a.upper == b.upper and a.lower == b.lower
    assert np.array_equal(a.x_bar, b.x_bar) and np.array_equal(a.y_bar, b.y_bar)
    c = run_ovsmd(SaddleFunction(prob, 0.8), geo, OracleConfig(300, 1.0, 4, seed=12))
    assert c.upper != a.upper


def test_rate_slope():
    prob = one_d()
    rep = run_ovsmd(SaddleFunction(prob, 2.0), GeometrySpec.for_problem(prob), OracleConfig(6400, 1.0),
                    record_history=True)
    ts = np.array([100, 400, 1600, 6400])
    gaps = rep.history["upper"][ts - 1] - rep.history["lower"][ts - 1]
    slope = np.polyfit(np.log(ts), np.log(gaps), 1)[0]
    assert -0.65 <= slope <= -0.35


def test_anytime_stop_equals_truncation():
    prob = two_d()
    geo = GeometrySpec.for_problem(prob)
    sf = SaddleFunction(prob, 1.0)
    early = run_ovsmd(sf, geo, OracleConfig(5000, 1.0), stop_gap=0.3)
    fixed = run_ovsmd(sf, geo, OracleConfig(early.iterations, 1.0))
    assert early.iterations < 5000
    assert early.upper == fixed.upper and early.lower == fixed.lower


def test_consumed_counts_rows():
    prob = two_d(0.1)
    rep = run_ovsmd(SaddleFunction(prob, 1.0), GeometrySpec.for_problem(prob), OracleConfig(10, 1.0, 8))
    assert rep.consumed == 10 * 8 * 2


class _Exploding:
    """Component whose subgradient overflows after a few steps."""

    rows_per_draw = 1
    support_size = None
    has_exact = False

    def draw(self, rng, n):
        return np.zeros(n)

    def evaluate(self, x, scenarios):
        return 0.0, np.array([math.inf if x[0] < -0.5 else 1.0])


def test_nonfinite_gradient_aborts():
    prob = SoecProblem([_Exploding(), _Exploding()], [0.0], Box([-1.0], [1.0]))
    with pytest.raises((OracleError, FloatingPointError)):
        run_ovsmd(SaddleFunction(prob, 0.0), GeometrySpec.for_problem(prob), OracleConfig(50, 0.1))
