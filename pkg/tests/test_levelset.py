import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slevel.geometry import GeometrySpec
from slevel.levelset import (DflsConfig, LevelNotAboveOptimumError, LevelSetError, SflsConfig, bound_is_tight,
                             condition_diagnostics, delta_at_iteration, derive_tolerances, dfls_solve,
                             estimate_initial_bound, level_update, outer_iteration_bound, sfls_solve)
from slevel.oracle import OracleConfig, OracleError
from slevel.problems import one_d, two_d
from slevel.soec import SaddleFunction


def test_delta_schedule():
    assert delta_at_iteration(0.1, 0) == pytest.approx(0.05)
    assert delta_at_iteration(0.1, 3) == pytest.approx(0.00625)


@given(st.floats(1e-6, 0.999), st.integers(1, 200))
def test_delta_schedule_sums_below_delta(delta, k):
    assert sum(delta_at_iteration(delta, i) for i in range(k)) <= delta


def test_level_update():
    assert level_update(2.0, -0.5, 1.25) == pytest.approx(1.8)
    assert level_update(2.0, 0.0, 1.25) == 2.0
    assert level_update(2.0, -0.5, 1e12) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        level_update(2.0, -0.5, 1.0)


def test_derive_tolerances():
    eo, ea = derive_tolerances(-0.5, 1.1, 0.01)
    assert round(eo, 6) == 4.545e-3 and round(ea, 8) == 9.839e-5
    eo10, ea10 = derive_tolerances(-0.5, 1.1, 0.1)
    assert eo10 == pytest.approx(10 * eo) and ea10 == pytest.approx(10 * ea)
    assert derive_tolerances(-0.5, 1 + 1e-12, 0.01)[1] < 1e-13
    with pytest.raises(ValueError):
        derive_tolerances(0.0, 1.1, 0.01)


def test_outer_bound_example():
    assert outer_iteration_bound(0.5, 1.25, 0.01) == 36


def test_bound_stop_rule():
    assert not bound_is_tight(-1.0, 0.2, 1.1)
    assert bound_is_tight(-1.0, 0.04, 1.1)
    assert not bound_is_tight(-0.1, 0.2, 1.1)


def test_config_validation():
    with pytest.raises(ValueError):
        SflsConfig(2.0, theta=1.0)
    with pytest.raises(ValueError):
        SflsConfig(math.nan)
    with pytest.raises(ValueError):
        SflsConfig(2.0, delta=0.0)


def test_condition_diagnostics_toy():
    d = condition_diagnostics(one_d(), 2.0, 1.25, 0.01)
    assert d.beta_hat == pytest.approx(0.5, abs=1e-6)
    assert d.f_star == pytest.approx(1.0, abs=1e-6)
    assert d.outer_bound == 36
    with pytest.raises(ValueError):
        condition_diagnostics(one_d(), 0.5)


def test_bound_estimator_toy():
    prob = one_d()
    est = estimate_initial_bound(SaddleFunction(prob, 2.0), GeometrySpec.for_problem(prob), 0.1, 0.1, 1.1,
                                 OracleConfig(500, 1.0))
    assert -0.5 <= est.u_bar < 0
    assert 0.5 / abs(est.u_bar) <= 1.1


def test_bound_estimator_at_optimum_hits_cap():
    prob = one_d()
    with pytest.raises(LevelNotAboveOptimumError):
        estimate_initial_bound(SaddleFunction(prob, 1.0), GeometrySpec.for_problem(prob), 0.1, 0.1, 1.1,
                               OracleConfig(100, 1.0), max_halvings=6, max_iterations=400)


@pytest.fixture(scope="module")
def zero_noise_traces():
    out = {}
    for prob in (one_d(), two_d()):
        r0 = float(prob.exact_values(prob.initial_point)[0])
        geo = GeometrySpec.for_problem(prob)
        est = estimate_initial_bound(SaddleFunction(prob, r0), geo, 0.1, 0.1, 1.25, OracleConfig(2000, 1.0))
        eps_opt, eps_a = derive_tolerances(est.u_bar, 1.25, 0.01)
        trace = sfls_solve(prob, geo, SflsConfig(r0, 1.25, 200, OracleConfig(2000, 1.0), 0.1, eps_opt=eps_opt,
                                                  reference_f_star=prob.f_star))
        out[prob.name] = (prob, trace, eps_a)
    return out


@pytest.mark.parametrize("name", ["toy1d", "toy2d"])
def test_sfls_zero_noise(zero_noise_traces, name):
    prob, trace, _ = zero_noise_traces[name]
    diag = condition_diagnostics(prob, trace.records[0].r, 1.25, 0.01)
    assert trace.halted
    assert trace.feasible_path(1e-9)
    assert trace.final.metrics.relative_gap <= 0.01
    assert len(trace) <= diag.outer_bound + 2


@pytest.mark.parametrize("name", ["toy1d", "toy2d"])
def test_sfls_level_monotone_and_above_optimum(zero_noise_traces, name):
    prob, trace, _ = zero_noise_traces[name]
    rs = np.array([rec.r for rec in trace.records])
    us = np.array([rec.u_hat for rec in trace.records])
    assert np.all(np.diff(rs)[us[:-1] <= 0] <= 0)
    assert np.all(rs >= prob.f_star - 1e-3)
    assert sum(rec.delta for rec in trace.records) <= 0.1
    for rec in trace.records:
        assert rec.metrics.max_violation <= 0
        assert rec.metrics.objective_value <= rec.r + 1e-12


def test_sfls_immediate_halt():
    prob = one_d()
    trace = sfls_solve(prob, GeometrySpec.for_problem(prob),
                       SflsConfig(2.0, 1.1, 10, OracleConfig(200, 1.0), eps_opt=10.0))
    assert len(trace) == 1 and trace.halted


def test_sfls_warns_below_optimum():
    prob = one_d()
    trace = sfls_solve(prob, GeometrySpec.for_problem(prob), SflsConfig(0.0, 1.1, 4, OracleConfig(200, 1.0)))
    assert any("below f*" in w for w in trace.warnings)


def test_sfls_pass_budget_and_csv_monotone():
    prob = two_d(0.2)
    trace = sfls_solve(prob, GeometrySpec.for_problem(prob),
                       SflsConfig(0.5, 1.1, 100, OracleConfig(100, 1.0, 5), max_data_passes=3000))
    assert trace.final.data_passes <= 3000
    # each call reads 100 * 5 * 2 rows of a size-2 "dataset": 500 passes
    assert len(trace) == 6
    for key in ("outer_iter", "grad_iters", "data_passes"):
        vals = [getattr(rec, key) for rec in trace.records]
        assert all(b > a for a, b in zip(vals, vals[1:]))


def test_sfls_wraps_oracle_failure():
    prob = one_d()

    def broken(sf, geometry, config):
        raise OracleError("non-finite iterate", 7)

    with pytest.raises(LevelSetError) as err:
        sfls_solve(prob, GeometrySpec.for_problem(prob), SflsConfig(2.0), oracle=broken)
    assert err.value.outer_iter == 0


def test_dfls_update_example():
    prob = one_d()
    trace = dfls_solve(prob, DflsConfig(2.0, outer_limit=2, inner_iterations=2000, step_constant=1.0))
    p0 = trace.records[0].u_hat
    assert p0 == pytest.approx(-0.5, abs=1e-2)
    assert trace.records[1].r == pytest.approx(2.0 + p0 / 2)
    assert trace.records[1].data_passes == 2 * 2 * 2000


def test_dfls_feasible_on_toys():
    for prob in (one_d(), two_d()):
        r0 = float(prob.exact_values(prob.initial_point)[0])
        trace = dfls_solve(prob, DflsConfig(r0, outer_limit=15, inner_iterations=200))
        assert trace.feasible_path(1e-9)
        assert trace.final.metrics.objective_value == pytest.approx(prob.f_star, abs=0.05)
