"""One test per acceptance criterion, at the stated tolerance and runtime budget.

Each test prints a ``criterion N [PASS|FAIL]`` line; the lines are repeated in
the terminal summary.
"""

import pytest

from slevel import verify

RESULTS = []

# (check, runtime budget in seconds)
CRITERIA = [
    (verify.criterion_level_function, 5),
    (verify.criterion_prox, 5),
    (verify.criterion_sandwich, 10),
    (verify.criterion_rate, 30),
    (verify.criterion_sfls_zero_noise, 30),
    (verify.criterion_feasible_path, 180),
    (verify.criterion_bound_estimator, 30),
    (verify.criterion_np_comparison, 300),
    (verify.criterion_fairness_init, 1),
    (verify.criterion_alp, 600),
    (verify.criterion_formulas, 1),
    (verify.criterion_parser, 1),
]


@pytest.mark.acceptance
@pytest.mark.parametrize("check,budget", CRITERIA, ids=[f"criterion_{c.cid:02d}" for c, _ in CRITERIA])
def test_criterion(check, budget):
    res = check()
    in_time = res.seconds < budget
    line = res.line() + ("" if in_time else f" [over the {budget}s budget]")
    if not in_time:
        line = line.replace("[PASS]", "[FAIL]")
    RESULTS.append(line)
    print(line)
    assert res.passed, res.detail
    assert in_time, f"took {res.seconds:.1f}s, budget {budget}s"
