import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bgg.game import cost_action, cost_action_expanded, cost_no_action, optimal_alpha, total_cost

GRID = np.round(np.arange(0, 0.2001, 0.005), 12)


def test_cost_no_action():
    assert cost_no_action(2e6, 0.05) == 100000
    assert cost_no_action(2e6, 0.0) == 0
    assert cost_no_action(2e6, 1.0) == 2e6


def test_cost_action():
    assert cost_action(4750, 2e6, 0.01) == 24750
    assert cost_action(4750, 2e6, 0.0) == 4750
    assert cost_action(4750, 2e6, 1.0) == 4750 + 2e6


def test_total_cost_hand_value():
    assert total_cost(0.05, 0.01, 0.9, 4750, 2e6) == 32275
    # spreadsheet-style: acting branch and idle branch computed separately
    act = 4750 * (1 - 0.01) + (4750 + 2e6) * 0.01
    idle = 2e6 * 0.05
    assert 0.9 * act + 0.1 * idle == pytest.approx(32275, rel=1e-15)


def test_total_cost_reductions():
    assert total_cost(0.05, 0.01, 1.0, 4750, 2e6) == cost_action(4750, 2e6, 0.01)
    assert total_cost(0.05, 0.01, 0.0, 4750, 2e6) == cost_no_action(2e6, 0.05)


@settings(max_examples=300, deadline=None)
@given(
    c=st.floats(0, 1e7), B=st.floats(0, 1e9), q1=st.floats(0, 1),
)
def test_action_forms_agree(c, B, q1):
    a, b = cost_action(c, B, q1), cost_action_expanded(c, B, q1)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(
    q0=st.floats(0, 1), q1=st.floats(0, 1), p=st.floats(0, 1), c=st.floats(0, 1e6), B=st.floats(0, 1e8),
    bump=st.floats(0, 1),
)
def test_total_cost_monotone_in_each_input(q0, q1, p, c, B, bump):
    base = total_cost(q0, q1, p, c, B)
    tol = 1e-9 * max(1.0, abs(base))
    assert total_cost(min(1, q0 + bump), q1, p, c, B) >= base - tol
    assert total_cost(q0, min(1, q1 + bump), p, c, B) >= base - tol
    assert total_cost(q0, q1, p, c + bump * 1e3, B) >= base - tol
    assert total_cost(q0, q1, p, c, B + bump * 1e6) >= base - tol


def test_useless_reserves_mean_no_action():
    rep = optimal_alpha(0.05, 0.9, GRID, [0.05] * len(GRID), 2e6, 0.5, 100000)
    assert rep.alpha_star == 0 and not rep.action_justified and rep.strategy == "DoNothing"
    assert rep.first_feasible_alpha is None
    assert rep.alpha_star_cost == pytest.approx(1e5)


def test_nothing_to_protect():
    rep = optimal_alpha(0.05, 0.9, GRID, lambda a: 0.05 * np.exp(-40 * a), 0.0, 0.5, 100000)
    assert rep.alpha_star == 0
    free = optimal_alpha(0.05, 0.9, GRID, lambda a: 0.05 * np.exp(-40 * a), 0.0, 0.0, 100000)
    assert free.alpha_star == 0 and free.alpha_star_cost == 0


def test_injected_optimum_matches_brute_force():
    q1 = [0.05 * np.exp(-48.05 * a) for a in GRID]
    rep = optimal_alpha(0.05, 0.4288, GRID, q1, 2e6, 0.5, 100000)
    brute = min((total_cost(0.05, q, 0.4288, 0.5 * a * 100000, 2e6), a) for a, q in zip(GRID, q1) if a > 0)
    assert (rep.alpha_star_cost, rep.alpha_star) == brute
    assert rep.alpha_star == 0.095
    assert not rep.constraint_binding


def test_ties_go_to_smallest_alpha():
    grid = [0.0, 0.1, 0.2, 0.3]
    # c_alpha + B q1 constant on the three positive points
    q1 = [0.05, 0.03, 0.02, 0.01]
    rep = optimal_alpha(0.05, 1.0, grid, q1, 1000.0, 1.0, 100)
    assert [p.cost_total for p in rep.curve[1:]] == [40.0, 40.0, 40.0]
    assert rep.alpha_star == 0.1 and rep.first_feasible_alpha == 0.1


def test_feasibility_can_bind():
    # the cheapest total sits at alpha = 0 when acting is dearer, yet never selected as action
    grid = [0.0, 0.1, 0.2]
    rep = optimal_alpha(0.01, 0.5, grid, [0.01, 0.0, 0.0], 100.0, 1.0, 100)
    assert rep.unconstrained_alpha == 0.0 and rep.alpha_star == 0.0
    assert [p.feasible for p in rep.curve] == [False, False, False]


def test_lp_bound_pointwise():
    rep = optimal_alpha(0.05, 0.9, [0.0, 0.05, 0.5], [0.05, 0.02, 0.0], 2e6, 0.5, 100000)
    # B q0 = 1e5; alpha = 0.05: c = 2500, bound 2500 / 97500 = 0.0256
    # alpha = 0.5: c = 25000, bound 0.333
    assert [p.lp_bound_ok for p in rep.curve] == [True, True, True]
    rep2 = optimal_alpha(0.05, 0.9, [0.9], [0.0], 2e6, 2.0, 100000)
    assert not rep2.curve[0].lp_bound_ok


def test_grid_and_q1_must_align():
    with pytest.raises(ValueError):
        optimal_alpha(0.05, 0.9, [0.0, 0.1], [0.05], 1.0, 1.0, 10)
    with pytest.raises(ValueError):
        optimal_alpha(0.05, 0.9, [], [], 1.0, 1.0, 10)
