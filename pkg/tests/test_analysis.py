from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from spgeq.analysis import (
    check_double_utility,
    compare_swap,
    component_factor,
    compose_parallel,
    demand_sweep,
    node_utilities,
    social_welfare,
    source_price,
    subtree_lambda,
    swap_series,
    welfare_of_lambda,
)
from spgeq.errors import NetworkError
from spgeq.flow import solve_full
from spgeq.network import Series, decompose, is_series_parallel, iter_tree, make_network
from spgeq.oracle import RandomSPGSpec, generate_spg


def _solved(net):
    sol = solve_full(net)
    util = node_utilities(sol.working, sol.schedule, sol.equilibrium)
    return sol, util


def test_line_profits_and_welfare(fixture_net):
    sol, util = _solved(fixture_net("ex21"))
    assert util == {"s": 8, "v": 4}
    w = social_welfare(sol.working, sol.schedule, sol.equilibrium, util)
    assert (w.sw_by_sum, w.lam, w.consumer_surplus) == (14, 4, 2)


def test_diamond_profits(fixture_net):
    sol, util = _solved(fixture_net("ex22"))
    assert util == {"s": 6, "u": 1, "v": 1}
    w = social_welfare(sol.working, sol.schedule, sol.equilibrium, util)
    assert (w.sw_by_sum, w.lam) == (10, 3)


def test_source_price_is_midpoint(fixture_net):
    for name in ("c1", "c2", "c3", "ex21", "ex22"):
        net = fixture_net(name)
        sol = solve_full(net)
        eq = sol.equilibrium
        for j in net.buyers(net.source):
            assert eq.p[j] == source_price(net)


def test_single_arc_factor_is_two():
    net = make_network([("s", "t")], cost=1, demand=3, slope=2)
    assert solve_full(net).schedule.lam == 2


def test_series_multiplies(fixture_net):
    net = fixture_net("c2")
    cf = component_factor(net)
    assert cf.ok and cf.lam == F(23, 4)
    assert any(r.kind == "series" and r.composed is not None for r in cf.rows)


def test_parallel_law():
    assert compose_parallel(F(4), F(4)) == 3
    assert compose_parallel(F(3), F(6)) == F(2 * 0 + (1 * 4), 5) + 2


def test_welfare_of_lambda_matches(fixture_net):
    sol, util = _solved(fixture_net("c2"))
    net = sol.working
    w = social_welfare(net, sol.schedule, sol.equilibrium, util)
    assert welfare_of_lambda(w.lam, net.demand - net.cost, net.slope) == w.sw_by_sum


def test_swap_keeps_invariants(fixture_net):
    net = fixture_net("c2")
    swapped, diff = compare_swap(net, "k")
    assert diff.invariant
    assert swapped != net and is_series_parallel(swapped)


def test_swap_refuses_shortcuts(fixture_net):
    with pytest.raises(NetworkError):
        compare_swap(fixture_net("shortcut_e"), "v")


def test_swap_unknown_middle(fixture_net):
    net = fixture_net("c2")
    with pytest.raises(NetworkError):
        swap_series(net, decompose(net), "nowhere")


def test_sweep_monotone(fixture_net):
    rows = demand_sweep(fixture_net("c2"), [2, 3, 5, F(11, 2)])
    assert [r.value for r in rows] == [2, 3, 5, F(11, 2)]
    rows = demand_sweep(fixture_net("c2"), [F(1, 2), 1, F(3, 2)], param="cost")
    assert rows[0].X_s > rows[-1].X_s


def test_sweep_rejects_demand_below_cost(fixture_net):
    with pytest.raises(NetworkError):
        demand_sweep(fixture_net("c2"), [F(1, 2)])


def test_double_utility_on_worked_example(fixture_net):
    sol, util = _solved(fixture_net("c1"))
    rows = check_double_utility(sol.working, sol.equilibrium, util)
    assert rows and all(r.ok for r in rows)
    assert any(r.rule == "single-seller-buyers" for r in rows)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), budget=st.integers(3, 12))
def test_random_invariants(seed, budget):
    net, _ = generate_spg(RandomSPGSpec(seed, budget))
    sol, util = _solved(net)
    w = social_welfare(net, sol.schedule, sol.equilibrium, util)
    assert w.agree and w.lam >= 2
    assert component_factor(net, sol.tree, sol.schedule).ok
    assert all(r.ok for r in check_double_utility(net, sol.equilibrium, util))
    for node in iter_tree(sol.tree):
        if isinstance(node, Series):
            assert subtree_lambda(node) == subtree_lambda(node.left) * subtree_lambda(node.right)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), budget=st.integers(4, 12), pick=st.integers(0, 100))
def test_random_swaps(seed, budget, pick):
    net, tree = generate_spg(RandomSPGSpec(seed, budget))
    mids = sorted(n.middle for n in iter_tree(tree) if isinstance(n, Series))
    if mids:
        _, diff = compare_swap(net, mids[pick % len(mids)])
        assert diff.invariant
