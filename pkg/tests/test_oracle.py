import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from spgeq.errors import InvariantError
from spgeq.flow import Equilibrium, solve_full
from spgeq.network import find_shortcuts, is_series_parallel
from spgeq.oracle import (
    RandomSPGSpec,
    SMAllocationProblem,
    _Responder,
    allocation_problem,
    best_response_check,
    check_instance,
    deviation_utility,
    generate_spg,
    lcp_solve,
    run_property_suite,
    solve_linear,
)


def test_solve_linear():
    assert solve_linear([[F(2), F(1)], [F(1), F(3)]], [F(3), F(5)]) == [F(4, 5), F(7, 5)]
    assert solve_linear([[F(1), F(2)], [F(2), F(4)]], [F(1), F(2)]) is None


def test_lcp_matches_worked_split(fixture_net):
    sol = solve_full(fixture_net("c2"))
    for budget in (True, False):
        res = lcp_solve(allocation_problem(sol, "s", budget=budget))
        assert (res.x["j1"], res.x["j2"]) == (F(5, 46), F(3, 46))


def test_lcp_general_case(fixture_net):
    sol = solve_full(fixture_net("c3"))
    res = lcp_solve(allocation_problem(sol, "s"))
    assert [res.x[j] for j in ("j1", "j2", "j3")] == [F(1, 11), F(3, 44), F(3, 44)]


def test_lcp_unprofitable_seller_ships_nothing():
    merge = {"a": ("h",), "b": ("h",)}
    prob = SMAllocationProblem("i", ("a", "b"), {"a": F(1), "b": F(2)}, merge, {"h": F(1)}, F(5), F(6))
    res = lcp_solve(prob)
    assert res.x == {"a": 0, "b": 0} and res.active == ()


def test_lcp_free_split_with_shared_merge():
    merge = {"a": ("h",), "b": ("h",)}
    prob = SMAllocationProblem("i", ("a", "b"), {"a": F(1), "b": F(2)}, merge, {"h": F(1)}, F(10), F(1))
    res = lcp_solve(prob)
    mr = prob.marginal(res.x)
    assert res.x["a"] == 2 * res.x["b"] > 0
    assert mr["a"] == mr["b"] == 0


def test_best_response_zero_gain_at_equilibrium(fixture_net):
    net = fixture_net("c2")
    sol = solve_full(net)
    for i in net.nodes:
        if i != net.sink:
            assert best_response_check(net, sol.equilibrium, i, schedule=sol.schedule).gain == 0


def test_best_response_finds_gain_off_equilibrium(fixture_net):
    net = fixture_net("ex21")
    sol = solve_full(net)
    eq = sol.equilibrium
    half = {a: f / 2 for a, f in eq.x.items()}
    X = {v: f / 2 for v, f in eq.X.items()}
    cand = Equilibrium(half, X, eq.p, eq.active, offered=eq.x)
    assert best_response_check(net, cand, "s", schedule=sol.schedule).gain > 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), budget=st.integers(3, 12), pick=st.integers(0, 50))
def test_affine_responder_matches_direct(seed, budget, pick):
    net, _ = generate_spg(RandomSPGSpec(seed, budget))
    sol = solve_full(net)
    firms = [v for v in net.nodes if v != net.sink]
    i = firms[pick % len(firms)]
    rng = random.Random(seed)
    y = {j: F(rng.randint(0, 40), 17) for j in net.buyers(i)}
    resp = _Responder(net, sol.schedule, sol.equilibrium, i)
    assert resp.utility(y) == deviation_utility(net, sol.schedule, sol.equilibrium, i, y)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), budget=st.integers(3, 30))
def test_generator_output(seed, budget):
    net, tree = generate_spg(RandomSPGSpec(seed, budget))
    assert 2 <= len(net.nodes) <= budget
    assert is_series_parallel(net) and not find_shortcuts(net)
    assert net.kind == "spg"


def test_generator_exact_size_and_determinism():
    a, _ = generate_spg(RandomSPGSpec(11, 25, exact=True))
    b, _ = generate_spg(RandomSPGSpec(11, 25, exact=True))
    assert len(a.nodes) == 25 and a == b
    with pytest.raises(ValueError):
        generate_spg(RandomSPGSpec(1, 2))


def test_check_instance_all_green(fixture_net):
    out = check_instance(fixture_net("c1"), best_response=True)
    assert all(out.values()), out


def test_small_suite():
    res = run_property_suite(3, 40, swaps=40, best_response_every=5)
    assert res.failed == 0 and res.passed == 40
