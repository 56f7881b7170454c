from fractions import Fraction as F

from hypothesis import given, settings, strategies as st

from spgeq.flow import Equilibrium, check_conservation, solve, solve_full, verify_equilibrium
from spgeq.errors import InvariantError
from spgeq.oracle import RandomSPGSpec, generate_spg

import pytest


def test_worked_flows(fixture_net):
    eq = solve(fixture_net("c2"))
    assert eq.x[("s", "j1")] == F(5, 46)
    assert eq.x[("s", "j2")] == F(3, 46)
    assert eq.p["j1"] == eq.p["j2"] == F(3, 2)
    assert eq.p["v1"] == eq.p["v2"] == F(39, 23)
    assert eq.X["t"] == F(4, 23)


def test_examples_end_to_end(fixture_net):
    eq = solve(fixture_net("ex21"))
    assert (eq.p["v"], eq.x[("s", "v")]) == (5, 2)
    eq = solve(fixture_net("ex22"))
    assert (eq.p["u"], eq.x[("s", "u")], eq.x[("s", "v")]) == (4, 1, 1)


def test_shortcut_carries_everything(fixture_net):
    sol = solve_full(fixture_net("shortcut_e"))
    eq = sol.equilibrium
    assert eq.x[("s", "t")] == 1
    assert eq.x[("s", "v")] == eq.x[("v", "t")] == 0
    assert not eq.active[("s", "v")]
    assert eq.arc_price(("s", "v")) is None


def test_prices_rise_along_paths(fixture_net):
    net = fixture_net("c1")
    eq = solve(net)
    for i, j in net.arcs:
        assert eq.p[i] < eq.p[j]


def _perturbed(eq, arc, delta):
    x = dict(eq.x)
    x[arc] += delta
    return Equilibrium(x, eq.X, eq.p, eq.active)


class TestVerifier:
    def test_accepts_solution(self, fixture_net):
        net = fixture_net("c2")
        assert verify_equilibrium(net, solve(net)).ok

    def test_flags_conservation(self, fixture_net):
        net = fixture_net("c2")
        bad = _perturbed(solve(net), ("j2", "v1"), F(1, 100))
        assert "conservation" in verify_equilibrium(net, bad).kinds()

    def test_flags_wrong_split(self, fixture_net):
        net = fixture_net("c2")
        eq = solve(net)
        x = dict(eq.x)
        x[("j2", "v1")] += F(1, 100)
        x[("j2", "v2")] -= F(1, 100)
        X = dict(eq.X)
        X["v1"] += F(1, 100)
        X["v2"] -= F(1, 100)
        cand = Equilibrium(x, X, eq.p, eq.active)
        kinds = verify_equilibrium(net, cand).kinds()
        assert "stationarity" in kinds and "price" in kinds

    def test_flags_negative_flow(self, fixture_net):
        net = fixture_net("ex21")
        eq = solve(net)
        x = {a: -f for a, f in eq.x.items()}
        X = {v: -f for v, f in eq.X.items()}
        assert "negative-flow" in verify_equilibrium(net, Equilibrium(x, X, eq.p, eq.active)).kinds()

    def test_conservation_helper(self, fixture_net):
        net = fixture_net("c2")
        with pytest.raises(InvariantError):
            check_conservation(net, _perturbed(solve(net), ("j2", "v1"), F(1)))


def test_float_mode_tracks_exact():
    net, _ = generate_spg(RandomSPGSpec(5, 400, exact=True))
    exact = solve_full(net).equilibrium
    approx = solve_full(net, exact=False).equilibrium
    scale = float(exact.X["s"])
    assert all(abs(float(exact.x[a]) - approx.x[a]) <= 1e-9 * scale for a in net.arcs)
    assert all(abs(float(exact.p[v]) - approx.p[v]) <= 1e-9 * float(net.demand) for v in net.nodes)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), budget=st.integers(3, 14))
def test_random_solutions_verify(seed, budget):
    net, _ = generate_spg(RandomSPGSpec(seed, budget))
    sol = solve_full(net)
    eq = sol.equilibrium
    assert verify_equilibrium(net, eq).ok
    assert eq.X["t"] == eq.X["s"] == sol.schedule.X_s
    assert all(f > 0 for f in eq.x.values())
