from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from spgeq.errors import InvariantError
from spgeq.network import merge_sets
from spgeq.oracle import RandomSPGSpec, generate_spg
from spgeq.pricing import backward_price, price_at


def test_worked_simple_sm(fixture_net):
    ps = backward_price(fixture_net("c2"))
    assert ps.b["s"] == F(23, 4)
    assert ps.X_s == F(4, 23)
    assert (ps.b["j1"], ps.b["j2"], ps.b["v1"]) == (3, 5, 2)
    assert [ps.alpha[a] for a in (("s", "j1"), ("s", "j2"), ("j2", "v1"), ("j2", "v2"))] == [
        F(5, 8),
        F(3, 8),
        F(1, 2),
        F(1, 2),
    ]


def test_worked_general_sm(fixture_net):
    ps = backward_price(fixture_net("c3"))
    agg = ps.aggregates["s"]
    assert agg.c["l"] == 2
    assert agg.c["t"] == F(11, 5)
    assert ps.b["s"] == F(22, 5)
    assert ps.X_s == F(5, 22)
    assert [ps.alpha[("s", j)] for j in ("j1", "j2", "j3")] == [F(2, 5), F(3, 10), F(3, 10)]


def test_line_doubles_slope(fixture_net):
    ps = backward_price(fixture_net("ex21"))
    assert (ps.b["t"], ps.b["v"], ps.b["s"]) == (1, 2, 4)
    assert ps.lam == 4


def test_price_at_needs_throughputs(fixture_net):
    ps = backward_price(fixture_net("c2"))
    with pytest.raises(ValueError, match="throughput"):
        price_at(ps, "v1", {"v1": F(1)})


def test_rejects_bad_tie_break(fixture_net):
    with pytest.raises(ValueError):
        backward_price(fixture_net("c2"), tie_break="random")


def test_fixed_slopes_pin_values(fixture_net):
    net = fixture_net("ex21")
    ps = backward_price(net, fixed_slopes={"v": F(3)})
    assert ps.b["v"] == 3 and ps.b["s"] == 6


def test_inconsistent_merge_sets_are_caught(fixture_net):
    net = fixture_net("c2")
    ms = merge_sets(net)
    broken = dict(ms.cp)
    broken["v1"] = frozenset()
    bad = type(ms)(ms.cs, broken, ms.ct, ms.sm, net)
    with pytest.raises(InvariantError):
        backward_price(net, bad)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31), budget=st.integers(3, 14))
def test_general_formula_reduces_to_simple(seed, budget):
    net, _ = generate_spg(RandomSPGSpec(seed, budget))
    a = backward_price(net)
    b = backward_price(net, general=True)
    assert a.b == b.b and a.alpha == b.alpha


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31), budget=st.integers(3, 14))
def test_independent_of_tie_break(seed, budget):
    net, _ = generate_spg(RandomSPGSpec(seed, budget))
    a = backward_price(net)
    b = backward_price(net, tie_break="reverse")
    assert a.b == b.b and a.alpha == b.alpha and a.X_s == b.X_s


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31), budget=st.integers(3, 14))
def test_slopes_and_splits_well_formed(seed, budget):
    net, _ = generate_spg(RandomSPGSpec(seed, budget))
    ps = backward_price(net)
    assert all(v > 0 for v in ps.b.values())
    assert ps.lam >= 2
    for i in net.nodes:
        buyers = net.buyers(i)
        if buyers:
            assert sum(ps.alpha[(i, j)] for j in buyers) == 1
            assert all(ps.alpha[(i, j)] > 0 for j in buyers)
