"""Forward pass: distribute the source inflow and read off prices; verifier."""
from __future__ import annotations

import gc
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .errors import InvariantError
from .network import (
    ArcT,
    MergeSets,
    Network,
    Node,
    RemovalReport,
    SPTree,
    classify_arcs,
    decompose,
    merge_sets,
    merge_sets_by_definition,
    remove_dominated_paths,
)
from .pricing import PriceSchedule, backward_price, price_at

ZERO = Fraction(0)


@dataclass(frozen=True)
class Equilibrium:
    """Per-arc flows and per-node throughputs and prices.

    ``p`` holds the unit price each node's sellers receive (for the source,
    its production cost).  Nodes cut off by shortcut removal carry no price.
    ``offered`` is only set for hand-built candidates in which a seller
    offers more than its buyer accepts.
    """

    x: Mapping[ArcT, Fraction]
    X: Mapping[Node, Fraction]
    p: Mapping[Node, Fraction]
    active: Mapping[ArcT, bool]
    removed_arcs: tuple[ArcT, ...] = ()
    offered: Mapping[ArcT, Fraction] | None = None

    def arc_price(self, arc: ArcT) -> Fraction | None:
        return self.p.get(arc[1]) if self.active.get(arc) else None


def forward_flow(net: Network, ps: PriceSchedule) -> Equilibrium:
    X = {net.source: ps.X_s}
    x = {}
    for i in net.topological_order:
        Xi = X[i]
        for j in net.buyers(i):
            f = ps.alpha[(i, j)] * Xi
            x[(i, j)] = f
            X[j] = X[j] + f if j in X else f
    X = {v: X.get(v, ZERO) for v in net.nodes}
    p = _prices(net, ps, X)
    x = dict(sorted(x.items()))
    return Equilibrium(x, X, p, {a: f > 0 for a, f in x.items()})


def _prices(net: Network, ps: PriceSchedule, X) -> dict:
    """All node prices in one topological sweep.

    The merge term sum_{l in C_P(j)} b_l X_l of a buyer differs from its
    seller's only by the few merge nodes entering or leaving the set, so it
    is carried along an arc instead of re-summed per node.
    """
    bX = {v: ps.b[v] * X[v] for v in net.nodes}
    cp = ps.cp
    merged = {net.source: None}
    p = {net.source: net.cost}
    for j in net.topological_order:
        if j == net.source:
            continue
        i = net.sellers(j)[0]
        q = merged[i]
        for l in cp[j] - cp[i]:
            q = bX[l] if q is None else q + bX[l]
        for l in cp[i] - cp[j]:
            q -= bX[l]
        merged[j] = q
        p[j] = ps.demand - (bX[j] if q is None else bX[j] + q)
    return p


@dataclass(frozen=True)
class Solution:
    """Everything computed on the way to an equilibrium."""

    network: Network
    working: Network
    removal: RemovalReport
    tree: SPTree = field(repr=False)
    merge: MergeSets = field(repr=False)
    cases: Mapping[ArcT, str] = field(repr=False)
    schedule: PriceSchedule = field(repr=False)
    equilibrium: Equilibrium


def float_network(net: Network) -> Network:
    """Same network with binary-float parameters (for the fast numeric mode)."""
    return Network(
        net.nodes,
        net.arcs,
        {k: float(v) for k, v in net.sources.items()},
        {k: (float(a), float(b)) for k, (a, b) in net.sinks.items()},
    )


@contextmanager
def _collector_paused():
    # The pipeline allocates many short-lived acyclic objects; cyclic GC
    # passes over them cost more than the solve itself on large inputs.
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


def solve_full(net: Network, *, general: bool = False, exact: bool = True) -> Solution:
    """Run the whole pipeline.

    ``exact=False`` swaps the rationals for floats.  The exact values of a
    large network carry thousands of digits (every split coefficient near
    the source depends on the whole network below it), so the float mode is
    the one to use when only approximate numbers are needed at scale.
    """
    with _collector_paused():
        return _solve_full(net, general=general, exact=exact)


def _solve_full(net: Network, *, general: bool, exact: bool) -> Solution:
    if not exact:
        net = float_network(net)
    work, report = remove_dominated_paths(net)
    tree = report.tree if report.tree is not None else decompose(work)
    ms = merge_sets(work, tree)
    cases = classify_arcs(work, ms)
    ps = backward_price(work, ms, cases, general=general)
    inner = forward_flow(work, ps)
    x = dict(inner.x)
    X = dict(inner.X)
    for a in report.removed_arcs:
        x[a] = ZERO
    for v in report.removed_nodes:
        X[v] = ZERO
    eq = Equilibrium(
        dict(sorted(x.items())),
        dict(sorted(X.items())),
        inner.p,
        {a: f > 0 for a, f in sorted(x.items())},
        report.removed_arcs,
    )
    return Solution(net, work, report, tree, ms, cases, ps, eq)


def solve(net: Network) -> Equilibrium:
    return solve_full(net).equilibrium


# --------------------------------------------------------------------------
# Verification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    where: str
    detail: str

    def __str__(self):
        return "%s at %s: %s" % (self.kind, self.where, self.detail)


@dataclass(frozen=True)
class VerificationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def marginal_profit(net, ps, cp, desc, eq, i, j, X) -> Fraction:
    """d Pi_i / d x_ij with every downstream firm re-optimizing.

    ``cp`` are parent-merging sets and ``desc`` descendant sets, both
    supplied by the caller.
    """
    cost = net.cost if i == net.source else price_at(ps, i, X)
    d = price_at(ps, j, X) - ps.b[j] * eq.x[(i, j)] - cost
    reach = desc[j]
    for h in net.buyers(i):
        xh = eq.x[(i, h)]
        if xh:
            d -= xh * sum((ps.b[l] for l in cp[h] if l in reach), ZERO)
    return d


def verify_equilibrium(
    net: Network,
    eq: Equilibrium,
    ms: Mapping | None = None,
    ps: PriceSchedule | None = None,
) -> VerificationReport:
    """Check a candidate on a shortcut-free SPG.

    Conservation, the first-order conditions of every firm (zero marginal
    profit on active arcs, nonpositive on inactive ones), consistency of the
    stated prices, and non-decreasing prices along active arcs.  Merge sets
    default to the slow path-definition route so the check does not share
    code with the solver's tree-based merge computation.
    """
    if ms is None:
        _, cp, _ = merge_sets_by_definition(net)
    else:
        cp = ms
    if ps is None:
        ps = backward_price(net)
    g = net.to_digraph()
    import networkx as nx

    desc = {v: nx.descendants(g, v) | {v} for v in net.nodes}
    out: list[Violation] = []
    s, t = net.source, net.sink
    for a in net.arcs:
        if eq.x[a] < 0:
            out.append(Violation("negative-flow", "%s->%s" % a, str(eq.x[a])))
    for v in net.nodes:
        inflow = sum((eq.x[(k, v)] for k in net.sellers(v)), ZERO)
        outflow = sum((eq.x[(v, j)] for j in net.buyers(v)), ZERO)
        if v == s:
            if outflow != eq.X[v]:
                out.append(Violation("conservation", v, "outflow %s != throughput %s" % (outflow, eq.X[v])))
        elif v == t:
            if inflow != eq.X[v]:
                out.append(Violation("conservation", v, "inflow %s != throughput %s" % (inflow, eq.X[v])))
        elif not (inflow == outflow == eq.X[v]):
            out.append(Violation("conservation", v, "in %s, out %s, X %s" % (inflow, outflow, eq.X[v])))
    X = eq.X
    for i in net.nodes:
        if i == t:
            continue
        for j in net.buyers(i):
            d = marginal_profit(net, ps, cp, desc, eq, i, j, X)
            if eq.x[(i, j)] > 0 and d != 0:
                out.append(Violation("stationarity", i, "marginal profit %s on active arc to %s" % (d, j)))
            elif eq.x[(i, j)] == 0 and d > 0:
                out.append(Violation("stationarity", i, "marginal profit %s on idle arc to %s" % (d, j)))
    for v in net.nodes:
        want = net.cost if v == s else price_at(ps, v, X)
        if eq.p.get(v) != want:
            out.append(Violation("price", v, "stated %s, price function gives %s" % (eq.p.get(v), want)))
    for i, j in net.arcs:
        if eq.x[(i, j)] > 0 and eq.p[i] > eq.p[j]:
            out.append(Violation("price-order", "%s->%s" % (i, j), "%s > %s" % (eq.p[i], eq.p[j])))
    return VerificationReport(tuple(out))


def check_conservation(net: Network, eq: Equilibrium) -> None:
    for v in net.nodes:
        if v in (net.source, net.sink):
            continue
        inflow = sum((eq.x[(k, v)] for k in net.sellers(v)), ZERO)
        outflow = sum((eq.x[(v, j)] for j in net.buyers(v)), ZERO)
        if inflow != outflow:
            raise InvariantError("flow not conserved at %s" % v)
