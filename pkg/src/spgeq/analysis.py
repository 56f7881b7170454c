"""Comparative statics: utilities, dominance, welfare and the component factor."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import InvariantError, NetworkError
from .flow import Equilibrium, Solution, solve_full
from .network import (
    Arc,
    Network,
    Node,
    Parallel,
    Series,
    SPTree,
    decompose,
    dominating_parents,
    evaluate,
    find_series,
    iter_tree,
    tree_nodes,
)
from .pricing import PriceSchedule, backward_price

ZERO = Fraction(0)
HALF = Fraction(1, 2)


def node_utilities(net: Network, ps: PriceSchedule, eq: Equilibrium) -> dict[Node, Fraction]:
    """Closed-form profit of every firm, checked against revenue minus cost."""
    out = {}
    for i in net.nodes:
        if i == net.sink:
            continue
        closed = HALF * (ps.b[i] + sum((ps.b[l] for l in ps.cp[i]), ZERO)) * eq.X[i] ** 2
        cost = net.cost if i == net.source else eq.p[i]
        direct = sum((eq.p[j] * eq.x[(i, j)] for j in net.buyers(i)), ZERO) - cost * eq.X[i]
        if closed != direct:
            raise InvariantError("utility of %s: closed form %s, direct %s" % (i, closed, direct))
        out[i] = closed
    return out


def source_price(net: Network, ps: PriceSchedule | None = None) -> Fraction:
    """The common unit price the source charges each of its buyers."""
    return (net.demand + net.cost) / 2


@dataclass(frozen=True)
class DoubleUtility:
    rule: str
    parent: Node
    children: tuple[Node, ...]
    ratio: Fraction | None
    ok: bool


def check_double_utility(net: Network, eq: Equilibrium, utilities: Mapping[Node, Fraction]) -> list[DoubleUtility]:
    """Dominating parents earn at least twice their dominated children, and
    single-seller buyers together earn at most half of their seller.

    The market is not a firm and is skipped as a child.
    """
    rows = []
    doms = dominating_parents(net)
    for j in net.nodes:
        if j == net.sink:
            continue
        for i in sorted(doms[j]):
            rows.append(_ratio_row("dominator", i, (j,), utilities))
    for i in net.nodes:
        buyers = net.buyers(i)
        if i == net.sink or net.sink in buyers:
            continue
        if all(len(net.sellers(j)) == 1 for j in buyers):
            rows.append(_ratio_row("single-seller-buyers", i, buyers, utilities))
    return rows


def _ratio_row(rule, i, children, utilities):
    below = sum((utilities[j] for j in children), ZERO)
    ratio = utilities[i] / below if below else None
    return DoubleUtility(rule, i, tuple(children), ratio, utilities[i] >= 2 * below)


@dataclass(frozen=True)
class Welfare:
    consumer_surplus: Fraction
    sw_by_sum: Fraction
    sw_by_flow: Fraction
    sw_by_lambda: Fraction
    lam: Fraction

    @property
    def agree(self) -> bool:
        return self.sw_by_sum == self.sw_by_flow == self.sw_by_lambda


def social_welfare(net: Network, ps: PriceSchedule, eq: Equilibrium, utilities=None) -> Welfare:
    if utilities is None:
        utilities = node_utilities(net, ps, eq)
    a_s, a_t, b_t = net.cost, net.demand, net.slope
    X_t, X_s = eq.X[net.sink], eq.X[net.source]
    cs = HALF * b_t * X_t**2
    lam = ps.b[net.source] / b_t
    w = Welfare(
        cs,
        sum(utilities.values(), ZERO) + cs,
        (a_t - a_s - b_t / 2 * X_s) * X_s,
        (a_t - a_s) ** 2 * (1 - 1 / (2 * lam)) / (lam * b_t),
        lam,
    )
    if not w.agree:
        raise InvariantError("welfare computations disagree: %s" % (w,))
    return w


def welfare_of_lambda(lam, gap=1, slope=1):
    """Welfare as a function of the component factor (for plotting/sweeps)."""
    return gap**2 * (1 - 1 / (2 * lam)) / (lam * slope)


# --------------------------------------------------------------------------
# Component factor
# --------------------------------------------------------------------------


def subnetwork(tree: SPTree) -> Network:
    """The sub-network spanned by a decomposition node, as a standalone
    network with unit cost, demand 2 and unit slope."""
    arcs = tuple(sorted(evaluate(tree)))
    return Network(
        tuple(tree_nodes(tree)),
        arcs,
        {tree.source: Fraction(1)},
        {tree.sink: (Fraction(2), Fraction(1))},
    )


def subtree_lambda(tree: SPTree) -> Fraction:
    if isinstance(tree, Arc):
        return Fraction(2)
    sub = subnetwork(tree)
    return backward_price(sub).lam


@dataclass(frozen=True)
class FactorRow:
    kind: str
    source: Node
    sink: Node
    lam: Fraction
    composed: Fraction | None
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.composed is None or self.composed == self.lam


@dataclass(frozen=True)
class ComponentFactors:
    lam: Fraction
    rows: tuple[FactorRow, ...]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)


def compose_parallel(ly: Fraction, lz: Fraction) -> Fraction:
    return (ly - 2) * (lz - 2) / (ly + lz - 4) + 2


def component_factor(net: Network, tree: SPTree | None = None, ps: PriceSchedule | None = None) -> ComponentFactors:
    """Component factor of the network and of every decomposition node,
    each checked against the series/parallel composition laws."""
    if tree is None:
        tree = decompose(net)
    if ps is None:
        ps = backward_price(net)
    lam_cache: dict[int, Fraction] = {}
    nodes = list(iter_tree(tree))
    for node in reversed(nodes):
        lam_cache[id(node)] = subtree_lambda(node)
    rows = []
    for node in nodes:
        lam = lam_cache[id(node)]
        if isinstance(node, Arc):
            rows.append(FactorRow("arc", node.source, node.sink, lam, None))
        elif isinstance(node, Series):
            composed = lam_cache[id(node.left)] * lam_cache[id(node.right)]
            rows.append(FactorRow("series", node.source, node.sink, lam, composed))
        else:
            if isinstance(node.left, Arc) or isinstance(node.right, Arc):
                rows.append(FactorRow("parallel", node.source, node.sink, lam, None, "skipped: a side is a bare arc"))
            else:
                composed = compose_parallel(lam_cache[id(node.left)], lam_cache[id(node.right)])
                rows.append(FactorRow("parallel", node.source, node.sink, lam, composed))
    whole = ps.lam
    if whole != lam_cache[id(tree)]:
        raise InvariantError("component factor depends on the market parameters")
    return ComponentFactors(whole, tuple(rows))


# --------------------------------------------------------------------------
# Series swap
# --------------------------------------------------------------------------


def swap_series(net: Network, tree: SPTree | None, middle: Node) -> Network:
    """Exchange the two halves of the series composition joined at ``middle``.

    The halves keep their interior node ids; the joining node keeps its id.
    """
    if tree is None:
        tree = decompose(net)
    node = find_series(tree, middle)
    a, b, m = node.source, node.sink, node.middle
    left, right = evaluate(node.left), evaluate(node.right)

    def ren(arc, mapping):
        return tuple(mapping.get(v, v) for v in arc)

    new_right_part = {ren(e, {m: a, b: m}) for e in right}
    new_left_part = {ren(e, {a: m, m: b}) for e in left}
    inside = left | right
    arcs = [e for e in net.arcs if e not in inside] + sorted(new_right_part | new_left_part)
    return Network(net.nodes, tuple(arcs), net.sources, net.sinks)


@dataclass(frozen=True)
class SwapDiff:
    before: tuple
    after: tuple

    @property
    def invariant(self) -> bool:
        return self.before == self.after


def swap_invariants(sol: Solution) -> tuple:
    """(lambda, X_s, SW, Pi_s) of a solved shortcut-free network."""
    net, ps, eq = sol.working, sol.schedule, sol.equilibrium
    util = node_utilities(net, ps, eq)
    w = social_welfare(net, ps, eq, util)
    return (w.lam, eq.X[net.source], w.sw_by_sum, util[net.source])


def compare_swap(net: Network, middle: Node) -> tuple[Network, SwapDiff]:
    sol = solve_full(net)
    if sol.removal.removed_arcs:
        raise NetworkError("series swap needs a shortcut-free network")
    swapped = swap_series(sol.working, sol.tree, middle)
    return swapped, SwapDiff(swap_invariants(sol), swap_invariants(solve_full(swapped)))


# --------------------------------------------------------------------------
# Demand sweep
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    value: Fraction
    X_s: Fraction
    sw: Fraction
    utilities: Mapping[Node, Fraction]


def demand_sweep(net: Network, values: Iterable, *, param: str = "demand") -> list[SweepRow]:
    """Solve across market demands (or production costs) and assert that flow,
    welfare and every firm's profit move in the predicted direction."""
    if param not in ("demand", "cost"):
        raise ValueError("param must be 'demand' or 'cost'")
    rows = []
    for v in sorted({Fraction(v) for v in values}):
        variant = net.with_params(**{param: v})
        if variant.demand <= variant.cost:
            raise NetworkError("demand %s does not exceed cost %s" % (variant.demand, variant.cost))
        sol = solve_full(variant)
        util = node_utilities(sol.working, sol.schedule, sol.equilibrium)
        w = social_welfare(sol.working, sol.schedule, sol.equilibrium, util)
        rows.append(SweepRow(v, sol.equilibrium.X[variant.source], w.sw_by_sum, util))
    sign = 1 if param == "demand" else -1
    for prev, cur in zip(rows, rows[1:]):
        pairs = [(prev.X_s, cur.X_s), (prev.sw, cur.sw)] + [(prev.utilities[k], cur.utilities[k]) for k in cur.utilities]
        for before, after in pairs:
            if (after - before) * sign <= 0:
                raise InvariantError("sweep not strictly monotone between %s and %s" % (prev.value, cur.value))
    return rows
