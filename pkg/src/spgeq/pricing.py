"""Backward pass: affine price functions, split coefficients and source inflow.

At equilibrium every seller of node ``i`` is offered the same unit price

    p_i = a_t - b_i X_i - sum_{l in C_P(i)} b_l X_l

and the slopes ``b_i`` are computed from the sink upwards.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .errors import InvariantError
from .network import ArcT, MergeSets, Network, Node, SMGroups, classify_arcs, merge_sets

ONE = Fraction(1)


@dataclass(frozen=True)
class SMAggregate:
    """Intermediate values of the multi-merge split computation."""

    hs: tuple[Node, ...]
    c: Mapping[Node, Fraction]
    beta_group: Mapping[Node, Fraction]
    beta_buyer: Mapping[Node, Fraction]


@dataclass(frozen=True)
class PriceSchedule:
    b: Mapping[Node, Fraction]
    alpha: Mapping[ArcT, Fraction]
    cp: Mapping[Node, frozenset]
    aggregates: Mapping[Node, SMAggregate]
    demand: Fraction
    cost: Fraction
    source: Node
    sink: Node
    X_s: Fraction
    order: tuple[Node, ...] = field(default=(), compare=False)

    @property
    def lam(self) -> Fraction:
        return self.b[self.source] / self.b[self.sink]


def simple_sm_coefficients(buyers, b, cs, cp_i):
    """Slope and split for a seller whose branches all re-join at one node."""
    inv = {j: ONE / b[j] for j in buyers}
    total = sum(inv.values())
    b_i = 2 / total + 2 * sum((b[l] for l in cs - cp_i), Fraction(0)) + sum((b[l] for l in cp_i), Fraction(0))
    return b_i, {j: inv[j] / total for j in buyers}


def general_sm_coefficients(groups: SMGroups, b, cp_i):
    """Slope and split for a seller whose branches merge in stages.

    Walks the merging nodes in topological order, folding each stage into an
    aggregate slope ``c_k`` (parallel combination of the stage's buyers and
    earlier stages, plus the merging node's own slope).
    """
    hs = groups.hs
    last = hs[-1]
    c, denom = {}, {}
    for h in hs:
        d = sum((ONE / b[j] for j in groups.buyers[h]), Fraction(0))
        d += sum((ONE / c[p] for p in groups.feeders[h]), Fraction(0))
        if d == 0:
            raise InvariantError("empty merge stage %s below %s" % (h, groups.seller))
        denom[h] = d
        own = Fraction(0) if (h == last and h in cp_i) else b[h]
        c[h] = 1 / d + own
    beta_group, beta_buyer = {}, {}
    for h in hs:
        for p in groups.feeders[h]:
            beta_group[p] = (1 / c[p]) / denom[h]
        for j in groups.buyers[h]:
            beta_buyer[j] = (1 / b[j]) / denom[h]
    alpha = {}
    for h in hs:
        for j in groups.buyers[h]:
            a = beta_buyer[j]
            for p in groups.chain(j)[:-1]:
                a *= beta_group[p]
            alpha[j] = a
    b_i = 2 * c[last] + sum((b[l] for l in cp_i), Fraction(0))
    return b_i, alpha, SMAggregate(hs, c, beta_group, beta_buyer)


def backward_price(
    net: Network,
    ms: MergeSets | None = None,
    cases: Mapping[ArcT, str] | None = None,
    *,
    tie_break: str = "id",
    general: bool = False,
    fixed_slopes: Mapping[Node, Fraction] | None = None,
) -> PriceSchedule:
    """Compute every node's price slope in reverse topological order.

    ``general=True`` routes single-stage sellers through the multi-stage
    formula as well.  ``fixed_slopes`` pins the slope of chosen nodes instead
    of deriving it (used for markets feeding a virtual sink).
    """
    if ms is None:
        ms = merge_sets(net)
    if cases is None:
        cases = classify_arcs(net, ms)
    fixed = dict(fixed_slopes or {})
    order = _reverse_topological(net, tie_break)
    s, t = net.source, net.sink
    cp = ms.cp
    b: dict[Node, Fraction] = {t: net.slope}
    alpha: dict[ArcT, Fraction] = {}
    aggregates: dict[Node, SMAggregate] = {}
    for i in order:
        if i == t:
            continue
        buyers = net.buyers(i)
        if len(buyers) == 1:
            j = buyers[0]
            extra = sum((b[l] for l in cp[j]), Fraction(0))
            if cases[(i, j)] == "SS":
                if cp[j] != cp[i]:
                    raise InvariantError("merge sets of %s and %s differ across a single arc" % (i, j))
                b_i = 2 * b[j] + extra
            else:
                if j in cp[j] or cp[i] != cp[j] | {j}:
                    raise InvariantError("merge sets violate the multi-seller identity at %s->%s" % (i, j))
                b_i = b[j] + extra
            alpha[(i, j)] = ONE
        else:
            for j in buyers:
                if cp[i] & ms.ct[(i, j)] or cp[j] != cp[i] | ms.ct[(i, j)]:
                    raise InvariantError("merge sets violate the split identity at %s->%s" % (i, j))
            if len(ms.cs[i]) == 1 and not general:
                b_i, split = simple_sm_coefficients(buyers, b, ms.cs[i], cp[i])
            else:
                b_i, split, agg = general_sm_coefficients(ms.sm[i], b, cp[i])
                aggregates[i] = agg
            for j, a in split.items():
                alpha[(i, j)] = a
        b[i] = fixed.get(i, b_i)
    for i, v in b.items():
        if v <= 0 and i != t:
            raise InvariantError("nonpositive slope at %s" % i)
    if net.slope > 0 and b[s] < 2 * net.slope:
        raise InvariantError("source slope below twice the market slope")
    X_s = (net.demand - net.cost) / b[s]
    return PriceSchedule(
        {v: b[v] for v in net.nodes},
        dict(sorted(alpha.items())),
        dict(cp),
        aggregates,
        net.demand,
        net.cost,
        s,
        t,
        X_s,
        tuple(reversed(order)),
    )


def _reverse_topological(net: Network, tie_break: str) -> list[Node]:
    if tie_break == "id":
        return list(reversed(net.topological_order))
    if tie_break != "reverse":
        raise ValueError("tie_break must be 'id' or 'reverse'")
    # Kahn's algorithm from the sink backwards, largest id first.
    import heapq

    outdeg = {v: len(net.buyers(v)) for v in net.nodes}
    heap = [_Rev(v) for v in net.nodes if outdeg[v] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        v = heapq.heappop(heap).v
        out.append(v)
        for u in net.sellers(v):
            outdeg[u] -= 1
            if outdeg[u] == 0:
                heapq.heappush(heap, _Rev(u))
    return out


@dataclass(frozen=True, order=False)
class _Rev:
    v: str

    def __lt__(self, other):
        return self.v > other.v


def price_at(ps: PriceSchedule, i: Node, X: Mapping[Node, Fraction]) -> Fraction:
    """Unit price offered to ``i``'s sellers given throughputs ``X``."""
    try:
        value = ps.demand - ps.b[i] * X[i]
        for l in ps.cp[i]:
            value -= ps.b[l] * X[l]
    except KeyError as exc:
        raise ValueError("price of %s needs the throughput of %s" % (i, exc.args[0])) from None
    return value
