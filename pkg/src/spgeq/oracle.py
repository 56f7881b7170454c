"""Independent certification: exact active-set LCP solving, grid best-response
checks, and a seeded random series-parallel network generator."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .errors import InvariantError
from .flow import Equilibrium, Solution, solve_full, verify_equilibrium
from .network import (
    ArcT,
    Network,
    Node,
    SPTree,
    decompose,
    find_shortcuts,
    merge_sets_by_definition,
)
from .pricing import PriceSchedule, backward_price, price_at

ZERO = Fraction(0)


# --------------------------------------------------------------------------
# Exact linear algebra
# --------------------------------------------------------------------------


def solve_linear(A: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction] | None:
    """Gauss-Jordan elimination over the rationals; None if singular."""
    n = len(A)
    M = [list(row) + [r] for row, r in zip(A, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if M[r][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        inv = 1 / M[col][col]
        M[col] = [v * inv for v in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


# --------------------------------------------------------------------------
# Allocation problem at a multi-buyer seller
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SMAllocationProblem:
    """How a seller splits its goods among buyers whose flows later re-merge.

    The marginal revenue of sending to buyer ``j`` is

        demand - const - 2 b_j x_j - 2 sum_{l in merge[j]} b_l X_l

    where ``X_l`` adds up the flows of every buyer whose merge list holds
    ``l``.  With ``total`` set, the split of a fixed quantity is sought (the
    common marginal value is then an unknown); otherwise ``const`` absorbs
    the seller's own unit cost and the quantity is free.
    """

    seller: Node
    buyers: tuple[Node, ...]
    slopes: Mapping[Node, Fraction]
    merge: Mapping[Node, tuple[Node, ...]]
    merge_slopes: Mapping[Node, Fraction]
    demand: Fraction
    const: Fraction
    total: Fraction | None = None

    def __post_init__(self):
        if self.total is not None and self.total < 0:
            raise ValueError("total must be nonnegative")
        if any(self.slopes[j] <= 0 for j in self.buyers) or any(v <= 0 for v in self.merge_slopes.values()):
            raise ValueError("slopes must be positive")

    def marginal(self, x: Mapping[Node, Fraction]) -> dict[Node, Fraction]:
        load = {l: ZERO for l in self.merge_slopes}
        for h in self.buyers:
            for l in self.merge[h]:
                load[l] += x[h]
        return {
            j: self.demand
            - self.const
            - 2 * self.slopes[j] * x[j]
            - 2 * sum((self.merge_slopes[l] * load[l] for l in self.merge[j]), ZERO)
            for j in self.buyers
        }


@dataclass(frozen=True)
class LCPResult:
    x: Mapping[Node, Fraction]
    active: tuple[Node, ...]
    tried: int


def lcp_solve(prob: SMAllocationProblem) -> LCPResult:
    """Enumerate active sets; accept the unique point meeting every
    complementarity condition."""
    buyers = prob.buyers
    budget = prob.total is not None
    if budget and prob.total == 0:
        return LCPResult({j: ZERO for j in buyers}, (), 0)
    coef = {}
    for j in buyers:
        for h in buyers:
            c = 2 * prob.slopes[j] if j == h else ZERO
            shared = set(prob.merge[j]) & set(prob.merge[h])
            c += 2 * sum((prob.merge_slopes[l] for l in shared), ZERO)
            coef[(j, h)] = c
    found: dict[tuple, tuple] = {}
    tried = 0
    sizes = range(1, len(buyers) + 1) if budget else range(0, len(buyers) + 1)
    for k in sizes:
        for act in itertools.combinations(buyers, k):
            tried += 1
            if budget:
                # unknowns x_act..., D ; rows: stationarity then budget
                A = [[coef[(j, h)] for h in act] + [Fraction(-1)] for j in act]
                A.append([Fraction(1)] * len(act) + [ZERO])
                sol = solve_linear(A, [ZERO] * len(act) + [prob.total])
                if sol is None:
                    continue
                level = sol[-1]
            else:
                A = [[coef[(j, h)] for h in act] for j in act]
                sol = solve_linear(A, [prob.demand - prob.const] * len(act)) if act else []
                if sol is None:
                    continue
                level = ZERO
            x = {j: ZERO for j in buyers}
            x.update(zip(act, sol))
            if any(v < 0 for v in x.values()):
                continue
            mr = prob.marginal(x)
            # with a budget, marginal revenue equals demand - const - D on active buyers
            target = prob.demand - prob.const - level if budget else ZERO
            if any(mr[j] > target for j in buyers if j not in act):
                continue
            if any(mr[j] != target for j in act):
                raise InvariantError("linear solve inconsistent at %s" % prob.seller)
            found.setdefault(tuple(x[j] for j in buyers), tuple(j for j in buyers if x[j] > 0))
    if not found:
        raise InvariantError("no complementary solution for seller %s" % prob.seller)
    if len(found) > 1:
        raise InvariantError("several complementary solutions for seller %s" % prob.seller)
    (vals, active), = found.items()
    return LCPResult(dict(zip(buyers, vals)), active, tried)


def allocation_problem(sol: Solution, i: Node, *, budget: bool = True) -> SMAllocationProblem:
    """The split problem faced by seller ``i`` at the computed equilibrium."""
    net, ms, ps, eq = sol.working, sol.merge, sol.schedule, sol.equilibrium
    buyers = net.buyers(i)
    merge = {j: tuple(sorted(ms.ct[(i, j)])) for j in buyers}
    ls = {l for m in merge.values() for l in m}
    X_i = eq.X[i]
    const = sum((ps.b[l] * (eq.X[l] + X_i) for l in ms.cp[i]), ZERO)
    if not budget:
        const += net.cost if i == net.source else eq.p[i]
    return SMAllocationProblem(
        i,
        buyers,
        {j: ps.b[j] for j in buyers},
        merge,
        {l: ps.b[l] for l in sorted(ls)},
        ps.demand,
        const,
        X_i if budget else None,
    )


# --------------------------------------------------------------------------
# Best-response search
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BestResponse:
    firm: Node
    base: Fraction
    best: Fraction
    deviation: Mapping[Node, Fraction]
    evaluated: int

    @property
    def gain(self) -> Fraction:
        return self.best - self.base


def _descendant_shift(net: Network, ps: PriceSchedule, i: Node, delta: Mapping[Node, Fraction]):
    d = {j: v for j, v in delta.items() if v}
    if not d:
        return d
    order = net.topological_order
    start = order.index(i)
    for v in order[start + 1 :]:
        dv = d.get(v)
        if not dv or v == net.sink:
            continue
        for w in net.buyers(v):
            d[w] = d.get(w, ZERO) + ps.alpha[(v, w)] * dv
    return d


def deviation_utility(net, ps, eq, i, y: Mapping[Node, Fraction]) -> Fraction:
    """Profit of ``i`` if it sends ``y`` and everything below re-optimizes."""
    delta = {j: y[j] - eq.x[(i, j)] for j in net.buyers(i)}
    shift = _descendant_shift(net, ps, i, delta)
    X = dict(eq.X)
    for v, dv in shift.items():
        X[v] += dv
    cost = net.cost if i == net.source else eq.p[i]
    return sum((price_at(ps, j, X) * y[j] for j in net.buyers(i)), ZERO) - cost * sum(y.values(), ZERO)


class _Responder:
    """Prices facing ``i``'s buyers as an affine map of its deviation.

    Downstream splits are fixed fractions, so a unit change on arc ``ik``
    moves each buyer price by a constant; those constants are found by
    propagating one unit deviation per buyer.
    """

    def __init__(self, net, ps, eq, i):
        self.buyers = net.buyers(i)
        self.x0 = {j: eq.x[(i, j)] for j in self.buyers}
        self.cost = net.cost if i == net.source else eq.p[i]
        self.p0 = {j: price_at(ps, j, eq.X) for j in self.buyers}
        self.slope = {}
        for k in self.buyers:
            shift = _descendant_shift(net, ps, i, {k: Fraction(1)})
            for j in self.buyers:
                dX = {v: shift.get(v, ZERO) for v in (j, *ps.cp[j])}
                self.slope[(j, k)] = ps.b[j] * dX[j] + sum((ps.b[l] * dX[l] for l in ps.cp[j]), ZERO)

    def utility(self, y):
        d = {k: y[k] - self.x0[k] for k in self.buyers}
        total = ZERO
        for j in self.buyers:
            pj = self.p0[j] - sum((self.slope[(j, k)] * d[k] for k in self.buyers if d[k]), ZERO)
            total += (pj - self.cost) * y[j]
        return total


def candidate_utility(net, eq, i) -> Fraction:
    cost = net.cost if i == net.source else eq.p[i]
    bought = eq.X[i]
    if i == net.source:
        offered = eq.offered or {}
        bought = sum((offered.get((i, j), eq.x[(i, j)]) for j in net.buyers(i)), ZERO)
    return sum((eq.p[j] * eq.x[(i, j)] for j in net.buyers(i)), ZERO) - cost * bought


SHIFTS = (Fraction(1, 64), Fraction(1, 16), Fraction(1, 4))
SCALE = Fraction(1, 8)


def _splits(buyers, base):
    yield dict(base)
    for j in buyers:
        yield {h: Fraction(int(h == j)) for h in buyers}
    for j, k in itertools.permutations(buyers, 2):
        for d in SHIFTS:
            moved = min(d, base[k])
            sh = dict(base)
            sh[j] += moved
            sh[k] -= moved
            yield sh
    for j in buyers:
        for f in (1 + SCALE, 1 - SCALE):
            sh = dict(base)
            sh[j] *= f
            tot = sum(sh.values())
            if tot:
                yield {h: v / tot for h, v in sh.items()}


def best_response_check(
    net: Network,
    eq: Equilibrium,
    firm: Node,
    *,
    schedule: PriceSchedule | None = None,
    pitch: int = 64,
) -> BestResponse:
    """Search a deviation grid for ``firm`` with all downstream firms playing
    their equilibrium responses.

    Total quantity runs in steps of 1/``pitch`` of the reference flow along
    the current split (up to twice the flow for the source; an intermediary
    cannot buy more than it was offered).  Perturbed splits (pairwise shifts,
    scalings, all-to-one) are tried at the current total and at 1/8 steps.
    The analytic stationary point is always included.
    """
    ps = schedule or backward_price(net)
    buyers = net.buyers(firm)
    is_source = firm == net.source
    ref = eq.X[firm]
    if is_source and ref == 0:
        ref = ps.X_s
    if ref == 0:
        return BestResponse(firm, ZERO, ZERO, {j: ZERO for j in buyers}, 0)
    base_share = {j: eq.x[(firm, j)] / eq.X[firm] for j in buyers} if eq.X[firm] else {
        j: ps.alpha[(firm, j)] for j in buyers
    }
    top = 2 * pitch if is_source else pitch
    candidates = [{j: base_share[j] * ref * k / pitch for j in buyers} for k in range(top + 1)]
    coarse = [ref * k / 8 for k in range(top // (pitch // 8) + 1)] if pitch >= 8 else [ref]
    for tot in sorted(set(coarse) | {eq.X[firm]}):
        for share in _splits(buyers, base_share):
            candidates.append({j: share[j] * tot for j in buyers})
    candidates.append({j: eq.x[(firm, j)] for j in buyers})
    stat_total = ps.X_s if is_source else eq.X[firm]
    candidates.append({j: ps.alpha[(firm, j)] * stat_total for j in buyers})
    base = candidate_utility(net, eq, firm)
    resp = _Responder(net, ps, eq, firm)
    best, arg = None, None
    for y in candidates:
        u = resp.utility(y)
        if best is None or u > best:
            best, arg = u, y
    return BestResponse(firm, base, best, arg, len(candidates))


# --------------------------------------------------------------------------
# Random generator
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomSPGSpec:
    seed: int
    budget: int = 12
    series_bias: float = 0.5
    exact: bool = False


def _rand_params(rng: random.Random):
    a_s = Fraction(rng.randint(1, 20), rng.randint(1, 4))
    a_t = a_s + Fraction(rng.randint(1, 40), rng.randint(1, 4))
    b_t = Fraction(rng.randint(1, 10), rng.randint(1, 5))
    return a_s, a_t, b_t


def generate_spg(spec: RandomSPGSpec) -> tuple[Network, SPTree]:
    """Grow a random simple shortcut-free SPG from the single arc s->t.

    Each step either subdivides an arc (series), replaces an arc by two
    two-arc branches (parallel), or adds a two-arc branch to a pair of nodes
    already joined by parallel branches.  No step ever creates a direct arc
    between existing nodes, so no shortcut can appear.
    """
    if spec.budget < 3:
        raise ValueError("node budget must be at least 3")
    rng = random.Random(spec.seed)
    target = spec.budget if spec.exact else rng.randint(3, spec.budget)
    arcs: list[ArcT] = [("s", "t")]
    where: dict[ArcT, int] = {("s", "t"): 0}
    pairs: list[tuple[str, str]] = []
    count = 2
    fresh = itertools.count(1)

    def add(a):
        where[a] = len(arcs)
        arcs.append(a)

    def remove(a):
        k = where.pop(a)
        last = arcs.pop()
        if k < len(arcs):
            arcs[k] = last
            where[last] = k

    def node():
        return "n%d" % next(fresh)

    while count < target:
        room = target - count
        r = rng.random()
        if r < spec.series_bias or room == 1 and not pairs:
            u, v = arcs[rng.randrange(len(arcs))]
            w = node()
            remove((u, v))
            add((u, w))
            add((w, v))
            count += 1
        elif room >= 2 and (not pairs or rng.random() < 0.5):
            u, v = arcs[rng.randrange(len(arcs))]
            w1, w2 = node(), node()
            remove((u, v))
            for w in (w1, w2):
                add((u, w))
                add((w, v))
            pairs.append((u, v))
            count += 2
        else:
            u, v = pairs[rng.randrange(len(pairs))]
            w = node()
            add((u, w))
            add((w, v))
            count += 1
    a_s, a_t, b_t = _rand_params(rng)
    nodes = sorted({x for a in arcs for x in a})
    net = Network(tuple(nodes), tuple(arcs), {"s": a_s}, {"t": (a_t, b_t)})
    return net, decompose(net)


# --------------------------------------------------------------------------
# Property suite
# --------------------------------------------------------------------------


@dataclass
class SuiteResult:
    passed: int = 0
    failed: int = 0
    failures: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    def tally(self, name, ok):
        p, f = self.checks.get(name, (0, 0))
        self.checks[name] = (p + ok, f + (not ok))
        return ok


def check_instance(net: Network, *, swap: bool = True, best_response: bool = False, rng=None) -> dict[str, bool]:
    """Run every structural, equilibrium and welfare check on one network."""
    from .analysis import check_double_utility, compare_swap, component_factor, node_utilities, social_welfare
    from .network import Series, iter_tree

    out = {}
    sol = solve_full(net)
    work, ps, eq, ms = sol.working, sol.schedule, sol.equilibrium, sol.merge
    out["shortcut-free"] = not find_shortcuts(work) and not sol.removal.removed_arcs
    cs, cp, ct = merge_sets_by_definition(work)
    out["merge-sets"] = dict(ms.cs) == cs and dict(ms.cp) == cp and dict(ms.ct) == ct
    out["verify"] = verify_equilibrium(work, eq, cp, ps).ok
    ok_alpha, ok_lcp = True, True
    for i in work.nodes:
        if len(work.buyers(i)) < 2:
            continue
        tot = sum(ps.alpha[(i, j)] for j in work.buyers(i))
        ok_alpha &= tot == 1 and all(ps.alpha[(i, j)] > 0 for j in work.buyers(i))
        res = lcp_solve(allocation_problem(sol, i))
        ok_lcp &= all(res.x[j] == eq.x[(i, j)] for j in work.buyers(i))
        res2 = lcp_solve(allocation_problem(sol, i, budget=False))
        ok_lcp &= all(res2.x[j] == eq.x[(i, j)] for j in work.buyers(i))
    out["alpha"] = ok_alpha
    out["lcp"] = ok_lcp
    util = node_utilities(work, ps, eq)
    w = social_welfare(work, ps, eq, util)
    out["welfare"] = w.agree
    out["lambda"] = w.lam >= 2 and (w.lam == 2) == (len(work.arcs) == 1)
    out["component-factor"] = component_factor(work, sol.tree, ps).ok
    out["double-utility"] = all(r.ok for r in check_double_utility(work, eq, util))
    if swap:
        mids = [n.middle for n in iter_tree(sol.tree) if isinstance(n, Series)]
        if mids:
            rng = rng or random.Random(0)
            _, diff = compare_swap(work, rng.choice(sorted(mids)))
            out["swap"] = diff.invariant
    if best_response:
        out["best-response"] = all(
            best_response_check(work, eq, i, schedule=ps).gain <= 0 for i in work.nodes if i != work.sink
        )
    return out


def run_property_suite(seed: int, count: int, *, budget: int = 12, swaps: int = 500, best_response_every: int = 10):
    rng = random.Random(seed)
    result = SuiteResult()
    for k in range(count):
        s = rng.randrange(2**32)
        net, _ = generate_spg(RandomSPGSpec(s, budget))
        try:
            checks = check_instance(
                net,
                swap=k < swaps,
                best_response=best_response_every > 0 and k % best_response_every == 0,
                rng=random.Random(s),
            )
        except Exception as exc:  # a crash is a failed instance, not a crashed suite
            checks = {"crash": False}
            result.failures.append((s, repr(exc)))
        ok = True
        for name, v in checks.items():
            ok &= result.tally(name, v)
        if ok:
            result.passed += 1
        else:
            result.failed += 1
            result.failures.append((s, sorted(n for n, v in checks.items() if not v)))
    return result
