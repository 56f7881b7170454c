"""Generalized networks: two competing markets, equal-demand multi-sink
networks, and two worked examples outside the series-parallel class."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .analysis import node_utilities
from .errors import InfeasibleError, InvariantError, NetworkError
from .flow import Equilibrium, forward_flow, solve, solve_full, verify_equilibrium
from .network import ArcT, Network, Node, classify_arcs, is_series_parallel, merge_sets
from .oracle import best_response_check
from .pricing import backward_price

ZERO = Fraction(0)


# --------------------------------------------------------------------------
# Two markets behind one intermediary
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoMarketScenario:
    """Source s (cost a_s) -> intermediary v -> markets t1 and t2."""

    a_s: Fraction
    a1: Fraction
    b1: Fraction
    a2: Fraction
    b2: Fraction

    def __post_init__(self):
        if self.b1 <= 0 or self.b2 <= 0:
            raise InfeasibleError("market slopes must be positive")
        if not (self.a1 >= self.a2 > self.a_s):
            raise InfeasibleError("need a1 >= a2 > a_s")

    @property
    def B(self):
        return 1 / (1 / self.b1 + 1 / self.b2)

    @property
    def delta(self):
        return (self.a2 - self.a_s) / (4 * self.b2)

    @classmethod
    def from_network(cls, net: Network) -> "TwoMarketScenario":
        if len(net.sinks) != 2 or len(net.sources) != 1:
            raise NetworkError("two-market analysis needs one source and two sinks")
        s = net.source
        (v,) = net.buyers(s) if len(net.buyers(s)) == 1 else (None,)
        if v is None or set(net.buyers(v)) != set(net.sinks) or len(net.nodes) != 4:
            raise NetworkError("two-market analysis needs the shape s -> v -> {t1, t2}")
        (ta, (aa, ba)), (tb, (ab, bb)) = sorted(net.sinks.items(), key=lambda kv: (-kv[1][0], kv[0]))
        return cls(net.cost, aa, ba, ab, bb)


@dataclass(frozen=True)
class StrategyResult:
    name: str
    X: object
    price_v: object
    pi_s: object
    pi_v: object
    cs: object
    sw: object
    x1: object
    x2: object
    feasible: bool


@dataclass(frozen=True)
class StrategyOutcome:
    scenario: TwoMarketScenario
    high: StrategyResult
    low: StrategyResult
    preferred: str
    multiple: bool
    a1_star: float


def _high(sc: TwoMarketScenario) -> StrategyResult:
    X = (sc.a1 - sc.a_s) / (4 * sc.b1)
    # v's first-order condition on market 1 alone fixes the price it pays
    p_v = sc.a1 - 2 * sc.b1 * X
    pi_s = (p_v - sc.a_s) * X
    pi_v = (sc.a1 - sc.b1 * X - p_v) * X
    cs = sc.b1 * X * X / 2
    # market 2 stays idle only if its top willingness to pay is below v's cost
    return StrategyResult("high", X, p_v, pi_s, pi_v, cs, pi_s + pi_v + cs, X, X - X, sc.a2 <= p_v)


def _low(sc: TwoMarketScenario) -> StrategyResult:
    B = sc.B
    X = ((sc.a1 / sc.b1 + sc.a2 / sc.b2) * B - sc.a_s) / (4 * B)
    x1 = (sc.a1 - sc.a2 + 2 * sc.b2 * X) / (2 * (sc.b1 + sc.b2))
    x2 = (2 * sc.b1 * X - sc.a1 + sc.a2) / (2 * (sc.b1 + sc.b2))
    p_v = sc.a1 - 2 * sc.b1 * x1
    if p_v != sc.a2 - 2 * sc.b2 * x2:
        raise InvariantError("marginal revenues of the two markets differ")
    pi_s = (p_v - sc.a_s) * X
    p1, p2 = sc.a1 - sc.b1 * x1, sc.a2 - sc.b2 * x2
    pi_v = (p1 - p_v) * x1 + (p2 - p_v) * x2
    cs = (sc.b1 * x1 * x1 + sc.b2 * x2 * x2) / 2
    return StrategyResult("low", X, p_v, pi_s, pi_v, cs, pi_s + pi_v + cs, x1, x2, x2 >= 0)


def sw_high_closed(sc: TwoMarketScenario):
    return 7 * (sc.a1 - sc.a_s) ** 2 / (32 * sc.b1)


def sw_low_closed(sc: TwoMarketScenario):
    B = sc.B
    X = ((sc.a1 / sc.b1 + sc.a2 / sc.b2) * B - sc.a_s) / (4 * B)
    return 3 * (sc.a1 - sc.a2) ** 2 / (8 * (sc.b1 + sc.b2)) + 7 * B * X * X / 2


def sw_gap_closed(sc: TwoMarketScenario):
    a1, a2, a_s, b1, b2 = sc.a1, sc.a2, sc.a_s, sc.b1, sc.b2
    return (5 * b2 * (a1 - a2) ** 2 + 7 * (b1 + b2) * (a2 - a_s) ** 2) / (32 * b2 * (b1 + b2))


def two_market_analyze(sc: TwoMarketScenario, *, tol: float = 0.0) -> StrategyOutcome:
    """Compare the source's high-price (market 1 only) and low-price (both
    markets) strategies.

    Each strategy's welfare is summed from its parts and checked against the
    closed forms.  ``tol`` is the relative tolerance for declaring the two
    source profits equal; exact inputs leave it at zero.
    """
    hi, lo = _high(sc), _low(sc)
    for got, want in ((hi.sw, sw_high_closed(sc)), (lo.sw, sw_low_closed(sc))):
        if not _close(got, want, 1e-12):
            raise InvariantError("welfare closed form disagrees: %s vs %s" % (got, want))
    if hi.X > lo.X:
        raise InvariantError("high-price flow exceeds low-price flow")
    tie = _close(hi.pi_s, lo.pi_s, tol) if tol else hi.pi_s == lo.pi_s
    if not lo.feasible:
        preferred = "high"
    elif not hi.feasible:
        preferred = "low"
    elif tie:
        preferred = "either"
    else:
        preferred = "high" if hi.pi_s > lo.pi_s else "low"
    multiple = preferred == "either"
    return StrategyOutcome(sc, hi, lo, preferred, multiple, indifference_demand(sc.a_s, sc.a2, sc.b1, sc.b2))


def _close(a, b, rel):
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


def indifference_demand(a_s, a2, b1, b2) -> float:
    """Market-1 demand at which the source earns the same under both strategies.

    Equal profits mean sqrt(b1) X_h = sqrt(B) (X_h + delta), which solves to
    a_s + 4 b1 sqrt(b2) delta / (sqrt(b1 + b2) - sqrt(b2)).
    """
    a_s, a2, b1, b2 = float(a_s), float(a2), float(b1), float(b2)
    delta = (a2 - a_s) / (4 * b2)
    return a_s + 4 * b1 * math.sqrt(b2) * delta / (math.sqrt(b1 + b2) - math.sqrt(b2))


def profit_gap(a1, a_s, a2, b1, b2) -> float:
    """Pi_s(high) - Pi_s(low) as a float function of a1."""
    a1, a_s, a2, b1, b2 = float(a1), float(a_s), float(a2), float(b1), float(b2)
    B = 1 / (1 / b1 + 1 / b2)
    xh = (a1 - a_s) / (4 * b1)
    xl = ((a1 / b1 + a2 / b2) * B - a_s) / (4 * B)
    return 2 * b1 * xh * xh - 2 * B * xl * xl


def indifference_by_bisection(a_s, a2, b1, b2, *, tol: float = 1e-13) -> float:
    lo = float(a2)
    if profit_gap(lo, a_s, a2, b1, b2) >= 0:
        raise InvariantError("high strategy already preferred at a1 = a2")
    step = max(float(a2) - float(a_s), 1.0)
    hi = lo + step
    while profit_gap(hi, a_s, a2, b1, b2) < 0:
        step *= 2
        hi = lo + step
    for _ in range(400):
        mid = (lo + hi) / 2
        if profit_gap(mid, a_s, a2, b1, b2) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return (lo + hi) / 2


def low_feasible_limit(a_s, a2, b1, b2):
    """Largest a1 at which market 2 still receives goods under the low price."""
    return a2 + (a2 - a_s) * (b1 + b2) / b2


def random_scenario(rng: random.Random) -> TwoMarketScenario:
    """A random rational scenario in which the low-price strategy is feasible."""
    a_s = Fraction(rng.randint(1, 40), rng.randint(1, 4))
    a2 = a_s + Fraction(rng.randint(1, 60), rng.randint(1, 4))
    b1 = Fraction(rng.randint(1, 12), rng.randint(1, 4))
    b2 = Fraction(rng.randint(1, 12), rng.randint(1, 4))
    top = low_feasible_limit(a_s, a2, b1, b2)
    a1 = a2 + (top - a2) * Fraction(rng.randint(0, 1000), 1000)
    return TwoMarketScenario(a_s, a1, b1, a2, b2)


@dataclass(frozen=True)
class SweepPoint:
    a1: Fraction
    outcome: StrategyOutcome


def two_market_sweep(sc: TwoMarketScenario, values: Iterable) -> list[SweepPoint]:
    out = []
    for v in values:
        variant = TwoMarketScenario(sc.a_s, Fraction(v), sc.b1, sc.a2, sc.b2)
        out.append(SweepPoint(variant.a1, two_market_analyze(variant)))
    return out


# --------------------------------------------------------------------------
# Equal-demand multi-sink networks
# --------------------------------------------------------------------------

VIRTUAL_SINK = "__market__"


@dataclass(frozen=True)
class MultiSinkSolution:
    network: Network
    augmented: Network
    equilibrium: Equilibrium
    market_flow: Mapping[Node, Fraction]


def _augment(net: Network) -> Network:
    if VIRTUAL_SINK in net.nodes:
        raise NetworkError("node id %s is reserved" % VIRTUAL_SINK)
    (a, _b), = {v for v in net.sinks.values()}
    arcs = tuple(net.arcs) + tuple((t, VIRTUAL_SINK) for t in net.sinks)
    return Network(net.nodes + (VIRTUAL_SINK,), arcs, net.sources, {VIRTUAL_SINK: (a, ZERO)})


def smspg_equal_demand_solve(net: Network, *, certify: bool = True) -> MultiSinkSolution:
    """Equilibrium of a multi-sink network whose markets share demand and slope.

    The markets are joined into one zero-slope virtual market, and each real
    market node keeps its own slope, so its price function is exactly the
    market's inverse demand.  The result is certified by the stationarity
    checks (market nodes are not firms and are skipped) and by the numeric
    best-response search for every firm.
    """
    if len(net.sources) != 1:
        raise NetworkError("multi-sink solver needs exactly one source")
    params = set(net.sinks.values())
    if len(params) != 1:
        raise InfeasibleError(
            "markets differ in demand or slope; only equal markets are supported "
            "(use the two-market analysis for the s -> v -> {t1, t2} shape)"
        )
    if len(net.sinks) == 1:
        eq = solve(net)
        return MultiSinkSolution(net, net, eq, {net.sink: eq.X[net.sink]})
    aug = _augment(net)
    if not is_series_parallel(aug):
        raise NetworkError("markets joined at a common sink do not form a series-parallel network")
    (_, b), = params
    ms = merge_sets(aug)
    ps = backward_price(aug, ms, classify_arcs(aug, ms), fixed_slopes={t: b for t in net.sinks})
    eq_aug = forward_flow(aug, ps)
    if certify:
        markets = set(net.sinks)
        report = verify_equilibrium(aug, eq_aug, ps=ps)
        bad = [v for v in report.violations if not (v.kind == "stationarity" and v.where in markets)]
        if bad:
            raise InvariantError("multi-sink candidate fails verification: %s" % bad[0])
        for i in aug.nodes:
            if i in markets or i == VIRTUAL_SINK:
                continue
            br = best_response_check(aug, eq_aug, i, schedule=ps, pitch=32)
            if br.gain > 0:
                raise InvariantError("firm %s gains %s by deviating" % (i, br.gain))
    keep = set(net.arcs)
    x = {a: f for a, f in eq_aug.x.items() if a in keep}
    X = {v: eq_aug.X[v] for v in net.nodes}
    p = {v: eq_aug.p[v] for v in net.nodes}
    eq = Equilibrium(x, X, p, {a: f > 0 for a, f in x.items()})
    flows = {t: X[t] for t in net.sinks}
    if any(f <= 0 for f in flows.values()):
        raise InvariantError("a market receives no goods")
    return MultiSinkSolution(net, aug, eq, flows)


# --------------------------------------------------------------------------
# Two sources competing for one buyer
# --------------------------------------------------------------------------

MSSPG_COST = Fraction(1)
MSSPG_DEMAND = Fraction(2)
MSSPG_SLOPE = Fraction(1)


def msspg_network() -> Network:
    return Network(
        ("c", "s1", "s2", "t"),
        (("s1", "c"), ("s2", "c"), ("c", "t")),
        {"s1": MSSPG_COST, "s2": MSSPG_COST},
        {"t": (MSSPG_DEMAND, MSSPG_SLOPE)},
    )


def buyer_purchase(p1: Fraction, p2: Fraction) -> tuple[Fraction, Fraction]:
    """Quantities the intermediary buys from s1 and s2 at the offered prices.

    It buys the amount at which its marginal revenue meets the lower price,
    all from the cheaper source; on a tie the order is split evenly.
    """
    low = min(p1, p2)
    total = max((MSSPG_DEMAND - low) / (2 * MSSPG_SLOPE), ZERO)
    if p1 < p2:
        x, y = total, ZERO
    elif p2 < p1:
        x, y = ZERO, total
    else:
        x = y = total / 2
    # complementarity of the buyer's problem
    for q, p in ((x, p1), (y, p2)):
        d = MSSPG_DEMAND - 2 * MSSPG_SLOPE * (x + y) - p
        if d > 0 or (q > 0 and d != 0):
            raise InvariantError("buyer allocation violates its optimality conditions")
    return x, y


def msspg_profits(p1: Fraction, p2: Fraction) -> tuple[Fraction, Fraction]:
    x, y = buyer_purchase(p1, p2)
    return (p1 - MSSPG_COST) * x, (p2 - MSSPG_COST) * y


@dataclass(frozen=True)
class Deviation:
    firm: str
    price: Fraction
    before: Fraction
    after: Fraction

    @property
    def gain(self) -> Fraction:
        return self.after - self.before


@dataclass(frozen=True)
class MSSPGStep:
    index: int
    mover: str | None
    p1: Fraction
    p2: Fraction
    u1: Fraction
    u2: Fraction
    deviation: Deviation | None


@dataclass(frozen=True)
class MSSPGTrace:
    steps: tuple[MSSPGStep, ...]
    eps: Fraction
    stop: str

    @property
    def floor_prices(self) -> list[Fraction]:
        return [min(s.p1, s.p2) for s in self.steps]

    @property
    def strictly_decreasing(self) -> bool:
        f = self.floor_prices
        return all(b < a for a, b in zip(f, f[1:]))

    @property
    def every_profile_deviates(self) -> bool:
        return all(s.deviation is not None and s.deviation.gain > 0 for s in self.steps)


def _profit_of(firm, own, rival):
    u = msspg_profits(own, rival) if firm == "s1" else msspg_profits(rival, own)[::-1]
    return u[0]


def _profitable_deviation(p1, p2) -> Deviation | None:
    """A strictly profitable unilateral price change, if one exists.

    Tries a monopoly price above the rival and an undercut halfway between
    cost and the rival's price, for both firms.
    """
    monopoly = (MSSPG_DEMAND + MSSPG_COST) / 2
    best = None
    for firm, own, rival in (("s1", p1, p2), ("s2", p2, p1)):
        before = _profit_of(firm, own, rival)
        for price in (monopoly, (rival + MSSPG_COST) / 2, rival):
            if price <= MSSPG_COST or price == own:
                continue
            after = _profit_of(firm, price, rival)
            if after > before and (best is None or after - before > best.gain):
                best = Deviation(firm, price, before, after)
    return best


def _best_response(rival: Fraction, eps: Fraction) -> Fraction | None:
    monopoly = (MSSPG_DEMAND + MSSPG_COST) / 2
    options = [p for p in (monopoly, rival - eps, rival) if p > MSSPG_COST]
    if not options:
        return None
    return max(options, key=lambda p: (msspg_profits(p, rival)[0], -p))


def msspg_nonexistence_demo(
    p1: Fraction = Fraction(3, 2),
    p2: Fraction | None = None,
    rounds: int = 20,
    eps: Fraction = Fraction(1, 100),
) -> MSSPGTrace:
    """Alternating best responses of the two sources, s2 moving first.

    ``p2`` defaults to the choke price, at which the buyer takes nothing.
    Every visited profile is paired with a profitable deviation found by
    direct profit comparison.  The run stops when undercutting on the
    ``eps`` grid no longer lowers the floor price (the cost boundary).
    """
    p1, p2 = Fraction(p1), Fraction(MSSPG_DEMAND if p2 is None else p2)
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")

    def step(k, mover, a, b):
        u1, u2 = msspg_profits(a, b)
        return MSSPGStep(k, mover, a, b, u1, u2, _profitable_deviation(a, b))

    steps = [step(0, None, p1, p2)]
    stop = "rounds"
    if steps[0].deviation is None:
        return MSSPGTrace(tuple(steps), eps, "boundary")
    for k in range(1, rounds + 1):
        mover = "s2" if k % 2 else "s1"
        rival = p1 if mover == "s2" else p2
        reply = _best_response(rival, eps)
        floor = min(p1, p2)
        if reply is None or reply >= floor:
            stop = "boundary"
            break
        if mover == "s2":
            p2 = reply
        else:
            p1 = reply
        steps.append(step(k, mover, p1, p2))
    return MSSPGTrace(tuple(steps), eps, stop)


# --------------------------------------------------------------------------
# A non-series-parallel example
# --------------------------------------------------------------------------


def dag_network() -> Network:
    return Network(
        ("a", "b", "c", "d", "s", "t"),
        (("s", "a"), ("s", "b"), ("a", "c"), ("b", "c"), ("b", "d"), ("c", "t"), ("d", "t")),
        {"s": Fraction(1)},
        {"t": (Fraction(11), Fraction(1))},
    )


DAG_CASES = (
    ("x>0, y+z=0", (("s", "a"), ("a", "c"), ("c", "t"))),
    ("x=0, y+z>0", (("s", "b"), ("b", "c"), ("b", "d"), ("c", "t"), ("d", "t"))),
    ("x,z>0, y=0", (("s", "a"), ("a", "c"), ("s", "b"), ("b", "d"), ("c", "t"), ("d", "t"))),
)


@dataclass(frozen=True)
class DagCase:
    label: str
    arcs: tuple[ArcT, ...]
    source_profit: Fraction
    equilibrium: Equilibrium


@dataclass(frozen=True)
class DagReport:
    cases: tuple[DagCase, ...]
    chosen: str
    flows: Mapping[ArcT, Fraction]
    prices: Mapping[str, Fraction]
    best_response_gains: Mapping[Node, Fraction]
    active_is_spg: bool
    idle_arc_profit: Fraction
    idle_arc_best: tuple[Fraction, Fraction, Fraction]

    @property
    def ok(self) -> bool:
        return self.active_is_spg and all(g <= 0 for g in self.best_response_gains.values())


def _b_profit_via_c(y: Fraction, z: Fraction) -> Fraction:
    """b's profit when it sends y to c and z to d, with a's offer of 8 to c
    held fixed and c, d and the market responding."""
    x = min(max((3 - z - 2 * y) / 2, ZERO), Fraction(1))
    p_bc = 11 - z - 2 * (x + y)
    p_bd = 11 - (x + y) - 2 * z
    return p_bc * y + p_bd * z - 6 * (y + z)


def dag_example_check(pitch: int = 32) -> DagReport:
    """Evaluate the three candidate active sets of the example, confirm the
    chosen one with the best-response search, and probe the idle arc b->c.

    The idle-arc probe lets b split its unit of supply between c and d while
    a keeps offering 8; its best value is reported, not asserted.
    """
    net = dag_network()
    cases = []
    for label, arcs in DAG_CASES:
        sub = net.with_arcs(arcs)
        sol = solve_full(sub)
        pi = node_utilities(sol.working, sol.schedule, sol.equilibrium)[sub.source]
        cases.append(DagCase(label, tuple(sorted(arcs)), pi, sol.equilibrium))
    best = max(cases, key=lambda c: c.source_profit)
    active = net.with_arcs(best.arcs)
    eq = best.equilibrium
    ps = backward_price(active)
    gains = {}
    for i in active.nodes:
        if i == active.sink:
            continue
        gains[i] = best_response_check(active, eq, i, schedule=ps).gain
    flows = {a: eq.x.get(a, ZERO) for a in net.arcs}
    prices = {"sa": eq.p["a"], "sb": eq.p["b"], "ac": eq.p["c"], "bd": eq.p["d"]}
    grid = [Fraction(k, pitch) for k in range(pitch + 1)]
    probe = max((_b_profit_via_c(y, z), y, z) for y in grid for z in grid if y + z <= 1)
    base = _b_profit_via_c(ZERO, eq.x[("b", "d")])
    return DagReport(
        tuple(cases),
        best.label,
        flows,
        prices,
        gains,
        is_series_parallel(active),
        base,
        probe,
    )
