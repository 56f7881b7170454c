"""Command-line front end."""
from __future__ import annotations

import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from fractions import Fraction

import click

from .errors import InfeasibleError, InvariantError, NetworkError, NotSeriesParallelError
from .rational import fmt_value, parse_rational

EXIT_OK, EXIT_INVALID, EXIT_NOT_SPG, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4, 5
FORMAT_ENV = "SPGEQ_FORMAT"
FORMATS = ("table", "csv", "json")


@dataclass
class Table:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple]


def _cell(v, decimal):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, (Fraction, float)) or v is None:
        return fmt_value(v, decimal)
    return str(v)


def render(tables: list[Table], fmt: str, decimal: bool = False) -> str:
    if fmt == "json":
        doc = {t.name: [dict(zip(t.columns, (_cell(v, decimal) for v in r))) for r in t.rows] for t in tables}
        return json.dumps(doc, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for k, t in enumerate(tables):
            if len(tables) > 1:
                if k:
                    buf.write("\n")
                buf.write("# %s\n" % t.name)
            w.writerow(t.columns)
            for r in t.rows:
                w.writerow([_cell(v, decimal) for v in r])
        return buf.getvalue()
    out = []
    for t in tables:
        cells = [[_cell(v, decimal) for v in r] for r in t.rows]
        widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(t.columns)]
        out.append("== %s ==" % t.name)
        out.append("  ".join(c.ljust(w) for c, w in zip(t.columns, widths)).rstrip())
        for r in cells:
            out.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        out.append("")
    return "\n".join(out)


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _guard(fn):
    """Map library errors to exit codes with a one-line diagnostic."""

    def run(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _Fail as exc:
            code, msg = exc.code, str(exc)
        except NotSeriesParallelError as exc:
            code, msg = EXIT_NOT_SPG, "not series-parallel: %s" % exc
        except NetworkError as exc:
            code, msg = EXIT_INVALID, "invalid network: %s" % exc
        except InfeasibleError as exc:
            code, msg = EXIT_INFEASIBLE, "infeasible parameters: %s" % exc
        except InvariantError as exc:
            code, msg = EXIT_INTERNAL, "internal invariant violated: %s" % exc
        except OSError as exc:
            code, msg = EXIT_INVALID, "cannot read input: %s" % exc
        except click.ClickException:
            raise
        except Exception as exc:  # anything else is a bug, reported as such
            code, msg = EXIT_INTERNAL, "internal error: %r" % exc
        click.echo("error: " + msg, err=True)
        sys.exit(code)

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def _emit(tables, fmt, decimal, output):
    text = render(tables, fmt, decimal)
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _output_options(fn):
    fn = click.option("--output", "-o", type=click.Path(dir_okay=False), help="Write here instead of stdout.")(fn)
    fn = click.option("--decimal", is_flag=True, help="Render rationals as 12-digit decimals.")(fn)
    fn = click.option(
        "--format",
        "fmt",
        type=click.Choice(FORMATS),
        default=lambda: os.environ.get(FORMAT_ENV, "table"),
        show_default="table, or $%s" % FORMAT_ENV,
    )(fn)
    return fn


def _load(path):
    from .network import load_network

    return load_network(path)


def _rational(ctx, param, value):
    if value is None:
        return None
    try:
        return parse_rational(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def _range(text):
    """Parse lo:hi:step into an inclusive list of rationals."""
    try:
        lo, hi, step = (parse_rational(p) for p in text.split(":"))
    except ValueError:
        raise click.BadParameter("expected lo:hi:step, got %r" % text) from None
    if step <= 0 or hi < lo:
        raise click.BadParameter("need lo <= hi and a positive step")
    out, v = [], lo
    while v <= hi:
        out.append(v)
        v += step
    return out


@click.group()
def main():
    """Sequential supply-chain equilibria on series-parallel networks."""


# --------------------------------------------------------------------------


@main.command()
@click.argument("network", type=click.Path(dir_okay=False))
@_output_options
@_guard
def validate(network, fmt, decimal, output):
    """Report the structure of a network: kind, shortcuts and merge sets."""
    from .network import decompose, find_shortcuts, merge_sets, remove_dominated_paths

    net = _load(network)
    kind = net.kind
    summary = [("kind", kind), ("nodes", len(net.nodes)), ("arcs", len(net.arcs))]
    if kind == "dag":
        decompose(net)  # raises with the reduction's stopping point
    if kind != "spg":
        summary.append(("series-parallel", "n/a"))
        _emit([Table("summary", ("field", "value"), summary)], fmt, decimal, output)
        return
    work, report = remove_dominated_paths(net)
    summary += [
        ("series-parallel", True),
        ("shortcuts", " ".join("%s->%s" % a for a in report.shortcuts)),
        ("removed-arcs", " ".join("%s->%s" % a for a in report.removed_arcs)),
        ("removed-nodes", " ".join(report.removed_nodes)),
        ("shortcut-free", not find_shortcuts(work)),
    ]
    ms = merge_sets(work, report.tree)
    rows = [(v, " ".join(sorted(ms.cs[v])), " ".join(sorted(ms.cp[v]))) for v in work.nodes]
    _emit(
        [Table("summary", ("field", "value"), summary), Table("merge-sets", ("node", "self_merging", "parent_merging"), rows)],
        fmt,
        decimal,
        output,
    )


def _solution_tables(sol):
    net, eq, ps = sol.network, sol.equilibrium, sol.schedule
    rows = []
    for a in net.arcs:
        rows.append(("arc", "%s->%s" % a, eq.x[a], eq.arc_price(a), None))
    for v in net.nodes:
        rows.append(("node", v, eq.X[v], eq.p.get(v), ps.b.get(v)))
    return Table("equilibrium", ("kind", "id", "quantity", "price", "slope"), rows)


@main.command()
@click.argument("network", type=click.Path(dir_okay=False))
@click.option("--float", "use_float", is_flag=True, help="Binary floats instead of exact rationals.")
@_output_options
@_guard
def solve(network, use_float, fmt, decimal, output):
    """Solve for the equilibrium flows and prices."""
    from .flow import solve_full

    net = _load(network)
    kind = net.kind
    if kind == "smspg":
        from .extensions import smspg_equal_demand_solve

        ms = smspg_equal_demand_solve(net)
        eq = ms.equilibrium
        rows = [("arc", "%s->%s" % a, eq.x[a], eq.arc_price(a), None) for a in net.arcs]
        rows += [("node", v, eq.X[v], eq.p[v], None) for v in net.nodes]
        _emit([Table("equilibrium", ("kind", "id", "quantity", "price", "slope"), rows)], fmt, decimal, output)
        return
    if kind == "msspg":
        raise _Fail(EXIT_INFEASIBLE, "several competing sources need not have an equilibrium; see `demo msspg`")
    if kind == "dag":
        raise NotSeriesParallelError("the solver needs a series-parallel network; see `demo dag`")
    _emit([_solution_tables(solve_full(net, exact=not use_float))], fmt, decimal, output)


@main.command()
@click.argument("network", type=click.Path(dir_okay=False))
@_output_options
@_guard
def analyze(network, fmt, decimal, output):
    """Solve, then add profits, welfare, component factor and dominance checks."""
    from .analysis import check_double_utility, component_factor, node_utilities, social_welfare
    from .flow import solve_full

    net = _load(network)
    if net.kind != "spg":
        raise NotSeriesParallelError("analysis needs a single-source single-sink series-parallel network")
    sol = solve_full(net)
    work, ps, eq = sol.working, sol.schedule, sol.equilibrium
    util = node_utilities(work, ps, eq)
    w = social_welfare(work, ps, eq, util)
    cf = component_factor(work, sol.tree, ps)
    metrics = [
        ("lambda", w.lam),
        ("source_inflow", eq.X[work.source]),
        ("source_price", (net.demand + net.cost) / 2),
        ("consumer_surplus", w.consumer_surplus),
        ("social_welfare", w.sw_by_sum),
        ("welfare_routes_agree", w.agree),
        ("component_factor_laws_hold", cf.ok),
    ]
    profits = [(v, util.get(v, Fraction(0))) for v in net.nodes if v != net.sink]
    dom = [
        (r.rule, r.parent, " ".join(r.children), r.ratio, r.ok) for r in check_double_utility(work, eq, util)
    ]
    _emit(
        [
            _solution_tables(sol),
            Table("metrics", ("metric", "value"), metrics),
            Table("profits", ("node", "profit"), profits),
            Table("double-utility", ("rule", "parent", "children", "ratio", "ok"), dom),
        ],
        fmt,
        decimal,
        output,
    )


@main.command()
@click.argument("network", type=click.Path(dir_okay=False))
@click.option("--middle", required=True, help="Joining node of the series composition to swap.")
@_output_options
@_guard
def swap(network, middle, fmt, decimal, output):
    """Swap the two halves of a series composition and compare invariants."""
    from .analysis import compare_swap

    net = _load(network)
    if net.kind != "spg":
        raise NotSeriesParallelError("swap needs a series-parallel network")
    try:
        _, diff = compare_swap(net, middle)
    except (KeyError, LookupError) as exc:
        raise NetworkError("no series composition joined at %s" % middle) from exc
    names = ("lambda", "source_inflow", "social_welfare", "source_profit")
    rows = [(n, b, a, b == a) for n, b, a in zip(names, diff.before, diff.after)]
    _emit([Table("swap", ("quantity", "before", "after", "equal"), rows)], fmt, decimal, output)


@main.command()
@click.argument("network", type=click.Path(dir_okay=False))
@click.option("--param", type=click.Choice(("demand", "cost")), default="demand", show_default=True)
@click.option("--range", "span", required=True, help="lo:hi:step, inclusive.")
@_output_options
@_guard
def sweep(network, param, span, fmt, decimal, output):
    """Solve across a range of market demands or production costs."""
    from .analysis import demand_sweep

    net = _load(network)
    if net.kind != "spg":
        raise NotSeriesParallelError("sweep needs a series-parallel network")
    try:
        rows = demand_sweep(net, _range(span), param=param)
    except NetworkError as exc:
        raise InfeasibleError(str(exc)) from None
    firms = [v for v in net.nodes if v != net.sink]
    out = [(r.value, r.X_s, r.sw) + tuple(r.utilities.get(v, Fraction(0)) for v in firms) for r in rows]
    cols = (param, "source_inflow", "social_welfare") + tuple("profit_%s" % v for v in firms)
    _emit([Table("sweep", cols, out)], fmt, decimal, output)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=int, default=1000, show_default=True)
@click.option("--budget", type=int, default=12, show_default=True, help="Maximum node count.")
@click.option("--swaps", type=int, default=500, show_default=True)
@_output_options
@_guard
def oracle(seed, count, budget, swaps, fmt, decimal, output):
    """Run the randomized certification suite."""
    from .oracle import run_property_suite

    res = run_property_suite(seed, count, budget=budget, swaps=swaps)
    rows = [(name, p, f) for name, (p, f) in sorted(res.checks.items())]
    rows.append(("instances", res.passed, res.failed))
    _emit([Table("oracle", ("check", "passed", "failed"), rows)], fmt, decimal, output)
    if res.failed:
        for seed_, what in res.failures[:10]:
            click.echo("failed seed %d: %s" % (seed_, what), err=True)
        sys.exit(EXIT_INTERNAL)


def _two_market_rows(outcome):
    rows = []
    for r in (outcome.high, outcome.low):
        rows.append(
            (outcome.scenario.a1, r.name, r.feasible, r.X, r.x1, r.x2, r.pi_s, r.pi_v, r.cs, r.sw, outcome.preferred)
        )
    return rows


TWO_MARKET_COLUMNS = ("a1", "strategy", "feasible", "flow", "x1", "x2", "pi_s", "pi_v", "cs", "sw", "preferred")


@main.command("two-market")
@click.option("--network", "network", type=click.Path(dir_okay=False), help="Read the parameters from an s -> v -> {t1, t2} network.")
@click.option("--cost", callback=_rational)
@click.option("--a1", callback=_rational)
@click.option("--b1", callback=_rational)
@click.option("--a2", callback=_rational)
@click.option("--b2", callback=_rational)
@click.option("--sweep", "span", help="a1=lo:hi:step to sweep market 1's demand.")
@_output_options
@_guard
def two_market(network, cost, a1, b1, a2, b2, span, fmt, decimal, output):
    """High- versus low-price strategy of a source serving two markets."""
    from .extensions import TwoMarketScenario, two_market_analyze, two_market_sweep

    given = (cost, a1, b1, a2, b2)
    if network:
        if any(v is not None for v in given):
            raise click.UsageError("--network replaces --cost/--a1/--b1/--a2/--b2")
        sc = TwoMarketScenario.from_network(_load(network))
    elif any(v is None for v in given):
        raise click.UsageError("give --network or all of --cost, --a1, --b1, --a2, --b2")
    else:
        sc = TwoMarketScenario(*given)
    if span:
        key, _, rng = span.partition("=")
        if key != "a1" or not rng:
            raise click.BadParameter("--sweep takes a1=lo:hi:step")
        rows = []
        for pt in two_market_sweep(sc, _range(rng)):
            rows += _two_market_rows(pt.outcome)
        tables = [Table("two-market", TWO_MARKET_COLUMNS, rows)]
    else:
        out = two_market_analyze(sc)
        tables = [
            Table("two-market", TWO_MARKET_COLUMNS, _two_market_rows(out)),
            Table(
                "summary",
                ("field", "value"),
                [("preferred", out.preferred), ("multiple_equilibria", out.multiple), ("indifference_a1", out.a1_star)],
            ),
        ]
    _emit(tables, fmt, decimal, output)


@main.group()
def demo():
    """Worked examples outside the solvable class."""


@demo.command("msspg")
@click.option("--p1", default="3/2", callback=_rational, show_default=True)
@click.option("--p2", default=None, callback=_rational, help="Defaults to the choke price.")
@click.option("--rounds", type=int, default=20, show_default=True)
@click.option("--eps", default="1/100", callback=_rational, show_default=True)
@_output_options
@_guard
def demo_msspg(p1, p2, rounds, eps, fmt, decimal, output):
    """Two sources undercutting each other for one buyer."""
    from .extensions import msspg_nonexistence_demo

    tr = msspg_nonexistence_demo(p1, p2, rounds, eps)
    rows = []
    for s in tr.steps:
        d = s.deviation
        rows.append(
            (s.index, s.mover or "", s.p1, s.p2, s.u1, s.u2, d.firm if d else "", d.price if d else None, d.gain if d else None)
        )
    cols = ("step", "mover", "p1", "p2", "profit1", "profit2", "deviator", "deviation_price", "gain")
    summary = [
        ("stop", tr.stop),
        ("strictly_decreasing", tr.strictly_decreasing),
        ("deviation_at_every_profile", tr.every_profile_deviates),
    ]
    _emit([Table("trace", cols, rows), Table("summary", ("field", "value"), summary)], fmt, decimal, output)


@demo.command("dag")
@_output_options
@_guard
def demo_dag(fmt, decimal, output):
    """A small non-series-parallel network whose equilibrium is series-parallel."""
    from .extensions import dag_example_check

    r = dag_example_check()
    cases = [(c.label, c.source_profit, c.label == r.chosen) for c in r.cases]
    prices = [("p_" + k, v) for k, v in r.prices.items()]
    flows = [("%s->%s" % a, f) for a, f in r.flows.items()]
    gains = [(v, g) for v, g in r.best_response_gains.items()]
    probe_value, y, z = r.idle_arc_best
    checks = [
        ("active_subgraph_series_parallel", r.active_is_spg),
        ("no_improving_deviation", all(g <= 0 for g in r.best_response_gains.values())),
        ("b_profit_at_equilibrium", r.idle_arc_profit),
        ("b_best_profit_using_idle_arc_b->c", probe_value),
        ("b_best_split_to_c", y),
        ("b_best_split_to_d", z),
    ]
    _emit(
        [
            Table("cases", ("case", "source_profit", "chosen"), cases),
            Table("flows", ("arc", "flow"), flows),
            Table("prices", ("price", "value"), prices),
            Table("best-response", ("firm", "gain"), gains),
            Table("checks", ("check", "value"), checks),
        ],
        fmt,
        decimal,
        output,
    )


if __name__ == "__main__":
    main()
