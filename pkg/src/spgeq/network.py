"""Network model, parsing, series-parallel decomposition and merge structure.

A network is a simple DAG with one producer (source) and one end market
(sink).  Extension kinds carry several sinks or several sources.  All
monetary and slope parameters are kept as exact ``Fraction`` values.
"""
from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Union

import networkx as nx

from .errors import InvariantError, NetworkError, NotSeriesParallelError
from .rational import parse_rational, fmt_rational

Node = str
ArcT = tuple[str, str]


# --------------------------------------------------------------------------
# Network
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Network:
    """Annotated supply-chain DAG.

    ``sources`` maps producer id -> production cost; ``sinks`` maps market id
    -> (demand, slope).  The usual single-source single-sink case has one
    entry in each.
    """

    nodes: tuple[Node, ...]
    arcs: tuple[ArcT, ...]
    sources: Mapping[Node, Fraction]
    sinks: Mapping[Node, tuple[Fraction, Fraction]]
    _succ: dict = field(init=False, repr=False, compare=False)
    _pred: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes)))
        object.__setattr__(self, "arcs", tuple(sorted(self.arcs)))
        object.__setattr__(self, "sources", dict(sorted(self.sources.items())))
        object.__setattr__(self, "sinks", dict(sorted(self.sinks.items())))
        succ = {v: [] for v in self.nodes}
        pred = {v: [] for v in self.nodes}
        for u, v in self.arcs:
            succ[u].append(v)
            pred[v].append(u)
        object.__setattr__(self, "_succ", {k: tuple(sorted(v)) for k, v in succ.items()})
        object.__setattr__(self, "_pred", {k: tuple(sorted(v)) for k, v in pred.items()})

    # -- single source / sink accessors ---------------------------------
    @property
    def source(self) -> Node:
        if len(self.sources) != 1:
            raise NetworkError("network has %d sources" % len(self.sources))
        return next(iter(self.sources))

    @property
    def sink(self) -> Node:
        if len(self.sinks) != 1:
            raise NetworkError("network has %d sinks" % len(self.sinks))
        return next(iter(self.sinks))

    @property
    def cost(self) -> Fraction:
        return self.sources[self.source]

    @property
    def demand(self) -> Fraction:
        return self.sinks[self.sink][0]

    @property
    def slope(self) -> Fraction:
        return self.sinks[self.sink][1]

    def buyers(self, v: Node) -> tuple[Node, ...]:
        return self._succ[v]

    def sellers(self, v: Node) -> tuple[Node, ...]:
        return self._pred[v]

    @property
    def kind(self) -> str:
        if len(self.sinks) > 1:
            return "smspg"
        if len(self.sources) > 1:
            return "msspg"
        return "spg" if is_series_parallel(self) else "dag"

    @cached_property
    def topological_order(self) -> tuple[Node, ...]:
        return topological_order(self)

    def with_params(self, *, cost=None, demand=None, slope=None) -> "Network":
        s, t = self.source, self.sink
        a_t, b_t = self.sinks[t]
        return Network(
            self.nodes,
            self.arcs,
            {s: self.cost if cost is None else Fraction(cost)},
            {t: (a_t if demand is None else Fraction(demand), b_t if slope is None else Fraction(slope))},
        )

    def with_arcs(self, arcs: Iterable[ArcT]) -> "Network":
        arcs = tuple(arcs)
        used = {v for a in arcs for v in a} | set(self.sources) | set(self.sinks)
        return Network(tuple(v for v in self.nodes if v in used), arcs, self.sources, self.sinks)

    def to_digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.arcs)
        return g


def make_network(arcs, *, cost, demand, slope, source="s", sink="t") -> Network:
    """Convenience constructor for single-source single-sink networks."""
    arcs = tuple((str(u), str(v)) for u, v in arcs)
    nodes = {v for a in arcs for v in a} | {source, sink}
    net = Network(tuple(nodes), arcs, {source: Fraction(cost)}, {sink: (Fraction(demand), Fraction(slope))})
    validate(net)
    return net


def topological_order(net: Network) -> tuple[Node, ...]:
    indeg = {v: len(net.sellers(v)) for v in net.nodes}
    heap = [v for v in net.nodes if indeg[v] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        v = heapq.heappop(heap)
        out.append(v)
        for w in net.buyers(v):
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, w)
    if len(out) != len(net.nodes):
        cyc = sorted(v for v in net.nodes if indeg[v] > 0)
        raise NetworkError("cycle through nodes %s" % ", ".join(cyc))
    return tuple(out)


def validate(net: Network) -> Network:
    """Check the structural and parameter invariants of a network."""
    seen = set()
    for a in net.arcs:
        u, v = a
        if u not in net._succ or v not in net._succ:
            raise NetworkError("arc %s->%s references an unknown node" % a)
        if u == v:
            raise NetworkError("self-loop at %s" % u)
        if a in seen:
            raise NetworkError("parallel arc %s->%s" % a)
        seen.add(a)
    if not net.sources or not net.sinks:
        raise NetworkError("network needs at least one source and one sink")
    for v in list(net.sources) + list(net.sinks):
        if v not in net._succ:
            raise NetworkError("terminal %s is not a listed node" % v)
    if set(net.sources) & set(net.sinks):
        raise NetworkError("a node cannot be both source and sink")
    topological_order(net)
    for v in net.nodes:
        if v in net.sources:
            if net.sellers(v):
                raise NetworkError("source %s has incoming arcs" % v)
            if not net.buyers(v):
                raise NetworkError("source %s has no outgoing arcs" % v)
        elif v in net.sinks:
            if net.buyers(v):
                raise NetworkError("sink %s has outgoing arcs" % v)
            if not net.sellers(v):
                raise NetworkError("sink %s has no incoming arcs" % v)
        elif not net.sellers(v) or not net.buyers(v):
            raise NetworkError("intermediary %s needs both incoming and outgoing arcs" % v)
    for v, a_s in net.sources.items():
        if a_s <= 0:
            raise NetworkError("source %s: cost must be positive" % v)
    for v, (a_t, b_t) in net.sinks.items():
        if b_t <= 0:
            raise NetworkError("sink %s: slope must be positive" % v)
        for u, a_s in net.sources.items():
            if a_t <= a_s:
                raise NetworkError("sink %s: demand must exceed the cost of source %s" % (v, u))
    return net


# --------------------------------------------------------------------------
# Document I/O
# --------------------------------------------------------------------------


def parse_network(text: Union[str, bytes, Mapping]) -> Network:
    """Parse a JSON network document into a validated :class:`Network`."""
    if isinstance(text, Mapping):
        doc = text
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise NetworkError("malformed document: %s" % exc) from None
    if not isinstance(doc, Mapping):
        raise NetworkError("malformed document: top level must be an object")
    try:
        raw_nodes = [str(v) for v in doc["nodes"]]
        raw_arcs = [tuple(str(x) for x in a) for a in doc["arcs"]]
    except (KeyError, TypeError) as exc:
        raise NetworkError("malformed document: missing or invalid field %s" % exc) from None
    dup = sorted({v for v in raw_nodes if raw_nodes.count(v) > 1})
    if dup:
        raise NetworkError("duplicate node id %s" % dup[0])
    for a in raw_arcs:
        if len(a) != 2:
            raise NetworkError("malformed arc %r" % (a,))

    def _num(obj, key, where):
        if key not in obj:
            raise NetworkError("malformed document: %s lacks %r" % (where, key))
        try:
            return parse_rational(obj[key])
        except ValueError as exc:
            raise NetworkError("%s.%s: %s" % (where, key, exc)) from None

    srcs = doc.get("sources") or ([doc["source"]] if "source" in doc else [])
    snks = doc.get("sinks") or ([doc["sink"]] if "sink" in doc else [])
    try:
        sources = {str(d["id"]): _num(d, "cost", "source %s" % d["id"]) for d in srcs}
        sinks = {
            str(d["id"]): (_num(d, "demand", "sink %s" % d["id"]), _num(d, "slope", "sink %s" % d["id"]))
            for d in snks
        }
    except (KeyError, TypeError) as exc:
        raise NetworkError("malformed document: terminal lacks %s" % exc) from None
    if len(sources) != len(srcs) or len(sinks) != len(snks):
        raise NetworkError("duplicate terminal id")
    known = set(raw_nodes)
    for a in raw_arcs:
        for v in a:
            if v not in known:
                raise NetworkError("arc %s->%s references unknown node %s" % (a[0], a[1], v))
    if len(set(raw_arcs)) != len(raw_arcs):
        bad = next(a for a in raw_arcs if raw_arcs.count(a) > 1)
        raise NetworkError("parallel arc %s->%s" % bad)
    net = Network(tuple(raw_nodes), tuple(raw_arcs), sources, sinks)
    return validate(net)


def network_to_doc(net: Network) -> dict:
    doc: dict = {"nodes": list(net.nodes)}
    if len(net.sources) == 1:
        s = net.source
        doc["source"] = {"id": s, "cost": fmt_rational(net.cost)}
    else:
        doc["sources"] = [{"id": v, "cost": fmt_rational(c)} for v, c in net.sources.items()]
    if len(net.sinks) == 1:
        t = net.sink
        doc["sink"] = {"id": t, "demand": fmt_rational(net.demand), "slope": fmt_rational(net.slope)}
    else:
        doc["sinks"] = [
            {"id": v, "demand": fmt_rational(a), "slope": fmt_rational(b)} for v, (a, b) in net.sinks.items()
        ]
    doc["arcs"] = [list(a) for a in net.arcs]
    return doc


def serialize_network(net: Network) -> str:
    return json.dumps(network_to_doc(net), indent=2)


def load_network(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


# --------------------------------------------------------------------------
# Series-parallel decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Arc:
    source: Node
    sink: Node

    @property
    def arc(self) -> ArcT:
        return (self.source, self.sink)


@dataclass(frozen=True, eq=False)
class Series:
    left: "SPTree"
    right: "SPTree"
    source: Node
    sink: Node

    @property
    def middle(self) -> Node:
        return self.left.sink


@dataclass(frozen=True, eq=False)
class Parallel:
    left: "SPTree"
    right: "SPTree"
    source: Node
    sink: Node


SPTree = Union[Arc, Series, Parallel]


def decompose(net: Network) -> SPTree:
    """Recognize a two-terminal series-parallel DAG and return its tree.

    Works by repeatedly contracting interior nodes of in/out degree one and
    merging the duplicate arcs this creates.  Raises
    :class:`NotSeriesParallelError` when the reduction gets stuck.
    """
    s, t = net.source, net.sink
    ends: dict[int, ArcT] = {}
    tree: dict[int, SPTree] = {}
    out_arcs: dict[Node, set[int]] = {v: set() for v in net.nodes}
    in_arcs: dict[Node, set[int]] = {v: set() for v in net.nodes}
    between: dict[ArcT, int] = {}
    counter = 0
    queue: deque = deque()

    def add(u, v, sub):
        nonlocal counter
        e = between.get((u, v))
        if e is not None:
            tree[e] = Parallel(tree[e], sub, u, v)
            queue.append(u)
            queue.append(v)
            return
        counter += 1
        ends[counter] = (u, v)
        tree[counter] = sub
        out_arcs[u].add(counter)
        in_arcs[v].add(counter)
        between[(u, v)] = counter

    def drop(e):
        u, v = ends.pop(e)
        out_arcs[u].discard(e)
        in_arcs[v].discard(e)
        del between[(u, v)]
        return tree.pop(e)

    for u, v in net.arcs:
        add(u, v, Arc(u, v))
    queue.extend(v for v in net.topological_order if v not in (s, t))
    while queue:
        m = queue.popleft()
        if m in (s, t) or len(in_arcs[m]) != 1 or len(out_arcs[m]) != 1:
            continue
        e1 = next(iter(in_arcs[m]))
        e2 = next(iter(out_arcs[m]))
        u, v = ends[e1][0], ends[e2][1]
        left, right = drop(e1), drop(e2)
        add(u, v, Series(left, right, u, v))
        queue.append(u)
        queue.append(v)
    if len(ends) == 1 and between.get((s, t)) is not None:
        return tree[between[(s, t)]]
    raise NotSeriesParallelError("network is not series-parallel (%d arcs left after reduction)" % len(ends))


def is_series_parallel(net: Network) -> bool:
    if len(net.sources) != 1 or len(net.sinks) != 1:
        return False
    try:
        decompose(net)
    except NotSeriesParallelError:
        return False
    return True


def iter_tree(tree: SPTree) -> Iterator[SPTree]:
    """Pre-order traversal without recursion."""
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        if not isinstance(node, Arc):
            stack.append(node.right)
            stack.append(node.left)


def evaluate(tree: SPTree) -> set[ArcT]:
    """Arc set obtained by carrying out the compositions of ``tree``."""
    arcs = set()
    for node in iter_tree(tree):
        if isinstance(node, Arc):
            arcs.add(node.arc)
        else:
            l, r = node.left, node.right
            if isinstance(node, Series):
                ok = l.source == node.source and r.sink == node.sink and l.sink == r.source
            else:
                ok = (l.source, l.sink) == (r.source, r.sink) == (node.source, node.sink)
            if not ok:
                raise InvariantError("inconsistent terminals in decomposition node")
    return arcs


def tree_nodes(tree: SPTree) -> set[Node]:
    return {v for a in evaluate(tree) for v in a}


def find_series(tree: SPTree, middle: Node) -> Series:
    for node in iter_tree(tree):
        if isinstance(node, Series) and node.middle == middle:
            return node
    raise NetworkError("no series composition joins at node %s" % middle)


def parallel_children(group: Parallel) -> list[SPTree]:
    """Flatten nested parallel compositions sharing the same terminals."""
    out, stack = [], [group]
    while stack:
        node = stack.pop()
        if isinstance(node, Parallel):
            stack.append(node.right)
            stack.append(node.left)
        else:
            out.append(node)
    return out


def parallel_groups(tree: SPTree) -> Iterator[tuple[Parallel, list[SPTree], tuple[Node, ...]]]:
    """Yield each maximal parallel group, its flattened children and the
    sinks of the groups strictly enclosing it."""
    stack: list[tuple[SPTree, tuple[Node, ...]]] = [(tree, ())]
    while stack:
        node, enclosing = stack.pop()
        if isinstance(node, Arc):
            continue
        if isinstance(node, Series):
            stack.append((node.right, enclosing))
            stack.append((node.left, enclosing))
            continue
        kids = parallel_children(node)
        yield node, kids, enclosing
        inner = enclosing + (node.sink,)
        for k in reversed(kids):
            stack.append((k, inner))


# --------------------------------------------------------------------------
# Shortcuts
# --------------------------------------------------------------------------


def find_shortcuts(net: Network) -> list[ArcT]:
    """Arcs ``ij`` for which another ``i -> j`` path exists (by search)."""
    out = []
    for i, j in net.arcs:
        stack = [b for b in net.buyers(i) if b != j]
        seen = set(stack)
        while stack:
            v = stack.pop()
            if v == j:
                out.append((i, j))
                break
            for w in net.buyers(v):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
    return out


@dataclass(frozen=True)
class RemovalReport:
    shortcuts: tuple[ArcT, ...]
    removed_arcs: tuple[ArcT, ...]
    removed_nodes: tuple[Node, ...]
    passes: int
    tree: "SPTree | None" = field(default=None, repr=False, compare=False)


def _shortcut_groups(tree: SPTree):
    """Outermost parallel groups that contain a bare arc child."""
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Arc):
            continue
        if isinstance(node, Series):
            stack.extend((node.right, node.left))
            continue
        kids = parallel_children(node)
        bare = [k for k in kids if isinstance(k, Arc)]
        if bare:
            yield bare[0], [k for k in kids if k is not bare[0]]
        else:
            stack.extend(reversed(kids))


def remove_dominated_paths(net: Network) -> tuple[Network, RemovalReport]:
    """Delete every path dominated by a shortcut arc, to a fixed point."""
    shortcuts, removed = [], set()
    passes = 0
    work = net
    while True:
        tree = decompose(work)
        found = list(_shortcut_groups(tree))
        passes += 1
        if not found:
            break
        drop = set()
        for arc, others in found:
            shortcuts.append(arc.arc)
            for o in others:
                drop |= evaluate(o)
        removed |= drop
        work = work.with_arcs(a for a in work.arcs if a not in drop)
    kept = set(work.nodes)
    gone = tuple(v for v in net.nodes if v not in kept)
    report = RemovalReport(tuple(sorted(shortcuts)), tuple(sorted(removed)), gone, passes, tree)
    return work, report


# --------------------------------------------------------------------------
# Merge sets and arc cases
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SMGroups:
    """Merging structure below a multi-buyer seller.

    ``hs`` lists the self-merging nodes in topological order (the last one
    is where every branch has re-joined).  ``buyers[h]`` are the buyers whose
    flow first merges at ``h``; ``feeders[h]`` are the earlier merging nodes
    that flow straight into ``h``.
    """

    seller: Node
    hs: tuple[Node, ...]
    buyers: Mapping[Node, tuple[Node, ...]]
    feeders: Mapping[Node, tuple[Node, ...]]

    def parent_of(self, h: Node) -> Node | None:
        for k, hs in self.feeders.items():
            if h in hs:
                return k
        return None

    def chain(self, buyer: Node) -> tuple[Node, ...]:
        """Merging nodes reached by ``buyer``'s flow, nearest first."""
        h = next(k for k, bs in self.buyers.items() if buyer in bs)
        out = [h]
        while (h := self.parent_of(h)) is not None:
            out.append(h)
        return tuple(out)


@dataclass(frozen=True)
class MergeSets:
    """Self-merging (``cs``), parent-merging (``cp``) and internal (``ct``)
    merge sets of a shortcut-free SPG."""

    cs: Mapping[Node, frozenset]
    cp: Mapping[Node, frozenset]
    ct: Mapping[ArcT, frozenset]
    sm: Mapping[Node, SMGroups]
    net: Network = field(repr=False, compare=False)

    def children(self, v: Node) -> frozenset:
        return frozenset(nx.descendants(self.net.to_digraph(), v))

    def parents(self, v: Node) -> frozenset:
        return frozenset(nx.ancestors(self.net.to_digraph(), v))


def _head(node: SPTree) -> SPTree:
    while isinstance(node, Series):
        node = node.left
    return node


def merge_sets(net: Network, tree: SPTree | None = None) -> MergeSets:
    """Merge sets of a shortcut-free SPG, read off its decomposition tree.

    A node ``w`` self-merges for ``u`` exactly when some parallel group has
    terminals ``(u, w)``; a node's parent-merging children are the sinks of
    the parallel groups it sits strictly inside.
    """
    if tree is None:
        tree = decompose(net)
    topo = {v: k for k, v in enumerate(net.topological_order)}
    cp: dict[Node, set] = {v: set() for v in net.nodes}
    groups_by_source: dict[Node, list] = {}
    stack: list[tuple[SPTree, tuple[Node, ...]]] = [(tree, ())]
    while stack:
        node, enclosing = stack.pop()
        if isinstance(node, Arc):
            continue
        if isinstance(node, Series):
            cp[node.middle].update(enclosing)
            stack.append((node.right, enclosing))
            stack.append((node.left, enclosing))
            continue
        kids = parallel_children(node)
        if any(isinstance(k, Arc) for k in kids):
            raise InvariantError("network has a shortcut into %s" % node.sink)
        groups_by_source.setdefault(node.source, []).append((node, kids))
        inner = enclosing + (node.sink,)
        for k in kids:
            stack.append((k, inner))

    cs = {v: frozenset() for v in net.nodes}
    sm: dict[Node, SMGroups] = {}
    for u, groups in groups_by_source.items():
        cs[u] = frozenset(g.sink for g, _ in groups)
        if len(cs[u]) != len(groups):
            raise InvariantError("two merge groups of %s share a sink" % u)
        by_id = {id(g): g for g, _ in groups}
        buyers: dict[Node, list] = {g.sink: [] for g, _ in groups}
        feeders: dict[Node, list] = {g.sink: [] for g, _ in groups}
        fed = set()
        for g, kids in groups:
            for k in kids:
                h = _head(k)
                if isinstance(h, Arc):
                    buyers[g.sink].append(h.sink)
                elif id(h) in by_id:
                    feeders[g.sink].append(h.sink)
                    fed.add(h.sink)
                else:
                    raise InvariantError("unexpected branch head below %s" % u)
        roots = [g.sink for g, _ in groups if g.sink not in fed]
        if len(roots) != 1:
            raise InvariantError("branches of %s do not re-join at a single node" % u)
        got = sorted(b for bs in buyers.values() for b in bs)
        if got != sorted(net.buyers(u)):
            raise InvariantError("merge groups of %s do not partition its buyers" % u)
        hs = tuple(sorted(cs[u], key=topo.__getitem__))
        if hs[-1] != roots[0]:
            raise InvariantError("last merging node of %s is not the re-join point" % u)
        sm[u] = SMGroups(
            u,
            hs,
            {h: tuple(sorted(buyers[h])) for h in hs},
            {h: tuple(sorted(feeders[h], key=topo.__getitem__)) for h in hs},
        )

    cpf = {v: frozenset(x) for v, x in cp.items()}
    ct: dict[ArcT, frozenset] = {}
    for i, j in net.arcs:
        if i in sm:
            ct[(i, j)] = frozenset(sm[i].chain(j)) - cpf[i]
        else:
            ct[(i, j)] = frozenset()
    return MergeSets(cs, cpf, ct, sm, net)


def merge_sets_by_definition(net: Network) -> tuple[dict, dict, dict]:
    """Merge sets computed straight from the path definitions.

    Slow (connectivity queries per node pair); used to certify
    :func:`merge_sets` and by the equilibrium verifier on small inputs.
    """
    g = net.to_digraph()
    desc = {v: nx.descendants(g, v) for v in net.nodes}
    anc = {v: nx.ancestors(g, v) for v in net.nodes}
    cs = {}
    for i in net.nodes:
        found = set()
        for j in desc[i]:
            if g.has_edge(i, j):
                h = g.copy()
                h.remove_edge(i, j)
                if nx.has_path(h, i, j):
                    found.add(j)
            elif nx.algorithms.connectivity.local_node_connectivity(g, i, j) >= 2:
                found.add(j)
        cs[i] = frozenset(found)
    cp = {}
    for i in net.nodes:
        pool = set()
        for k in anc[i]:
            pool |= cs[k]
        cp[i] = frozenset(pool & desc[i])
    ct = {(i, j): frozenset((cs[i] & desc[j]) - cp[i]) for i, j in net.arcs}
    return cs, cp, ct


def classify_arcs(net: Network, ms: MergeSets | None = None) -> dict[ArcT, str]:
    """Label each arc SS, MS or SM from seller out-degree and buyer in-degree."""
    cases = {}
    for i, j in net.arcs:
        many_b = len(net.buyers(i)) >= 2
        many_s = len(net.sellers(j)) >= 2
        if many_b and many_s:
            raise InvariantError("arc %s->%s has multiple sellers and multiple buyers" % (i, j))
        cases[(i, j)] = "SM" if many_b else ("MS" if many_s else "SS")
    return cases


def dominating_parents(net: Network) -> dict[Node, frozenset]:
    """For each node, the nodes lying on every path from the source to it."""
    s = net.source
    idom = nx.immediate_dominators(net.to_digraph(), s)
    out = {}
    for v in net.nodes:
        doms = set()
        w = v
        while w != s:
            w = idom[w]
            doms.add(w)
        out[v] = frozenset(doms)
    return out
