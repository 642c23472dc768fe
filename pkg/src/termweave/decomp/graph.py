"""Predicate dependency graph and subproblem scheduling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx

from ..encode import CALLCTX, ConstraintSystem, parse_site_tag, recursive_sites
from ..logic import PredicateSymbol, apps, conj

__all__ = ["DepGraph", "SolveGroup", "Schedule", "Capacity", "MODES", "build_dep_graph",
           "schedule", "symbol_key", "check_schedule", "order_groups"]

MODES = ("monolithic", "procedural", "scc-min")
_KIND_ORDER = {"CallCtx": 0, "Inv": 1, "Summary": 2, "Sum": 2, "RR": 3}


def symbol_key(sym: PredicateSymbol, procs: Sequence[str]) -> tuple:
    owner = procs.index(sym.owner) if sym.owner in procs else len(procs)
    return (owner, _KIND_ORDER.get(sym.kind, 9), sym.site or "", sym.name)


@dataclass
class DepGraph:
    """Edge ``u -> v``: ``u`` occurs in a premise of a clause concluding ``v``.

    Edges carry ``unfolding`` (the dependency passes from one call instance of
    a recursive procedure to the next) and ``lazy`` (the reverse edge from a
    ranking relation to the invariant it needs).
    """

    graph: nx.DiGraph
    procs: tuple[str, ...]

    @property
    def nodes(self) -> list[PredicateSymbol]:
        return sorted(self.graph.nodes, key=self.key)

    def key(self, sym: PredicateSymbol) -> tuple:
        return symbol_key(sym, self.procs)

    def edges(self, unfolding: bool | None = None) -> list[tuple[PredicateSymbol, PredicateSymbol]]:
        out = [(u, v) for u, v, d in self.graph.edges(data=True)
               if unfolding is None or d["unfolding"] == unfolding]
        return sorted(out, key=lambda e: (self.key(e[0]), self.key(e[1])))

    def has_edge(self, u: PredicateSymbol, v: PredicateSymbol) -> bool:
        return self.graph.has_edge(u, v)

    def is_unfolding(self, u: PredicateSymbol, v: PredicateSymbol) -> bool:
        return bool(self.graph.edges[u, v]["unfolding"])

    def predecessors(self, v: PredicateSymbol) -> list[PredicateSymbol]:
        return sorted(self.graph.predecessors(v), key=self.key)

    def sccs(self) -> list[list[PredicateSymbol]]:
        """Strongly connected components, dependencies first."""
        cond = nx.condensation(self.graph)
        order = nx.lexicographical_topological_sort(
            cond, key=lambda c: min(self.key(s) for s in cond.nodes[c]["members"]))
        return [sorted(cond.nodes[c]["members"], key=self.key) for c in order]

    def is_cyclic(self, members: Iterable[PredicateSymbol]) -> bool:
        members = set(members)
        sub = self.graph.subgraph(members)
        if len(members) > 1 and not nx.is_directed_acyclic_graph(sub):
            return True
        return any(sub.has_edge(s, s) and self.is_unfolding(s, s) for s in members)


def build_dep_graph(cs: ConstraintSystem, lazy: bool = False) -> DepGraph:
    rec = recursive_sites(cs.prog)
    g = nx.DiGraph()
    g.add_nodes_from(cs.unknowns)

    def add(u, v, unfolding: bool, is_lazy: bool = False) -> None:
        if g.has_edge(u, v):
            g.edges[u, v]["unfolding"] |= unfolding
            g.edges[u, v]["lazy"] &= is_lazy
        else:
            g.add_edge(u, v, unfolding=unfolding, lazy=is_lazy)

    for c in cs.clauses:
        heads = c.conclusion_symbols()
        ctx_unfold = c.schema == CALLCTX and (c.proc, c.site) in rec
        for a in apps(conj(c.premises)):
            unf = ctx_unfold or (a.site is not None and parse_site_tag(a.site) in rec)
            for v in heads:
                add(a.symbol, v, unf)
    if lazy:
        for p in cs.prog.procedures:
            add(cs.symbol("RR", p.name), cs.symbol("Inv", p.name), False, True)
    return DepGraph(g, tuple(p.name for p in cs.prog.procedures))


@dataclass(frozen=True)
class Capacity:
    max_predicates: int = 4
    max_params: int | None = None

    def __post_init__(self) -> None:
        if self.max_predicates < 1 or (self.max_params is not None and self.max_params < 1):
            raise ValueError("capacity must be positive")


@dataclass(frozen=True)
class SolveGroup:
    """Predicates solved for at once.

    Groups sharing a ``cluster`` number with fixpoint ``gfp-iterate`` are
    iterated together; ``role`` names the colour of the group (contexts,
    invariants, ranking or joint).
    """

    predicates: tuple[PredicateSymbol, ...]
    objective: str
    fixpoint: str = "none"
    cluster: int = 0
    role: str = "joint"

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.predicates]


@dataclass
class Schedule:
    groups: list[SolveGroup] = field(default_factory=list)
    mode: str = "procedural"

    def clusters(self) -> list[list[int]]:
        """Group indices, consecutive groups of one gfp cluster kept together."""
        out: list[list[int]] = []
        for i, g in enumerate(self.groups):
            if (out and g.fixpoint == "gfp-iterate"
                    and self.groups[out[-1][0]].fixpoint == "gfp-iterate"
                    and self.groups[out[-1][0]].cluster == g.cluster):
                out[-1].append(i)
            else:
                out.append([i])
        return out

    def group_of(self, sym: PredicateSymbol) -> int:
        for i, g in enumerate(self.groups):
            if sym in g.predicates:
                return i
        raise KeyError(sym.name)


def _objective(members: Sequence[PredicateSymbol]) -> str:
    return "any" if any(s.kind == "RR" for s in members) else "strongest"


def _weight(members: Sequence[PredicateSymbol], weights: Mapping[PredicateSymbol, int] | None) -> int:
    return sum((weights or {}).get(s, 0) for s in members)


def _split(members: Sequence[PredicateSymbol], cap: Capacity,
           weights: Mapping[PredicateSymbol, int] | None) -> list[list[PredicateSymbol]]:
    out: list[list[PredicateSymbol]] = []
    cur: list[PredicateSymbol] = []
    for s in members:
        over = len(cur) >= cap.max_predicates or (
            cap.max_params is not None and cur and _weight(cur + [s], weights) > cap.max_params)
        if over:
            out.append(cur)
            cur = []
        cur.append(s)
    if cur:
        out.append(cur)
    return out


def _procedural_groups(g: DepGraph, cap: Capacity,
                       weights: Mapping[PredicateSymbol, int] | None) -> list[tuple[str, list]]:
    out: list[tuple[str, list]] = []
    for proc in g.procs:
        mine = [s for s in g.nodes if s.owner == proc]
        blue = [s for s in mine if s.kind == "CallCtx"]
        green = [s for s in mine if s.kind in ("Inv", "Sum", "Summary")]
        red = [s for s in mine if s.kind == "RR"]
        for chunk in _split(blue, cap, weights):
            out.append(("contexts", chunk))
        for chunk in _split(green, cap, weights):
            out.append(("invariants", chunk))
        for s in red:
            out.append(("ranking", [s]))
    return out


def order_groups(g: DepGraph, groups: list[tuple[str, list]], gfp_self: bool) -> list[SolveGroup]:
    """Topologically order ``groups``; cycles among them become gfp clusters."""
    index = {s: i for i, (_, members) in enumerate(groups) for s in members}
    gg = nx.DiGraph()
    gg.add_nodes_from(range(len(groups)))
    for u, v, d in g.graph.edges(data=True):
        if index[u] != index[v] and not d["lazy"]:
            gg.add_edge(index[u], index[v])
    cond = nx.condensation(gg)
    order = nx.lexicographical_topological_sort(cond, key=lambda c: min(cond.nodes[c]["members"]))
    out: list[SolveGroup] = []
    cluster = 0
    for c in order:
        members = sorted(cond.nodes[c]["members"])
        cyclic = len(members) > 1 or (gfp_self and any(
            g.graph.has_edge(u, v) and g.is_unfolding(u, v)
            for u in groups[members[0]][1] for v in groups[members[0]][1]))
        cluster += 1
        for m in members:
            role, preds = groups[m]
            out.append(SolveGroup(tuple(preds), _objective(preds),
                                  "gfp-iterate" if cyclic else "none", cluster, role))
    return out


def schedule(g: DepGraph, cap: Capacity = Capacity(), mode: str = "procedural",
             weights: Mapping[PredicateSymbol, int] | None = None) -> Schedule:
    """Order the unknowns into solve groups.

    ``weights`` (template parameters per predicate) only matter when the
    capacity bounds parameters.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "monolithic":
        nodes = g.nodes
        return Schedule([SolveGroup(tuple(nodes), "any", "none", 1)], mode)
    if mode == "procedural":
        return Schedule(order_groups(g, _procedural_groups(g, cap, weights), True), mode)
    groups: list[SolveGroup] = []
    cluster = 0
    for comp in g.sccs():
        cluster += 1
        fits = len(comp) <= cap.max_predicates and (
            cap.max_params is None or len(comp) == 1 or _weight(comp, weights) <= cap.max_params)
        if fits:
            groups.append(SolveGroup(tuple(comp), _objective(comp), "none", cluster))
            continue
        for chunk in _split(comp, cap, weights):
            groups.append(SolveGroup(tuple(chunk), _objective(chunk), "gfp-iterate", cluster))
    return Schedule(groups, mode)


def check_schedule(g: DepGraph, s: Schedule) -> list[str]:
    """Violations of the schedule invariants (empty when valid)."""
    problems = []
    seen: dict[PredicateSymbol, int] = {}
    for i, grp in enumerate(s.groups):
        for p in grp.predicates:
            if p in seen:
                problems.append(f"{p.name} scheduled twice")
            seen[p] = i
    for n in g.nodes:
        if n not in seen:
            problems.append(f"{n.name} not scheduled")
    for u, v in g.graph.edges:
        if u not in seen or v not in seen:
            continue
        gu, gv = s.groups[seen[u]], s.groups[seen[v]]
        if g.graph.edges[u, v].get("lazy"):
            continue
        if seen[u] > seen[v] and not (gu.fixpoint == gv.fixpoint == "gfp-iterate"
                                      and gu.cluster == gv.cluster):
            problems.append(f"{v.name} needs {u.name} from a later group")
    return problems
