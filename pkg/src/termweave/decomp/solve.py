"""Solving scheduled groups, alone or by descending fixpoint iteration."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from ..encode import Clause, site_tag
from ..logic import And, Formula, PredicateDef, PredicateSymbol, conj, symbols
from ..synth import (Budget, CegisResult, Instance, RankingTemplate, SolverBackend, Subproblem,
                     Template, cegis_solve)
from ..synth.templates import BoundsTemplate
from .graph import SolveGroup

__all__ = ["Engine", "GroupOutcome", "GfpOutcome", "restrict_clauses", "solve_group",
           "gfp_iterate", "ScheduleError"]


class ScheduleError(RuntimeError):
    """A group needs a predicate that is neither solved nor part of it."""


@dataclass
class Engine:
    """Backend, templates and budgets shared by every group of one analysis.

    With ``escalate`` set, a group whose linear rankings fail is retried with
    lexicographic rankings of that many components.
    """

    backend: SolverBackend
    templates: dict[PredicateSymbol, Template]
    budget: Budget = Budget()
    universe: tuple[int, int] | None = None
    escalate: int | None = 2

    def solve(self, sp: Subproblem) -> CegisResult:
        return cegis_solve(sp, self.backend, self.budget)


@dataclass
class GroupOutcome:
    group: SolveGroup
    status: str
    iterations: int = 0
    wall_ms: float = 0.0
    reason: str = ""
    solutions: dict[PredicateSymbol, Instance] = field(default_factory=dict)
    ranking_k: int | None = None


@dataclass
class GfpOutcome:
    """Result of iterating a cyclic cluster from top."""

    groups: list[GroupOutcome]
    iterates: list[dict[PredicateSymbol, Instance]]
    stable: bool
    widened: bool
    status: str

    @property
    def rounds(self) -> int:
        return len(self.iterates) - 1


def _conjuncts(f: Formula) -> tuple[Formula, ...]:
    return f.args if isinstance(f, And) else (f,)


def restrict_clauses(clauses: Sequence[Clause], group: Sequence[PredicateSymbol],
                     known: Mapping[PredicateSymbol, object]) -> list[Clause]:
    """Clauses concluding a group predicate, with conclusion conjuncts about
    predicates that are neither in the group nor known dropped."""
    members = set(group)
    allowed = members | set(known)
    out = []
    for c in clauses:
        if not (c.conclusion_symbols() & members):
            continue
        missing = c.premise_symbols() - allowed
        if missing:
            raise ScheduleError(f"{c.label} needs unsolved {sorted(s.name for s in missing)[0]}")
        kept = [p for p in _conjuncts(c.conclusion) if symbols(p) <= allowed]
        out.append(replace(c, conclusion=conj(kept)))
    return out


def _escalated(t: Template, k: int) -> Template:
    if isinstance(t, RankingTemplate) and t.k < k:
        return replace(t, k=k)
    return t


def _as_defs(sol: Mapping[PredicateSymbol, Instance]) -> dict[PredicateSymbol, PredicateDef]:
    return {s: i.definition for s, i in sol.items()}


def solve_group(group: SolveGroup, clauses: Sequence[Clause],
                solved: Mapping[PredicateSymbol, Instance], engine: Engine,
                unfold: Mapping[PredicateSymbol, Instance] | None = None,
                unfold_sites: frozenset[str] = frozenset(),
                extra_fixed: Mapping[PredicateSymbol, Instance] | None = None) -> GroupOutcome:
    """Solve one group against already-solved predicates."""
    t0 = time.monotonic()
    fixed = dict(solved)
    fixed.update(extra_fixed or {})
    mine = restrict_clauses(clauses, group.predicates, fixed)
    templates = {s: engine.templates[s] for s in group.predicates}
    attempts = [templates]
    if engine.escalate and any(isinstance(t, RankingTemplate) and t.k < engine.escalate
                               for t in templates.values()):
        attempts.append({s: _escalated(t, engine.escalate) for s, t in templates.items()})
    iterations = 0
    result = None
    for tm in attempts:
        sp = Subproblem(tuple(mine), tm, _as_defs(fixed), group.objective,
                        _as_defs(unfold or {}), unfold_sites, engine.universe)
        result = engine.solve(sp)
        iterations += result.iterations
        if result.status == "solved":
            break
    assert result is not None
    out = GroupOutcome(group, result.status, iterations, (time.monotonic() - t0) * 1000.0,
                       result.reason)
    if result.status == "solved":
        out.solutions = {s: p.instance for s, p in result.solutions.items()}
        ks = [t.k for t in tm.values() if isinstance(t, RankingTemplate)]
        out.ranking_k = max(ks) if ks else None
    return out


def top_instance(t: Template) -> Instance:
    if not isinstance(t, BoundsTemplate):
        raise TypeError(f"{t.symbol.name} has no top element")
    return Instance.of(t, t.top())


def gfp_iterate(groups: Sequence[SolveGroup], clauses: Sequence[Clause],
                solved: Mapping[PredicateSymbol, Instance], engine: Engine,
                unfold_sites: frozenset[str], max_iters: int = 10) -> GfpOutcome:
    """Greatest-fixpoint iteration of a cyclic cluster.

    Every bound predicate of the cluster starts at top.  Each round re-solves
    every group for its strongest solution with the rest of the cluster, and
    every unfolded recursive application, read from the previous iterate.
    """
    cluster = [s for g in groups for s in g.predicates]
    current = {s: top_instance(engine.templates[s]) for s in cluster
               if isinstance(engine.templates[s], BoundsTemplate)}
    iterates = [dict(current)]
    outcomes: list[GroupOutcome] = []
    stable = False
    for _ in range(max_iters):
        new: dict[PredicateSymbol, Instance] = {}
        outcomes = []
        for g in groups:
            others = {s: i for s, i in current.items() if s not in g.predicates}
            grp = replace(g, objective="strongest" if all(
                isinstance(engine.templates[s], BoundsTemplate) for s in g.predicates) else "any")
            o = solve_group(grp, clauses, solved, engine, current, unfold_sites, others)
            o.group = g
            outcomes.append(o)
            if o.status != "solved":
                return GfpOutcome(outcomes, iterates, False, False, "failed")
            new.update(o.solutions)
        bounds_new = {s: i for s, i in new.items() if s in current}
        stable = all(bounds_new[s].values == current[s].values for s in current)
        iterates.append(bounds_new)
        current = bounds_new
        if stable:
            break
    return GfpOutcome(outcomes, iterates, stable, not stable, "solved")


def recursive_site_tags(rec_sites) -> frozenset[str]:
    return frozenset(site_tag(p, sid) for p, sid in rec_sites)
