"""Counterexample-guided synthesis of template parameters.

Each iteration proposes parameters consistent with every counterexample
seen so far, instantiates the templates and checks every clause of the
subproblem.  A falsifying assignment of a clause becomes a new ground
constraint on the parameters.  With an optimisation objective, every verified
solution is followed by a search for a strictly weaker (or stronger) one;
counterexamples are kept across these rounds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..encode import Clause
from ..logic import (FALSE, TRUE, And, App, Formula, LinExpr, PredicateDef, PredicateSymbol,
                     ShapeError, conj, disj, free_vars, ge, implies, le, map_apps, neg, nnf,
                     simplify, substitute, symbols)
from .backend import BackendError, ParamGroup, SolverBackend, SolverUnknown
from .templates import BoundsTemplate, Instance, RankingTemplate, Template

__all__ = ["Budget", "Subproblem", "PredicateSolution", "CegisResult", "Verification",
           "cegis_solve", "verify_solution", "verify_clause", "check_shapes", "ground_constraint",
           "resolve"]

OBJECTIVES = ("any", "weakest", "strongest")


@dataclass(frozen=True)
class Budget:
    iters: int = 200
    secs: float = 30.0


@dataclass
class Subproblem:
    """Clauses plus the templates of the predicates solved for at once.

    ``fixed`` interprets already-solved predicates.  Applications tagged with a
    site in ``unfold_sites`` are read from ``unfold`` instead of the unknowns;
    this is how one iterate of a fixpoint computation is posed.  ``universe``
    optionally restricts every universal variable to a box.
    """

    clauses: tuple[Clause, ...]
    templates: Mapping[PredicateSymbol, Template]
    fixed: Mapping[PredicateSymbol, PredicateDef] = field(default_factory=dict)
    objective: str = "any"
    unfold: Mapping[PredicateSymbol, PredicateDef] = field(default_factory=dict)
    unfold_sites: frozenset[str] = frozenset()
    universe: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")

    @property
    def unknowns(self) -> list[PredicateSymbol]:
        return list(self.templates)


@dataclass
class PredicateSolution:
    symbol: PredicateSymbol
    definition: PredicateDef | None
    params: dict[str, int]
    status: str                       # solved | bottom | top | failed
    instance: Instance | None = None

    @property
    def formula(self) -> Formula:
        return self.definition.body if self.definition is not None else FALSE


@dataclass
class Verification:
    ok: bool
    clause: Clause | None = None
    model: dict[str, int] | None = None

    @property
    def certificate(self) -> bool:
        return self.ok


@dataclass
class CegisResult:
    status: str                                   # solved | failed
    solutions: dict[PredicateSymbol, PredicateSolution]
    iterations: int = 0
    counterexamples: list[tuple[str, dict[str, int]]] = field(default_factory=list)
    proposals: list[dict[str, int]] = field(default_factory=list)
    history: list[dict[str, int]] = field(default_factory=list)
    reason: str = ""
    wall_ms: float = 0.0


Interp = Mapping[PredicateSymbol, "PredicateDef | Instance"]


def _definition(x) -> PredicateDef:
    return x.definition if isinstance(x, Instance) else x


def resolve(f: Formula, sp: Subproblem, sol: Interp) -> Formula:
    """Replace every application by its interpretation."""
    def fn(a: App) -> Formula:
        if a.site is not None and a.site in sp.unfold_sites and a.symbol in sp.unfold:
            return sp.unfold[a.symbol].apply(a.args)
        if a.symbol in sol:
            return _definition(sol[a.symbol]).apply(a.args)
        if a.symbol in sp.fixed:
            return sp.fixed[a.symbol].apply(a.args)
        raise KeyError(f"no interpretation for {a.symbol.name}")
    return map_apps(f, fn)


def _box(fv, universe) -> Formula:
    lo, hi = universe
    return conj([ge(v, lo) for v in sorted(fv)] + [le(v, hi) for v in sorted(fv)])


def check_shapes(sp: Subproblem, sol: Interp) -> None:
    for sym, t in sp.templates.items():
        if not t.ranking:
            continue
        x = sol.get(sym)
        if not (isinstance(x, Instance) and isinstance(x.template, RankingTemplate)):
            raise ShapeError(f"{sym.name} must be a ranking-template instance "
                             "(well-foundedness is guaranteed only by construction)")


def verify_clause(c: Clause, sp: Subproblem, sol: Interp,
                  backend: SolverBackend) -> dict[str, int] | None:
    query = conj(conj(resolve(p, sp, sol) for p in c.premises),
                 neg(resolve(c.conclusion, sp, sol)))
    if query == FALSE:
        return None
    if sp.universe is not None:
        query = conj(query, _box(free_vars(query), sp.universe))
    model = backend.find_model(query)
    if model is None:
        return None
    full = {v: 0 for v in c.universals}
    full.update(model)
    return full


def verify_solution(sp: Subproblem, sol: Interp, backend: SolverBackend) -> Verification:
    """Check every clause; the first falsified clause yields a counterexample."""
    check_shapes(sp, sol)
    for c in sp.clauses:
        m = verify_clause(c, sp, sol, backend)
        if m is not None:
            return Verification(False, c, m)
    return Verification(True)


def ground_constraint(c: Clause, model: Mapping[str, int], sp: Subproblem) -> Formula:
    """Clause ``c`` at the point ``model`` as a constraint on template parameters."""
    point = {v: model.get(v, 0) for v in c.universals}

    def fn(a: App) -> Formula:
        args = [e.value(point) for e in a.args]
        if a.site is not None and a.site in sp.unfold_sites and a.symbol in sp.unfold:
            return TRUE if sp.unfold[a.symbol](*args) else FALSE
        t = sp.templates.get(a.symbol)
        if t is not None:
            return t.ground(args)
        if a.symbol in sp.fixed:
            return TRUE if sp.fixed[a.symbol](*args) else FALSE
        raise KeyError(f"no interpretation for {a.symbol.name}")

    f = substitute(c.formula, point)
    return simplify(nnf(map_apps(f, fn)))


@dataclass
class _Ground:
    """A clause instantiated at a concrete point, kept structured for propagation."""

    premise: Formula
    conclusion: tuple[Formula, ...]


def _ground_instance(c: Clause, model: Mapping[str, int]) -> _Ground:
    point = {v: model.get(v, 0) for v in c.universals}
    concl = substitute(c.conclusion, point)
    parts = concl.args if isinstance(concl, And) else (concl,)
    return _Ground(simplify(conj(substitute(p, point) for p in c.premises)), tuple(parts))


def _app_args(a: App) -> list[int]:
    return [e.value({}) for e in a.args]


class _LeastProposer:
    """Least bound assignment consistent with the counterexamples, then rankings.

    Every clause is Horn in the bound predicates and bound templates are closed
    under row-wise meet, so the least consistent assignment exists and is found
    by weakening from bottom.  Ranking conditions only become easier under
    stronger premises, so fixing the bounds at their least values loses no
    ranking solution.
    """

    def __init__(self, sp: Subproblem, backend: SolverBackend, order: str):
        self.sp = sp
        self.backend = backend
        self.bounds = {s: t for s, t in sp.templates.items() if isinstance(t, BoundsTemplate)}
        self.ranks = {s: t for s, t in sp.templates.items() if not isinstance(t, BoundsTemplate)}
        self.rank_groups = [g for t in self.ranks.values() for g in t.groups(order)]
        self.instances: list[_Ground] = []

    @staticmethod
    def applies(sp: Subproblem) -> bool:
        return sp.objective in ("any", "strongest") and all(
            isinstance(t, (BoundsTemplate, RankingTemplate)) for t in sp.templates.values())

    def _truth(self, a: App, values: Mapping[str, int]) -> bool | None:
        """Truth of a ground application; ``None`` for ranking unknowns."""
        sp = self.sp
        args = _app_args(a)
        if a.site is not None and a.site in sp.unfold_sites and a.symbol in sp.unfold:
            return bool(sp.unfold[a.symbol](*args))
        if a.symbol in self.bounds:
            return self.bounds[a.symbol].holds(values, args)
        if a.symbol in self.ranks:
            return None
        if a.symbol in sp.fixed:
            return bool(sp.fixed[a.symbol](*args))
        raise KeyError(f"no interpretation for {a.symbol.name}")

    def _premise(self, g: _Ground, values: Mapping[str, int]) -> bool:
        f = simplify(map_apps(g.premise, lambda a: TRUE if self._truth(a, values) else FALSE))
        return f == TRUE

    def propose(self, extra: Sequence[Formula]) -> dict[str, int] | None:
        values: dict[str, int] = {}
        for t in self.bounds.values():
            values.update(t.bottom())
        changed = True
        while changed:
            changed = False
            for g in self.instances:
                if not self._premise(g, values):
                    continue
                for part in g.conclusion:
                    if isinstance(part, App):
                        if part.symbol in self.bounds and not (part.site in self.sp.unfold_sites
                                                               and part.symbol in self.sp.unfold):
                            if self.bounds[part.symbol].weaken_to(values, _app_args(part)):
                                changed = True
                        elif self._truth(part, values) is False:
                            return None
                    elif simplify(part) == FALSE:
                        return None
        for f in extra:
            if simplify(substitute(f, values)) != TRUE:
                return None
        if not self.ranks:
            return values
        constraints = []
        for g in self.instances:
            heads = [p for p in g.conclusion if isinstance(p, App) and p.symbol in self.ranks]
            if heads and self._premise(g, values):
                constraints.append(conj(self.ranks[a.symbol].ground(_app_args(a)) for a in heads))
        rv = self.backend.solve_params(constraints, self.rank_groups)
        if rv is None:
            return None
        values.update(rv)
        return values


def _ordered_groups(sp: Subproblem, order: str) -> list[ParamGroup]:
    bounds = [t for t in sp.templates.values() if not t.ranking]
    ranks = [t for t in sp.templates.values() if t.ranking]
    out: list[ParamGroup] = []
    for t in bounds + ranks:
        out.extend(t.groups(order))
    return out


def _improve(sp: Subproblem, values: Mapping[str, int]) -> Formula:
    parts = []
    for t in sp.templates.values():
        if not isinstance(t, BoundsTemplate):
            continue
        if sp.objective == "weakest":
            parts.append(t.no_stronger_than(values))
        else:
            parts.append(t.no_weaker_than(values))
    strict = []
    for t in sp.templates.values():
        if not isinstance(t, BoundsTemplate):
            continue
        strict.append(t.strictly_weaker(values) if sp.objective == "weakest"
                      else t.strictly_stronger(values))
    return conj(conj(parts), disj(strict))


def _solutions(sp: Subproblem, values: Mapping[str, int] | None) -> dict[PredicateSymbol, PredicateSolution]:
    out = {}
    for sym, t in sp.templates.items():
        if values is None:
            out[sym] = PredicateSolution(sym, None, {}, "failed")
            continue
        inst = Instance.of(t, values)
        out[sym] = PredicateSolution(sym, inst.definition, inst.valuation, inst.status, inst)
    return out


def cegis_solve(sp: Subproblem, backend: SolverBackend, budget: Budget = Budget(),
                seed_constraints: Sequence[Formula] = ()) -> CegisResult:
    """Solve ``sp``; never reports ``solved`` without a full verification."""
    t0 = time.monotonic()
    order = "strongest" if sp.objective == "strongest" else "weakest"
    groups = _ordered_groups(sp, order)
    constraints: list[Formula] = list(seed_constraints)
    result = CegisResult("failed", _solutions(sp, None))
    best: dict[str, int] | None = None
    extra: list[Formula] = []

    def finish(status: str, reason: str) -> CegisResult:
        result.status = status
        result.reason = reason
        result.solutions = _solutions(sp, best) if best is not None else _solutions(sp, None)
        result.wall_ms = (time.monotonic() - t0) * 1000.0
        return result

    least = _LeastProposer(sp, backend, order) if _LeastProposer.applies(sp) else None
    if least is not None and seed_constraints:
        least = None

    while True:
        if result.iterations >= budget.iters:
            return finish("solved" if best is not None else "failed", "iteration budget exhausted")
        if time.monotonic() - t0 > budget.secs:
            return finish("solved" if best is not None else "failed", "time budget exhausted")
        result.iterations += 1
        try:
            if least is not None:
                values = least.propose(extra)
            else:
                values = backend.solve_params(constraints + extra, groups)
        except (SolverUnknown, BackendError) as e:
            return finish("solved" if best is not None else "failed", f"synthesis query: {e}")
        if values is None:
            if best is not None:
                return finish("solved", "optimal within template")
            return finish("failed", "no template instance satisfies the counterexamples")
        result.proposals.append(dict(values))
        sol = {sym: Instance.of(t, values) for sym, t in sp.templates.items()}
        try:
            ver = verify_solution(sp, sol, backend)
        except (SolverUnknown, BackendError) as e:
            return finish("solved" if best is not None else "failed", f"verification query: {e}")
        if ver.ok:
            best = dict(values)
            result.history.append(best)
            if sp.objective == "any" or not any(isinstance(t, BoundsTemplate)
                                                for t in sp.templates.values()):
                return finish("solved", "verified")
            extra = [_improve(sp, best)]
            continue
        result.counterexamples.append((ver.clause.label, ver.model))
        if least is not None:
            least.instances.append(_ground_instance(ver.clause, ver.model))
        else:
            constraints.append(ground_constraint(ver.clause, ver.model, sp))
