"""Exhaustive reference solver used by the test-suite.

Clauses are checked on every integer point of a small box and template
parameters are enumerated predicate by predicate.  Nothing here reuses the
counterexample loop or the solver backends, so agreement with
:func:`cegis_solve` is a meaningful cross-check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from ..logic import (FALSE, TRUE, And, App, Atom, Const, Formula, Not, Or, PredicateDef,
                     PredicateSymbol, free_vars, map_apps, neg, nnf, simplify, substitute)
from .cegis import PredicateSolution, Subproblem
from .templates import BoundsTemplate, Instance, RankingTemplate, Template

__all__ = ["SearchSpaceTooLarge", "GroundInstance", "ground_instances", "brute_force_solve",
           "clause_violations"]


class SearchSpaceTooLarge(Exception):
    pass


@dataclass(frozen=True)
class GroundInstance:
    clause: str
    point: tuple[tuple[str, int], ...]
    premise: Formula
    conclusion: Formula

    @property
    def keys(self) -> frozenset[tuple[PredicateSymbol, tuple[int, ...]]]:
        return frozenset(_keys(self.premise) | _keys(self.conclusion))


def _keys(f: Formula) -> set:
    if isinstance(f, App):
        return {(f.symbol, tuple(a.const for a in f.args))}
    if isinstance(f, (And, Or)):
        out = set()
        for a in f.args:
            out |= _keys(a)
        return out
    if isinstance(f, Not):
        return _keys(f.arg)
    return set()


def _truth(f: Formula, table: Mapping) -> bool:
    if isinstance(f, Const):
        return f.value
    if isinstance(f, App):
        return table[(f.symbol, tuple(a.const for a in f.args))]
    if isinstance(f, And):
        return all(_truth(a, table) for a in f.args)
    if isinstance(f, Or):
        return any(_truth(a, table) for a in f.args)
    if isinstance(f, Not):
        return not _truth(f.arg, table)
    raise TypeError(f"unexpected {f!r}")


def _drop_apps(f: Formula) -> Formula:
    """Over-approximate an NNF formula by reading every application as true."""
    if isinstance(f, (App, Not)):
        return TRUE
    if isinstance(f, And):
        return And(tuple(_drop_apps(a) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(_drop_apps(a) for a in f.args))
    return f


def _atom_ok(a: Atom, env: Mapping[str, int]) -> bool | None:
    if not a.expr.vars <= env.keys():
        return None
    v = a.expr.value(env)
    return v <= 0 if a.op == "<=" else v < 0 if a.op == "<" else v == 0


def _partial(f: Formula, env: Mapping[str, int]) -> bool | None:
    """Three-valued evaluation under a partial assignment."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Atom):
        return _atom_ok(f, env)
    if isinstance(f, And):
        unknown = False
        for a in f.args:
            r = _partial(a, env)
            if r is False:
                return False
            unknown |= r is None
        return None if unknown else True
    if isinstance(f, Or):
        unknown = False
        for a in f.args:
            r = _partial(a, env)
            if r is True:
                return True
            unknown |= r is None
        return None if unknown else False
    raise TypeError(f"unexpected {f!r}")


def _points(f: Formula, names: Sequence[str], box: tuple[int, int],
            limit: int) -> Iterator[dict[str, int]]:
    lo, hi = box
    env: dict[str, int] = {}
    visited = 0

    def rec(i: int) -> Iterator[dict[str, int]]:
        nonlocal visited
        visited += 1
        if visited > limit:
            raise SearchSpaceTooLarge(f"more than {limit} partial points")
        r = _partial(f, env)
        if r is False:
            return
        if i == len(names):
            yield dict(env)
            return
        for v in range(lo, hi + 1):
            env[names[i]] = v
            yield from rec(i + 1)
        del env[names[i]]

    yield from rec(0)


def ground_instances(sp: Subproblem, box: tuple[int, int],
                     limit: int = 10_000_000) -> list[GroundInstance]:
    """Every instance of every clause whose premise may hold inside ``box``."""
    out = []

    def concrete(a: App) -> Formula:
        args = tuple(e.const for e in a.args)
        if a.site is not None and a.site in sp.unfold_sites and a.symbol in sp.unfold:
            return TRUE if sp.unfold[a.symbol](*args) else FALSE
        if a.symbol in sp.templates:
            return App(a.symbol, a.args)
        if a.symbol in sp.fixed:
            return TRUE if sp.fixed[a.symbol](*args) else FALSE
        raise KeyError(f"no interpretation for {a.symbol.name}")

    for c in sp.clauses:
        premise = simplify(nnf(And(tuple(c.premises)) if c.premises else TRUE))
        filt = simplify(_drop_apps(premise))
        for point in _points(filt, c.universals, box, limit):
            p = simplify(map_apps(substitute(premise, point), concrete))
            if p == FALSE:
                continue
            q = simplify(map_apps(substitute(c.conclusion, point), concrete))
            out.append(GroundInstance(c.label, tuple(sorted(point.items())), p, q))
    return out


def _var_order(f: Formula, names: Sequence[str]) -> list[str]:
    """Greedy order that completes as many atoms as possible early."""
    atoms: list[frozenset[str]] = []

    def collect(g: Formula) -> None:
        if isinstance(g, Atom):
            atoms.append(frozenset(g.expr.vars))
        elif isinstance(g, (And, Or)):
            for a in g.args:
                collect(a)

    collect(f)
    order: list[str] = []
    left = [n for n in names if n in free_vars(f)]
    while left:
        done = set(order)

        def score(n: str) -> tuple[int, int]:
            closes = sum(1 for a in atoms if n in a and a <= done | {n})
            return (-closes, -sum(1 for a in atoms if n in a))

        best = min(left, key=score)
        order.append(best)
        left.remove(best)
    return order


def clause_violations(clauses, defs: Mapping[PredicateSymbol, PredicateDef],
                      box: tuple[int, int], limit: int = 10_000_000,
                      ) -> list[tuple[str, dict[str, int]]]:
    """Points of ``box`` where a clause fails under the given definitions.

    Applications are replaced by the definitions' bodies, and the search runs
    over ``premise and not conclusion`` with three-valued pruning, so every
    point of the box is covered without visiting most of them.  Universals
    the clause does not constrain are reported as 0.
    """
    out = []
    for c in clauses:
        premise = And(tuple(c.premises)) if c.premises else TRUE
        bad = simplify(nnf(map_apps(And((premise, neg(c.conclusion))),
                                    lambda a: defs[a.symbol].apply(a.args))))
        if bad == FALSE:
            continue
        order = _var_order(bad, c.universals)
        for point in _points(bad, order, box, limit):
            full = {u: point.get(u, 0) for u in c.universals}
            out.append((c.label, full))
            break
    return out


def _candidates(t: Template) -> Iterator[dict[str, int]]:
    groups = t.groups("any")
    for combo in itertools.product(*(g.candidates for g in groups)):
        vals = {}
        for g, cand in zip(groups, combo):
            vals.update(zip(g.names, cand))
        yield vals


def _bounds_tables(t: BoundsTemplate, tuples: Sequence[tuple[int, ...]],
                   limit: int) -> dict[tuple[bool, ...], dict[str, int]]:
    """Distinct truth tables over ``tuples``, built one row at a time."""
    tables: dict[tuple[bool, ...], dict[str, int]] = {(True,) * len(tuples): {}}
    for k, (row, group) in enumerate(zip(t.rows, t.groups("any"))):
        on_p, c_p = t.row_params(k)
        live = [row.loc is None or args[t.pc_index] == row.loc for args in tuples]
        values = [row.value(args) for args in tuples]
        row_tables: dict[tuple[bool, ...], tuple[int, int]] = {}
        for on, c in group.candidates:
            vec = tuple(not on or not lv or v <= c for lv, v in zip(live, values))
            row_tables.setdefault(vec, (on, c))
        merged: dict[tuple[bool, ...], dict[str, int]] = {}
        for vec, vals in tables.items():
            for rvec, (on, c) in row_tables.items():
                key = tuple(a and b for a, b in zip(vec, rvec))
                if key not in merged:
                    merged[key] = {**vals, on_p: on, c_p: c}
                    if len(merged) > limit:
                        raise SearchSpaceTooLarge(f"{t.symbol.name}: more than {limit} tables")
        tables = merged
    return tables


def _ranking_truth(t: RankingTemplate, vals: Mapping[str, int], args: Sequence[int]) -> bool:
    n = t.n
    ranks = []
    for j in range(t.k):
        ps = t.component_params(j)
        now = sum(vals[p] * a for p, a in zip(ps, args[:n])) + vals[ps[-1]]
        nxt = sum(vals[p] * a for p, a in zip(ps, args[n:])) + vals[ps[-1]]
        ranks.append((now, nxt))
    for j, (now, nxt) in enumerate(ranks):
        if all(a >= b for a, b in ranks[:j]) and now >= 0 and now - nxt >= 1:
            return True
    return False


def _tables(t: Template, tuples: Sequence[tuple[int, ...]],
            limit: int) -> dict[tuple[bool, ...], dict[str, int]]:
    if isinstance(t, BoundsTemplate):
        return _bounds_tables(t, tuples, limit)
    size = 1
    for g in t.groups("any"):
        size *= len(g.candidates)
    if size > limit:
        raise SearchSpaceTooLarge(f"{t.symbol.name}: {size} candidates")
    out: dict[tuple[bool, ...], dict[str, int]] = {}
    for vals in _candidates(t):
        if isinstance(t, RankingTemplate):
            vec = tuple(_ranking_truth(t, vals, args) for args in tuples)
        else:
            d = Instance.of(t, vals).definition
            vec = tuple(bool(d(*args)) for args in tuples)
        out.setdefault(vec, vals)
    return out


class _View:
    """Truth of ``(symbol, args)`` under the currently chosen tables."""

    def __init__(self, pos: Mapping, current: Mapping):
        self.pos = pos
        self.current = current

    def __getitem__(self, key) -> bool:
        return self.current[key[0]][self.pos[key]]


def brute_force_solve(sp: Subproblem, box: tuple[int, int] = (-4, 4),
                      point_limit: int = 10_000_000,
                      node_limit: int = 2_000_000) -> dict[PredicateSymbol, PredicateSolution]:
    """Search every template instance; each symbol maps to a solved or failed entry.

    Clauses are only checked inside ``box``.  Candidates of one predicate that
    agree on every point the ground clauses mention are interchangeable, so
    the search runs over their distinct truth tables.  Raises
    :class:`SearchSpaceTooLarge` when the points, the tables of one predicate
    or the backtracking nodes exceed their limits.
    """
    insts = ground_instances(sp, box, point_limit)
    order = list(sp.templates)
    rank = {s: i for i, s in enumerate(order)}
    tuples: dict[PredicateSymbol, set] = {s: set() for s in order}
    checks: list[list[GroundInstance]] = [[] for _ in order]
    for g in insts:
        keys = g.keys
        if not keys:
            if not _truth(g.premise, {}) or _truth(g.conclusion, {}):
                continue
            return _failed(sp)
        for sym, args in keys:
            tuples[sym].add(args)
        checks[max(rank[s] for s, _ in keys)].append(g)

    points = {s: sorted(tuples[s]) for s in order}
    tables = {s: list(_tables(sp.templates[s], points[s], node_limit).items()) for s in order}
    nodes = 0
    pos = {(s, args): k for s in order for k, args in enumerate(points[s])}
    current: dict[PredicateSymbol, tuple[bool, ...]] = {}
    table = _View(pos, current)
    chosen: dict[PredicateSymbol, dict[str, int]] = {}

    def rec(i: int) -> bool:
        nonlocal nodes
        if i == len(order):
            return True
        sym = order[i]
        for vec, vals in tables[sym]:
            nodes += 1
            if nodes > node_limit:
                raise SearchSpaceTooLarge(f"more than {node_limit} search nodes")
            current[sym] = vec
            mine = checks[i]
            for j, g in enumerate(mine):
                if _truth(g.premise, table) and not _truth(g.conclusion, table):
                    # failing instances tend to fail again: try them first next time
                    mine.insert(0, mine.pop(j))
                    break
            else:
                chosen[sym] = vals
                if rec(i + 1):
                    return True
        return False

    if not rec(0):
        return _failed(sp)
    out = {}
    for sym, t in sp.templates.items():
        vals = dict(chosen[sym])
        if isinstance(t, BoundsTemplate):
            # rows never touched by the tables stay off
            for k in range(len(t.rows)):
                on_p, c_p = t.row_params(k)
                vals.setdefault(on_p, 0)
                vals.setdefault(c_p, 0)
        inst = Instance.of(t, vals)
        out[sym] = PredicateSolution(sym, inst.definition, inst.valuation, "solved", inst)
    return out


def _failed(sp: Subproblem) -> dict[PredicateSymbol, PredicateSolution]:
    return {s: PredicateSolution(s, None, {}, "failed") for s in sp.templates}
