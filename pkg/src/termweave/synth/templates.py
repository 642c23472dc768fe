"""Parametric predicate shapes.

A template turns a parameter valuation into a concrete predicate and, for a
concrete argument tuple, into a formula over its parameters (used to turn a
counterexample into a constraint on the next proposal).

Bound templates are conjunctions of rows ``row(x) <= c``; each row has an
``on`` switch so that "no bound" is part of the grid.  Larger constants and
switched-off rows are weaker.  When the predicate ranges over a fused state
with a location variable, rows may be guarded by a location so that every
location gets its own box.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..logic import (Formula, LinExpr, PredicateDef, PredicateSymbol,
                     conj, disj, eq, ge, implies, le, lt, gt, var)
from .backend import ParamGroup

__all__ = ["Template", "BoundsTemplate", "RankingTemplate", "Instance", "TemplateConfig",
           "TemplateError", "make_template", "interval_rows", "polyhedron_rows",
           "constant_order"]


class TemplateError(ValueError):
    pass


def constant_order(lo: int, hi: int) -> list[int]:
    """0, 1, -1, 2, -2, ... clipped to ``[lo, hi]``."""
    out = [0] if lo <= 0 <= hi else []
    for k in range(1, max(abs(lo), abs(hi)) + 1):
        for c in (k, -k):
            if lo <= c <= hi:
                out.append(c)
    return out


class Template:
    symbol: PredicateSymbol
    arg_names: tuple[str, ...]
    ranking = False

    @property
    def params(self) -> tuple[str, ...]:
        raise NotImplementedError

    def groups(self, order: str = "any") -> list[ParamGroup]:
        raise NotImplementedError

    def body(self, values: Mapping[str, int]) -> Formula:
        raise NotImplementedError

    def instantiate(self, values: Mapping[str, int]) -> PredicateDef:
        missing = [p for p in self.params if p not in values]
        if missing:
            raise TemplateError(f"missing parameter {missing[0]}")
        return PredicateDef(self.arg_names, self.body(values))

    def ground(self, args: Sequence[int]) -> Formula:
        """The predicate at concrete ``args`` as a formula over the parameters."""
        raise NotImplementedError


@dataclass(frozen=True)
class Row:
    coeffs: tuple[tuple[int, int], ...]   # (argument index, coefficient)
    loc: int | None = None

    def value(self, args: Sequence[int]) -> int:
        return sum(c * args[i] for i, c in self.coeffs)

    def expr(self, names: Sequence[str]) -> LinExpr:
        return LinExpr.make({names[i]: c for i, c in self.coeffs})


def interval_rows(indices: Sequence[int], loc: int | None = None) -> list[Row]:
    rows = []
    for i in indices:
        rows.append(Row(((i, 1),), loc))
        rows.append(Row(((i, -1),), loc))
    return rows


def polyhedron_rows(indices: Sequence[int], loc: int | None = None) -> list[Row]:
    """Octagon-style rows: ``±x_i`` and ``±(x_i - x_j)``, ``±(x_i + x_j)``."""
    rows = interval_rows(indices, loc)
    for i, j in itertools.combinations(indices, 2):
        for ci, cj in ((1, -1), (-1, 1), (1, 1), (-1, -1)):
            rows.append(Row(((i, ci), (j, cj)), loc))
    return rows


@dataclass
class BoundsTemplate(Template):
    symbol: PredicateSymbol
    arg_names: tuple[str, ...]
    rows: tuple[Row, ...]
    bound: int = 8
    pc_index: int | None = None
    shape: str = "interval"

    def __post_init__(self) -> None:
        if not self.rows:
            # nullary predicate: a single constant row lets it be false
            self.rows = (Row(()),)
        self._params = tuple(p for k in range(len(self.rows)) for p in self.row_params(k))

    def row_params(self, k: int) -> tuple[str, str]:
        return (f"{self.symbol.name}.r{k}.on", f"{self.symbol.name}.r{k}.c")

    @property
    def params(self) -> tuple[str, ...]:
        return self._params

    def _row_candidates(self, k: int, order: str) -> tuple[tuple[int, int], ...]:
        if not self.rows[k].coeffs:
            consts = [-1]
        else:
            consts = list(range(self.bound, -self.bound - 1, -1))
        on = [(1, c) for c in consts]
        if order == "strongest":
            return tuple(reversed(on)) + ((0, 0),)
        return ((0, 0),) + tuple(on)

    def groups(self, order: str = "any") -> list[ParamGroup]:
        return [ParamGroup(self.row_params(k), self._row_candidates(k, order))
                for k in range(len(self.rows))]

    def top(self) -> dict[str, int]:
        return {p: 0 for p in self.params}

    def bottom(self) -> dict[str, int]:
        """Every row switched on at its strongest constant (an empty box)."""
        out = {}
        for k in range(len(self.rows)):
            on_p, c_p = self.row_params(k)
            out[on_p], out[c_p] = self._row_candidates(k, "strongest")[0]
        return out

    def holds(self, values: Mapping[str, int], args: Sequence[int]) -> bool:
        for k, row in enumerate(self.rows):
            if row.loc is not None and args[self.pc_index] != row.loc:
                continue
            on_p, c_p = self.row_params(k)
            if values[on_p] and row.value(args) > values[c_p]:
                return False
        return True

    def weaken_to(self, values: dict[str, int], args: Sequence[int]) -> bool:
        """Minimally weaken ``values`` in place so that the predicate holds at ``args``."""
        changed = False
        for k, row in enumerate(self.rows):
            if row.loc is not None and args[self.pc_index] != row.loc:
                continue
            on_p, c_p = self.row_params(k)
            r = row.value(args)
            if values[on_p] and r > values[c_p]:
                if row.coeffs and r <= self.bound:
                    values[c_p] = r
                else:
                    values[on_p], values[c_p] = 0, 0
                changed = True
        return changed

    def body(self, values: Mapping[str, int]) -> Formula:
        by_loc: dict[int | None, list[Formula]] = {}
        for k, row in enumerate(self.rows):
            on_p, c_p = self.row_params(k)
            if values[on_p]:
                by_loc.setdefault(row.loc, []).append(le(row.expr(self.arg_names), values[c_p]))
        parts = []
        for loc, rows in by_loc.items():
            box = conj(rows)
            if loc is None:
                parts.append(box)
            else:
                parts.append(implies(eq(var(self.arg_names[self.pc_index]), loc), box))
        return conj(parts)

    def ground(self, args: Sequence[int]) -> Formula:
        parts = []
        for k, row in enumerate(self.rows):
            if row.loc is not None and args[self.pc_index] != row.loc:
                continue
            on_p, c_p = self.row_params(k)
            # on = 0  or  row(args) <= c
            parts.append(disj(eq(on_p, 0), ge(var(c_p), row.value(args))))
        return conj(parts)

    # -- implication order on parameters ---------------------------------------

    def no_weaker_than(self, old: Mapping[str, int]) -> Formula:
        """Parameters whose predicate implies the one given by ``old`` (row-wise)."""
        parts = []
        for k in range(len(self.rows)):
            on_p, c_p = self.row_params(k)
            if old[on_p]:
                parts.append(conj(eq(on_p, 1), le(var(c_p), old[c_p])))
        return conj(parts)

    def no_stronger_than(self, old: Mapping[str, int]) -> Formula:
        parts = []
        for k in range(len(self.rows)):
            on_p, c_p = self.row_params(k)
            if old[on_p]:
                parts.append(disj(eq(on_p, 0), ge(var(c_p), old[c_p])))
            else:
                parts.append(eq(on_p, 0))
        return conj(parts)

    def strictly_stronger(self, old: Mapping[str, int]) -> Formula:
        some = []
        for k in range(len(self.rows)):
            on_p, c_p = self.row_params(k)
            some.append(lt(var(c_p), old[c_p]) if old[on_p] else eq(on_p, 1))
        return conj(self.no_weaker_than(old), disj(some))

    def strictly_weaker(self, old: Mapping[str, int]) -> Formula:
        some = []
        for k in range(len(self.rows)):
            on_p, c_p = self.row_params(k)
            if old[on_p]:
                some.append(disj(eq(on_p, 0), gt(var(c_p), old[c_p])))
        return conj(self.no_stronger_than(old), disj(some))

    def row_implies(self, a: Mapping[str, int], b: Mapping[str, int]) -> bool:
        """Row-wise: the predicate of ``a`` implies that of ``b``."""
        for k in range(len(self.rows)):
            on_p, c_p = self.row_params(k)
            if b[on_p] and (not a[on_p] or a[c_p] > b[c_p]):
                return False
        return True

    def status(self, values: Mapping[str, int]) -> str:
        if all(not values[self.row_params(k)[0]] for k in range(len(self.rows))):
            return "top"
        if self._empty(values):
            return "bottom"
        return "solved"

    def _empty(self, values: Mapping[str, int]) -> bool:
        """Every location box is empty (only detects opposite unit rows)."""
        locs: dict[int | None, dict[tuple, int]] = {}
        constant_false: dict[int | None, bool] = {}
        for k, row in enumerate(self.rows):
            on_p, c_p = self.row_params(k)
            if not values[on_p]:
                continue
            if not row.coeffs:
                constant_false[row.loc] = constant_false.get(row.loc, False) or values[c_p] < 0
                continue
            locs.setdefault(row.loc, {})[row.coeffs] = values[c_p]
        all_locs = {r.loc for r in self.rows}
        for loc in all_locs:
            if constant_false.get(loc):
                continue
            bounds = locs.get(loc, {})
            empty = False
            for coeffs, c in bounds.items():
                opp = tuple((i, -a) for i, a in coeffs)
                if opp in bounds and c + bounds[opp] < 0:
                    empty = True
            if not empty:
                return False
        return True


@dataclass
class RankingTemplate(Template):
    """Linear (``k = 1``) or lexicographic (``k > 1``) ranking relation over ``(x, x')``."""

    symbol: PredicateSymbol
    arg_names: tuple[str, ...]      # x followed by x'
    k: int = 1
    coeff_range: tuple[int, int] = (-1, 1)
    const_range: tuple[int, int] = (-8, 8)
    ranking = True

    def __post_init__(self) -> None:
        if len(self.arg_names) % 2:
            raise TemplateError("ranking relation needs an even arity")
        self.n = len(self.arg_names) // 2
        self._params = tuple(p for j in range(self.k) for p in self.component_params(j))

    @property
    def shape(self) -> str:
        return "linear-ranking" if self.k == 1 else "lexicographic-ranking"

    def component_params(self, j: int) -> tuple[str, ...]:
        base = f"{self.symbol.name}.k{j}"
        return tuple(f"{base}.a{i}" for i in range(self.n)) + (f"{base}.c",)

    @property
    def params(self) -> tuple[str, ...]:
        return self._params

    def _coeff_candidates(self) -> tuple[tuple[int, ...], ...]:
        lo, hi = self.coeff_range
        cands = list(itertools.product(range(lo, hi + 1), repeat=self.n))
        cands.sort(key=lambda t: (sum(abs(c) for c in t), tuple(abs(c) for c in t),
                                  tuple(c < 0 for c in t)))
        return tuple(cands)

    def groups(self, order: str = "any") -> list[ParamGroup]:
        out = []
        consts = tuple((c,) for c in constant_order(*self.const_range))
        coeffs = self._coeff_candidates()
        # all coefficient vectors first: decrease conditions do not involve constants
        for j in range(self.k):
            out.append(ParamGroup(self.component_params(j)[:-1], coeffs))
        for j in range(self.k):
            out.append(ParamGroup(self.component_params(j)[-1:], consts))
        return out

    def rank_expr(self, values: Mapping[str, int], j: int, primed: bool) -> LinExpr:
        ps = self.component_params(j)
        names = self.arg_names[self.n:] if primed else self.arg_names[:self.n]
        return LinExpr.make({v: values[p] for v, p in zip(names, ps)}, values[ps[-1]])

    def body(self, values: Mapping[str, int]) -> Formula:
        alts = []
        for j in range(self.k):
            parts = [ge(self.rank_expr(values, l, False) - self.rank_expr(values, l, True), 0)
                     for l in range(j)]
            r, rp = self.rank_expr(values, j, False), self.rank_expr(values, j, True)
            parts += [ge(r, 0), ge(r - rp, 1)]
            alts.append(conj(parts))
        return disj(alts)

    def _ground_rank(self, args: Sequence[int], j: int, primed: bool) -> LinExpr:
        ps = self.component_params(j)
        vals = args[self.n:] if primed else args[:self.n]
        return LinExpr.make({p: v for p, v in zip(ps, vals)}) + var(ps[-1])

    def ground(self, args: Sequence[int]) -> Formula:
        alts = []
        for j in range(self.k):
            parts = []
            for l in range(j):
                d = self._ground_rank(args, l, False) - self._ground_rank(args, l, True)
                parts.append(ge(d, 0))
            r, rp = self._ground_rank(args, j, False), self._ground_rank(args, j, True)
            parts += [ge(r, 0), ge(r - rp, 1)]
            alts.append(conj(parts))
        return disj(alts)

    def status(self, values: Mapping[str, int]) -> str:
        return "solved"

    def holds(self, values: Mapping[str, int], args: Sequence[int]) -> bool:
        r = [self.rank_values(values, args[:self.n]), self.rank_values(values, args[self.n:])]
        for j in range(self.k):
            if all(r[0][l] >= r[1][l] for l in range(j)) and r[0][j] >= 0 and r[0][j] - r[1][j] >= 1:
                return True
        return False

    def rank_values(self, values: Mapping[str, int], state: Sequence[int]) -> tuple[int, ...]:
        """Value of each ranking component at a concrete state."""
        out = []
        for j in range(self.k):
            ps = self.component_params(j)
            out.append(sum(values[p] * s for p, s in zip(ps, state)) + values[ps[-1]])
        return tuple(out)


@dataclass(frozen=True)
class Instance:
    """A template together with a parameter valuation."""

    template: Template
    values: tuple[tuple[str, int], ...] = field(default=())

    @staticmethod
    def of(template: Template, values: Mapping[str, int]) -> "Instance":
        return Instance(template, tuple((p, values[p]) for p in template.params))

    @property
    def valuation(self) -> dict[str, int]:
        return dict(self.values)

    @property
    def definition(self) -> PredicateDef:
        return self.template.instantiate(self.valuation)

    @property
    def status(self) -> str:
        return self.template.status(self.valuation)


@dataclass(frozen=True)
class TemplateConfig:
    domain: str = "interval"            # interval | polyhedron
    bound: int = 8
    ranking_k: int = 1
    coeff_range: tuple[int, int] = (-1, 1)
    const_range: tuple[int, int] = (-8, 8)


def make_template(sym: PredicateSymbol, arg_names: Sequence[str], config: TemplateConfig,
                  pc_index: int | None = None, locations: Sequence[int] = ()) -> Template:
    """Default template of a predicate: rankings for ``RR``, bound rows otherwise.

    An invariant over a fused state with a location variable gets one box per
    location instead of bounds on the location variable itself.
    """
    arg_names = tuple(arg_names)
    if sym.kind == "RR":
        return RankingTemplate(sym, arg_names, config.ranking_k, config.coeff_range,
                               config.const_range)
    if config.domain not in ("interval", "polyhedron"):
        raise TemplateError(f"unknown domain {config.domain!r}")
    rows_of = interval_rows if config.domain == "interval" else polyhedron_rows
    if sym.kind == "Inv" and pc_index is not None:
        idx = [i for i in range(len(arg_names)) if i != pc_index]
        rows: list[Row] = []
        for loc in locations:
            rows.extend(rows_of(idx, loc))
    else:
        rows = rows_of(range(len(arg_names)))
    return BoundsTemplate(sym, arg_names, tuple(rows), config.bound, pc_index, config.domain)
