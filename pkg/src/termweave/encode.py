"""Constraint-system construction.

For every procedure ``f`` three clauses are generated:

1. ``Init_f(x_in, x) => Inv_f(x)``
2. ``Inv_f(x) & Trans_f(x, x') => Inv_f(x') & RR_f(x, x')``
3. ``Init_f(x_in, x) & Inv_f(x') & Out_f(x', x_out) => Summary_f(x_in, x_out)``

Summary applications of callees are embedded in the path of ``Init``,
``Trans`` or ``Out`` that performs the call, so they only constrain that path.

Splitting a callee ``h`` renames ``Summary_h`` to ``Sum_h`` and adds one
calling-context clause per call site ``h_i``; the callee's own clauses then get
``CallCtx_h(x_in, _)`` (disjoined over its call sites) as an extra premise.

Recursive call sites additionally get a clause that ranks input frames of the
recursive component: ``Prefix(x_in, cs_in) => RR_rec(f, x_in, h, cs_in)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .ir import (ENTRY, EXIT, IOTS, PC, CallSite, Program, in_var, lower_to_iots,
                 prime, recursive_sccs, site_in, site_out, summary_symbol)
from .logic import (TRUE, App, Formula, Or, PredicateSymbol, conj, const, disj,
                    free_vars, implies, map_apps, pretty, smt_symbol, substitute,
                    symbols, to_smtlib, var)

__all__ = [
    "SCHEMAS", "Clause", "ConstraintSystem", "EncodingError", "build_constraints",
    "build_callctx_clause", "split_summary", "split_all", "to_chc_smtlib",
    "recursive_sites", "site_tag", "parse_site_tag",
]

INIT, STEP, EXIT_SCHEMA, CALLCTX, RECURSION = (
    "init=>inv", "inv&trans=>inv&rr", "exit=>summary", "callctx", "recursion")
SCHEMAS = (INIT, STEP, EXIT_SCHEMA, CALLCTX, RECURSION)
CTX_OUT = "ctx.out"


class EncodingError(ValueError):
    pass


def site_tag(caller: str, sid: int) -> str:
    return f"{caller}:{sid}"


def parse_site_tag(tag: str) -> tuple[str, int]:
    caller, sid = tag.rsplit(":", 1)
    return caller, int(sid)


@dataclass(frozen=True)
class Clause:
    """``conj(premises) => conclusion``, universally quantified over ``universals``."""

    premises: tuple[Formula, ...]
    conclusion: Formula
    universals: tuple[str, ...]
    proc: str
    schema: str
    site: int | None = None

    @property
    def formula(self) -> Formula:
        return implies(conj(self.premises), self.conclusion)

    @property
    def label(self) -> str:
        s = f"{self.proc}/{self.schema}"
        return s if self.site is None else f"{s}@{self.site}"

    def premise_symbols(self) -> frozenset[PredicateSymbol]:
        out: set[PredicateSymbol] = set()
        for p in self.premises:
            out |= symbols(p)
        return frozenset(out)

    def conclusion_symbols(self) -> frozenset[PredicateSymbol]:
        return symbols(self.conclusion)

    def __str__(self) -> str:
        lhs = " && ".join(f"({pretty(p)})" if isinstance(p, Or) else pretty(p)
                          for p in self.premises) or "true"
        return f"[{self.label}] {lhs} ==> {pretty(self.conclusion)}"


def _clause(premises: Iterable[Formula], conclusion: Formula, proc: str, schema: str,
            site: int | None = None) -> Clause:
    premises = tuple(p for p in premises if p != TRUE)
    fv: set[str] = set(free_vars(conclusion))
    for p in premises:
        fv |= free_vars(p)
    return Clause(premises, conclusion, tuple(sorted(fv)), proc, schema, site)


@dataclass(frozen=True)
class ConstraintSystem:
    prog: Program
    iots: Mapping[str, IOTS]
    clauses: tuple[Clause, ...]
    unknowns: tuple[PredicateSymbol, ...]
    split: frozenset[str] = frozenset()
    arg_names: Mapping[tuple, tuple[str, ...]] = field(default_factory=dict)
    # location layout of each procedure's fused state: (pc index or None, locations)
    layout: Mapping[str, tuple[int | None, tuple[int, ...]]] = field(default_factory=dict)

    @property
    def origin(self) -> dict[int, tuple[str, str]]:
        return {i: (c.proc, c.schema) for i, c in enumerate(self.clauses)}

    def clauses_of(self, proc: str | None = None, schema: str | None = None) -> list[Clause]:
        return [c for c in self.clauses
                if (proc is None or c.proc == proc) and (schema is None or c.schema == schema)]

    def schema_counts(self) -> dict[str, int]:
        out = {s: 0 for s in SCHEMAS}
        for c in self.clauses:
            out[c.schema] += 1
        return out

    def symbol(self, kind: str, owner: str, site: str | None = None) -> PredicateSymbol:
        for s in self.unknowns:
            if s.key == (kind, owner, site, "over"):
                return s
        raise KeyError((kind, owner, site))

    def summary_of(self, proc: str) -> PredicateSymbol:
        kind = "Sum" if proc in self.split else "Summary"
        return self.symbol(kind, proc)

    def names_of(self, sym: PredicateSymbol) -> tuple[str, ...]:
        return self.arg_names[sym.key]

    def owner_proc(self, sym: PredicateSymbol) -> str:
        """Procedure whose clauses define ``sym`` (the caller for a calling context)."""
        if sym.kind == "CallCtx":
            return parse_site_tag(sym.site)[0]
        return sym.owner


def recursive_sites(prog: Program) -> dict[tuple[str, int], frozenset[str]]:
    """Call sites whose callee lies in the caller's call-graph cycle, with that cycle."""
    sccs = recursive_sccs(prog)
    out = {}
    for p in prog.procedures:
        for cs in p.call_sites:
            comp = sccs.get(p.name)
            if comp is not None and cs.callee in comp:
                out[(p.name, cs.id)] = comp
    return out


def _locations(t: IOTS) -> tuple[int, ...]:
    locs = list(t.heads)
    if not t.heads or any(p.target == EXIT for p in t.init_paths):
        locs.append(EXIT)
    return tuple(locs)


def _summary_like(kind: str, callee: str, n_in: int, n_out: int) -> PredicateSymbol:
    base = summary_symbol(callee, n_in, n_out)
    return PredicateSymbol(kind, callee, base.arity, roles=base.roles)


class _Builder:
    def __init__(self, prog: Program, iots: Mapping[str, IOTS], split: frozenset[str]):
        for p in prog.procedures:
            if p.name not in iots:
                raise EncodingError(f"missing IOTS for procedure {p.name}")
        self.prog = prog
        self.iots = iots
        self.split = split
        self.unknowns: list[PredicateSymbol] = []
        self.arg_names: dict[tuple, tuple[str, ...]] = {}
        self.rec_sites = recursive_sites(prog)
        self.callers: dict[str, list[tuple[str, CallSite]]] = {}
        for p in prog.procedures:
            for cs in p.call_sites:
                self.callers.setdefault(cs.callee, []).append((p.name, cs))
        self.sym: dict[tuple, PredicateSymbol] = {}
        self._declare()

    # -- symbols ---------------------------------------------------------------

    def _add(self, sym: PredicateSymbol, names: tuple[str, ...]) -> None:
        if sym.key in self.sym:
            return
        self.sym[sym.key] = sym
        self.unknowns.append(sym)
        self.arg_names[sym.key] = names

    def _io_names(self, proc: str) -> tuple[str, ...]:
        t = self.iots[proc]
        return t.input_vars + t.output_vars

    def _declare(self) -> None:
        for p in self.prog.procedures:
            t = self.iots[p.name]
            n = len(t.state_vars)
            self._add(PredicateSymbol("Inv", p.name, n, roles=t.state_vars), t.state_vars)
            self._add(PredicateSymbol("RR", p.name, 2 * n, roles=t.state_vars + t.primed_vars),
                      t.state_vars + t.primed_vars)
            kind = "Sum" if p.name in self.split else "Summary"
            self._add(_summary_like(kind, p.name, len(t.input_vars), len(t.output_vars)),
                      self._io_names(p.name))
        for p in self.prog.procedures:
            if p.name not in self.split:
                continue
            for caller, cs in self.callers.get(p.name, []):
                sym = self._callctx_symbol(caller, cs)
                self._add(sym, self._io_names(p.name))
        for comp in self._rec_components():
            arity = self._frame_arity(comp)
            names = ("rec.pid",) + tuple(f"rec.a{j}" for j in range(arity - 1))
            sym = PredicateSymbol("RR", min(comp), 2 * arity, site="rec",
                                  roles=names + tuple(prime(v) for v in names))
            self._add(sym, names + tuple(prime(v) for v in names))

    def _callctx_symbol(self, caller: str, cs: CallSite) -> PredicateSymbol:
        t = self.iots[cs.callee]
        base = summary_symbol(cs.callee, len(t.input_vars), len(t.output_vars))
        return PredicateSymbol("CallCtx", cs.callee, base.arity, site=site_tag(caller, cs.id),
                               roles=base.roles)

    def _rec_components(self) -> list[frozenset[str]]:
        comps = {c for c in self.rec_sites.values()}
        return sorted(comps, key=min)

    def _frame_arity(self, comp: frozenset[str]) -> int:
        return 1 + max(len(self.prog.proc(f).params) for f in comp)

    def inv(self, proc: str) -> PredicateSymbol:
        return self.sym[("Inv", proc, None, "over")]

    def rr(self, proc: str) -> PredicateSymbol:
        return self.sym[("RR", proc, None, "over")]

    def summary(self, proc: str) -> PredicateSymbol:
        kind = "Sum" if proc in self.split else "Summary"
        return self.sym[(kind, proc, None, "over")]

    def rec_rr(self, comp: frozenset[str]) -> PredicateSymbol:
        return self.sym[("RR", min(comp), "rec", "over")]

    # -- formulas ------------------------------------------------------------------

    def rename_summaries(self, f: Formula) -> Formula:
        """Point placeholder applications at ``Sum_h`` for split callees."""
        def fix(a: App) -> Formula:
            if a.symbol.kind == "Summary" and a.symbol.owner in self.split:
                return App(self.summary(a.symbol.owner), a.args, a.site)
            return a
        return map_apps(f, fix)

    def context_premise(self, proc: str, inputs: tuple[str, ...]) -> Formula:
        """Disjunction of the calling contexts of ``proc`` over ``inputs`` and fresh outputs."""
        if proc not in self.split or proc == self.prog.entry:
            return TRUE
        t = self.iots[proc]
        outs = tuple(var(f"{CTX_OUT}{j}") for j in range(len(t.output_vars)))
        args = tuple(var(v) for v in inputs) + outs
        alts = [App(self._callctx_symbol(caller, cs), args)
                for caller, cs in self.callers.get(proc, [])]
        return disj(alts) if alts else TRUE

    def schema_clauses(self, proc: str) -> list[Clause]:
        t = self.iots[proc]
        x = tuple(var(v) for v in t.state_vars)
        xp = tuple(var(v) for v in t.primed_vars)
        ctx = self.context_premise(proc, t.input_vars)
        init = self.rename_summaries(t.init)
        trans = self.rename_summaries(t.trans)
        inv, rr, summ = self.inv(proc), self.rr(proc), self.summary(proc)
        # Out is stated over (x, out); clause 3 reads it at the primed state and
        # primes call-site intermediates so they do not alias those of Init.
        out_rename = {v: var(prime(v)) for v in t.state_vars}
        for cs in t.sites:
            for v in t.site_vars(cs.id):
                out_rename[v] = var(prime(v))
        out = substitute(self.rename_summaries(t.out), out_rename)
        io = tuple(var(v) for v in t.input_vars + t.output_vars)
        return [
            _clause([ctx, init], App(inv, x), proc, INIT),
            _clause([ctx, App(inv, x), trans], conj(App(inv, xp), App(rr, x + xp)), proc, STEP),
            _clause([init, App(inv, xp), out], App(summ, io), proc, EXIT_SCHEMA),
        ]

    def _site(self, proc: str, sid: int) -> CallSite:
        try:
            return self.prog.proc(proc).site(sid)
        except (KeyError, StopIteration, LookupError) as e:
            raise EncodingError(f"no call site {sid} in {proc}") from e

    def _prefix_premise(self, proc: str, sid: int) -> Formula:
        t = self.iots[proc]
        prefixes = t.prefixes(sid)
        if not prefixes:
            raise EncodingError(f"call site {sid} of {proc} has no placeholder")
        ctx = self.context_premise(proc, t.input_vars)
        x = tuple(var(v) for v in t.state_vars)
        alts = []
        for p in prefixes:
            body = self.rename_summaries(p.formula)
            if p.source == ENTRY:
                alts.append(conj(ctx, body))
            else:
                alts.append(conj(App(self.inv(proc), x), body))
        return disj(alts)

    def callctx_clause(self, proc: str, sid: int) -> Clause:
        cs = self._site(proc, sid)
        premise = self._prefix_premise(proc, sid)
        t = self.iots[proc]
        args = tuple(var(v) for v in t.site_vars(sid))
        return _clause([premise], App(self._callctx_symbol(proc, cs), args), proc, CALLCTX, sid)

    def recursion_clause(self, proc: str, sid: int) -> Clause:
        cs = self._site(proc, sid)
        comp = self.rec_sites[(proc, sid)]
        order = sorted(comp)
        arity = self._frame_arity(comp)
        t = self.iots[proc]

        def frame(f: str, values: list) -> tuple:
            vals = [const(order.index(f))] + values
            return tuple(vals + [const(0)] * (arity - len(vals)))

        caller = frame(proc, [var(v) for v in t.input_vars])
        callee = frame(cs.callee, [var(site_in(sid, j)) for j in range(len(cs.args))])
        return _clause([self._prefix_premise(proc, sid)], App(self.rec_rr(comp), caller + callee),
                       proc, RECURSION, sid)

    def build(self) -> ConstraintSystem:
        clauses: list[Clause] = []
        for p in self.prog.procedures:
            clauses.extend(self.schema_clauses(p.name))
        for p in self.prog.procedures:
            for cs in p.call_sites:
                if cs.callee in self.split:
                    clauses.append(self.callctx_clause(p.name, cs.id))
        for p in self.prog.procedures:
            for cs in p.call_sites:
                if (p.name, cs.id) in self.rec_sites:
                    clauses.append(self.recursion_clause(p.name, cs.id))
        layout = {}
        for p in self.prog.procedures:
            t = self.iots[p.name]
            pc = t.state_vars.index(PC) if t.has_pc else None
            layout[p.name] = (pc, _locations(t))
        return ConstraintSystem(self.prog, dict(self.iots), tuple(clauses), tuple(self.unknowns),
                                self.split, dict(self.arg_names), layout)


def build_constraints(prog: Program, iots: Mapping[str, IOTS] | None = None,
                      split: Iterable[str] = ()) -> ConstraintSystem:
    """The unsplit system, or the system with the given callees split."""
    if iots is None:
        iots = {p.name: lower_to_iots(p) for p in prog.procedures}
    split = frozenset(split)
    for h in split:
        prog.proc(h)
    return _Builder(prog, iots, split).build()


def split_summary(cs: ConstraintSystem, caller: str, sid: int) -> ConstraintSystem:
    """Split the summary of the callee at ``caller``'s call site ``sid``.

    All call sites of that callee receive calling-context clauses, since the
    callee's clauses take the disjunction of its contexts as a premise.
    """
    try:
        site = cs.prog.proc(caller).site(sid)
    except (KeyError, StopIteration, LookupError) as e:
        raise EncodingError(f"no call site {sid} in {caller}") from e
    return build_constraints(cs.prog, cs.iots, cs.split | {site.callee})


def split_all(cs: ConstraintSystem) -> ConstraintSystem:
    callees = {s.callee for p in cs.prog.procedures for s in p.call_sites}
    return build_constraints(cs.prog, cs.iots, cs.split | callees)


def build_callctx_clause(cs: ConstraintSystem, caller: str, sid: int) -> Clause:
    """The calling-context clause of a site (its callee is split if it was not)."""
    site = cs.prog.proc(caller).site(sid)
    split = cs.split | {site.callee}
    return _Builder(cs.prog, cs.iots, split).callctx_clause(caller, sid)


def to_chc_smtlib(cs: ConstraintSystem) -> str:
    """CHC-style SMT-LIB2 text.

    Ranking relations are exported as plain unknowns; their well-foundedness
    is a property of the templates used here and is not expressible in CHC.
    """
    lines = ["(set-logic HORN)"]
    for s in cs.unknowns:
        sorts = " ".join(["Int"] * s.arity)
        lines.append(f"(declare-fun {smt_symbol(s.name)} ({sorts}) Bool)")
    for c in cs.clauses:
        body = to_smtlib(c.formula)
        lines.append(f"; {c.label}")
        if c.universals:
            binds = " ".join(f"({smt_symbol(v)} Int)" for v in c.universals)
            lines.append(f"(assert (forall ({binds}) {body}))")
        else:
            lines.append(f"(assert {body})")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"
