"""Lowering of a procedure to a symbolic input/output transition system.

All loop heads of a procedure are fused into one transition system.  When
there is more than one location (several loop heads, or a loop plus a path
that reaches the exit without passing any loop head), a location variable
``pc.loc`` is added to the state; the exit location is 0 and loop heads are
numbered from 1 in source order.

Each path between cut points keeps its own conjunction of constraints and
call placeholders, so a summary premise only constrains the path that makes
the call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from ..logic import (App, Formula, LinExpr, PredicateSymbol, conj, const,
                     disj, eq, neg, substitute, var)
from .syntax import (Assign, Call, CallSite, If, Procedure, Return, Stmt,
                     UnsupportedConstruct, While)

__all__ = ["PC", "EXIT", "ENTRY", "Path", "IOTS", "lower_to_iots", "prime",
           "in_var", "site_in", "site_out", "summary_symbol"]

PC = "pc.loc"
EXIT = 0
ENTRY = -1


def prime(v: str) -> str:
    return v + "'"


def in_var(v: str) -> str:
    return v + ".in"


def site_in(sid: int, j: int) -> str:
    return f"cs{sid}.in{j}"


def site_out(sid: int, j: int) -> str:
    return f"cs{sid}.out{j}"


def summary_symbol(callee: str, n_in: int, n_out: int) -> PredicateSymbol:
    roles = tuple(f"in{j}" for j in range(n_in)) + tuple(f"out{j}" for j in range(n_out))
    return PredicateSymbol("Summary", callee, n_in + n_out, roles=roles)


@dataclass(frozen=True)
class Path:
    """One loop-free segment between cut points.

    ``formula`` is stated over the segment's role variables: Init paths over
    ``(x.in, x)``, Trans paths over ``(x, x')`` and Out paths over
    ``(x, out.j)``; call-site intermediates ``csI.inJ``/``csI.outJ`` may occur.
    """

    source: int
    target: int
    formula: Formula
    sites: tuple[int, ...] = ()


@dataclass(frozen=True)
class IOTS:
    proc: str
    input_vars: tuple[str, ...]
    state_vars: tuple[str, ...]
    output_vars: tuple[str, ...]
    init_paths: tuple[Path, ...]
    trans_paths: tuple[Path, ...]
    out_paths: tuple[Path, ...]
    heads: tuple[int, ...]
    has_pc: bool
    sites: tuple[CallSite, ...] = field(default=())
    call_paths: tuple[Path, ...] = field(default=())

    @property
    def init(self) -> Formula:
        return disj(p.formula for p in self.init_paths)

    @property
    def trans(self) -> Formula:
        return disj(p.formula for p in self.trans_paths)

    @property
    def out(self) -> Formula:
        return disj(p.formula for p in self.out_paths)

    @property
    def primed_vars(self) -> tuple[str, ...]:
        return tuple(prime(v) for v in self.state_vars)

    def site_vars(self, sid: int) -> tuple[str, ...]:
        cs = next(c for c in self.sites if c.id == sid)
        return (tuple(site_in(sid, j) for j in range(len(cs.args)))
                + tuple(site_out(sid, j) for j in range(len(cs.results))))

    def prefixes(self, sid: int) -> list[Path]:
        """Path prefixes from a cut point up to (not including) call site ``sid``."""
        return [p for p in self.call_paths if p.target == sid]

    def paths_with_site(self, sid: int) -> dict[str, list[Path]]:
        return {
            "init": [p for p in self.init_paths if sid in p.sites],
            "trans": [p for p in self.trans_paths if sid in p.sites],
            "out": [p for p in self.out_paths if sid in p.sites],
        }


@dataclass
class _SymState:
    env: dict[str, LinExpr]
    guards: list[Formula]
    sites: list[int]
    returns: tuple[LinExpr, ...] | None = None
    prefixes: list[tuple[int, Formula]] = field(default_factory=list)

    def copy(self) -> "_SymState":
        return _SymState(dict(self.env), list(self.guards), list(self.sites), self.returns,
                         list(self.prefixes))


def _check_linear(proc: Procedure) -> None:
    # Nonlinear syntax is rejected by the parser; this catches hand-built ASTs.
    for s in proc.body:
        if not isinstance(s, (Assign, If, While, Call, Return)):
            raise UnsupportedConstruct(f"{proc.name}: unsupported statement {s!r}")


def _continuations(stmts: tuple[Stmt, ...], cont: tuple, after: dict) -> None:
    for i, s in enumerate(stmts):
        rest = (("stmts", stmts[i + 1:]),) + cont
        if isinstance(s, While):
            after[s.id] = rest
            _continuations(s.body, (("head", s.id),), after)
        elif isinstance(s, If):
            _continuations(s.then, rest, after)
            _continuations(s.orelse, rest, after)


def _run(actions: tuple, st: _SymState, proc: str) -> Iterator[tuple[int, _SymState]]:
    while actions:
        kind, payload = actions[0]
        if kind == "head":
            yield payload, st
            return
        if not payload:
            actions = actions[1:]
            continue
        s = payload[0]
        rest = (("stmts", payload[1:]),) + actions[1:]
        if isinstance(s, Assign):
            st.env[s.target] = s.expr.subst(st.env)
            actions = rest
        elif isinstance(s, If):
            branches = [(s.then, s.cond), (s.orelse, None if s.cond is None else neg(s.cond))]
            for body, guard in branches:
                nxt = st.copy()
                if guard is not None:
                    nxt.guards.append(substitute(guard, st.env))
                yield from _run((("stmts", body),) + rest, nxt, proc)
            return
        elif isinstance(s, While):
            yield s.id, st
            return
        elif isinstance(s, Call):
            cs = s.site
            ins = [var(site_in(cs.id, j)) for j in range(len(cs.args))]
            outs = [var(site_out(cs.id, j)) for j in range(len(cs.results))]
            for j, a in enumerate(cs.args):
                st.guards.append(eq(ins[j], a.subst(st.env)))
            st.prefixes.append((cs.id, conj(st.guards)))
            st.guards.append(App(summary_symbol(cs.callee, len(ins), len(outs)), tuple(ins + outs),
                                 f"{proc}:{cs.id}"))
            st.sites.append(cs.id)
            for j, r in enumerate(cs.results):
                st.env[r] = outs[j]
            actions = rest
        elif isinstance(s, Return):
            st.returns = tuple(e.subst(st.env) for e in s.values)
            actions = rest
        else:
            raise UnsupportedConstruct(f"unsupported statement {s!r}")
    yield EXIT, st


def lower_to_iots(proc: Procedure) -> IOTS:
    """Build the (Init, Trans, Out) triple of ``proc``."""
    _check_linear(proc)
    loops = {w.id: w for w in proc.loops()}
    after: dict[int, tuple] = {}
    _continuations(proc.body, (), after)
    n_out = proc.returns_arity
    outs = tuple(f"out.{j}" for j in range(n_out))

    # Enumerate raw segments first; location layout depends on which exist.
    entry_env = {v: var(in_var(v)) if v in proc.params else const(0) for v in proc.vars}
    raw_entry = list(_run((("stmts", proc.body),), _SymState(entry_env, [], []), proc.name))
    raw_heads: dict[int, list[tuple[int, _SymState]]] = {}
    for lid, w in loops.items():
        segs = []
        ident = {v: var(v) for v in proc.vars}
        enter = _SymState(dict(ident), [], [])
        leave = _SymState(dict(ident), [], [])
        if w.cond is not None:
            enter.guards.append(w.cond)
            leave.guards.append(neg(w.cond))
        segs.extend(_run((("stmts", w.body), ("head", lid)), enter, proc.name))
        segs.extend(_run(after[lid], leave, proc.name))
        raw_heads[lid] = segs

    bypass = any(t == EXIT for t, _ in raw_entry)
    locations = list(loops)
    if not loops or bypass:
        locations.append(EXIT)
    has_pc = len(locations) > 1
    state = proc.vars + ((PC,) if has_pc else ())

    def loc_eq(name: str, loc: int) -> list[Formula]:
        return [eq(name, loc)] if has_pc else []

    def returns_of(st: _SymState) -> list[Formula]:
        vals = st.returns if st.returns is not None else ()
        return [eq(o, e) for o, e in zip(outs, vals)]

    init_paths = []
    out_paths = []
    call_paths: dict[tuple, Path] = {}

    def add_prefixes(source: int, st: _SymState) -> None:
        for sid, f in st.prefixes:
            f = conj(loc_eq(PC, source) + [f]) if source != ENTRY else f
            call_paths.setdefault((source, sid, f), Path(source, sid, f, (sid,)))

    for target, st in raw_entry:
        add_prefixes(ENTRY, st)
        parts = list(st.guards) + [eq(v, st.env[v]) for v in proc.vars] + loc_eq(PC, target)
        init_paths.append(Path(ENTRY, target, conj(parts), tuple(st.sites)))
    if EXIT in locations:
        # Leaving from the exit location: returned values are read off the state.
        ret_exprs = _exit_return_exprs(proc)
        parts = loc_eq(PC, EXIT) + [eq(o, e) for o, e in zip(outs, ret_exprs)]
        out_paths.append(Path(EXIT, EXIT, conj(parts), ()))

    trans_paths = []
    for lid, segs in raw_heads.items():
        for target, st in segs:
            add_prefixes(lid, st)
            if target == EXIT:
                parts = loc_eq(PC, lid) + list(st.guards) + returns_of(st)
                out_paths.append(Path(lid, EXIT, conj(parts), tuple(st.sites)))
            else:
                parts = (loc_eq(PC, lid) + list(st.guards)
                         + [eq(prime(v), st.env[v]) for v in proc.vars]
                         + loc_eq(prime(PC), target))
                trans_paths.append(Path(lid, target, conj(parts), tuple(st.sites)))

    return IOTS(
        proc=proc.name,
        input_vars=tuple(in_var(p) for p in proc.params),
        state_vars=state,
        output_vars=outs,
        init_paths=tuple(init_paths),
        trans_paths=tuple(trans_paths),
        out_paths=tuple(out_paths),
        heads=tuple(loops),
        has_pc=has_pc,
        sites=proc.call_sites,
        call_paths=tuple(call_paths.values()),
    )


def _exit_return_exprs(proc: Procedure) -> tuple[LinExpr, ...]:
    last = proc.body[-1] if proc.body else None
    if isinstance(last, Return):
        return last.values
    return ()
