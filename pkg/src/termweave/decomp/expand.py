"""Semantics-preserving program expansions: loop unrolling and call inlining."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from ..ir.syntax import (Assign, Call, CallSite, If, Procedure, Program, Return, Stmt, While,
                         make_procedure)
from ..logic import LinExpr, const, substitute, var

__all__ = ["Unroll", "Inline", "expand"]


@dataclass(frozen=True)
class Unroll:
    """Peel ``k`` guarded copies of a loop body; ``proc``/``loop`` of None select all."""

    k: int = 1
    proc: str | None = None
    loop: int | None = None

    def describe(self) -> str:
        where = "all loops" if self.proc is None else f"{self.proc}" + (
            "" if self.loop is None else f" loop {self.loop}")
        return f"unroll k={self.k} ({where})"


@dataclass(frozen=True)
class Inline:
    """Inline call sites up to ``depth`` levels; ``proc``/``site`` of None select all."""

    depth: int = 1
    proc: str | None = None
    site: int | None = None

    def describe(self) -> str:
        where = "all sites" if self.proc is None else f"{self.proc}" + (
            "" if self.site is None else f" site {self.site}")
        return f"inline depth={self.depth} ({where})"


def _peel(loop: While, k: int) -> Stmt:
    # The loop stays inside the guards, so its head only sees peeled states.
    inner: Stmt = loop
    for _ in range(k):
        inner = If(loop.cond, loop.body + (inner,), (), loop.pos)
    return inner


def _unroll_block(stmts: Sequence[Stmt], k: int, loop: int | None) -> tuple[Stmt, ...]:
    out: list[Stmt] = []
    for s in stmts:
        if isinstance(s, While):
            body = _unroll_block(s.body, k, loop)
            w = replace(s, body=body)
            out.append(_peel(w, k) if loop is None or s.id == loop else w)
        elif isinstance(s, If):
            out.append(replace(s, then=_unroll_block(s.then, k, loop),
                               orelse=_unroll_block(s.orelse, k, loop)))
        else:
            out.append(s)
    return tuple(out)


def _rename_block(stmts: Sequence[Stmt], names: Mapping[str, str]) -> tuple[Stmt, ...]:
    m = {k: var(v) for k, v in names.items()}
    out: list[Stmt] = []
    for s in stmts:
        if isinstance(s, Assign):
            out.append(replace(s, target=names[s.target], expr=s.expr.subst(m)))
        elif isinstance(s, If):
            cond = None if s.cond is None else substitute(s.cond, m)
            out.append(replace(s, cond=cond, then=_rename_block(s.then, names),
                               orelse=_rename_block(s.orelse, names)))
        elif isinstance(s, While):
            cond = None if s.cond is None else substitute(s.cond, m)
            out.append(replace(s, cond=cond, body=_rename_block(s.body, names)))
        elif isinstance(s, Call):
            site = s.site
            out.append(replace(s, site=replace(
                site, args=tuple(a.subst(m) for a in site.args),
                results=tuple(names[r] for r in site.results))))
        elif isinstance(s, Return):
            out.append(replace(s, values=tuple(e.subst(m) for e in s.values)))
    return tuple(out)


class _Inliner:
    def __init__(self, prog: Program, host: Procedure):
        self.prog = prog
        self.taken = set(host.vars)
        self.counter = 0

    def fresh_names(self, callee: Procedure) -> dict[str, str]:
        while True:
            self.counter += 1
            prefix = f"{callee.name}{self.counter}_"
            names = {v: prefix + v for v in callee.vars}
            if not (set(names.values()) & self.taken):
                self.taken |= set(names.values())
                return names

    def expand_call(self, site: CallSite, pos, depth: int) -> tuple[Stmt, ...]:
        callee = self.prog.proc(site.callee)
        names = self.fresh_names(callee)
        out: list[Stmt] = []
        for p, a in zip(callee.params, site.args):
            out.append(Assign(names[p], a, pos))
        for v in callee.locals:
            out.append(Assign(names[v], const(0), pos))
        body = callee.body
        ret: tuple[LinExpr, ...] = ()
        if body and isinstance(body[-1], Return):
            ret = body[-1].values
            body = body[:-1]
        body = _rename_block(body, names)
        m = {k: var(v) for k, v in names.items()}
        if depth > 1:
            body = self.block(body, depth - 1, None)
        out.extend(body)
        for r, e in zip(site.results, ret):
            out.append(Assign(r, e.subst(m), pos))
        return tuple(out)

    def block(self, stmts: Sequence[Stmt], depth: int, only: int | None) -> tuple[Stmt, ...]:
        out: list[Stmt] = []
        for s in stmts:
            if isinstance(s, Call) and (only is None or s.site.id == only):
                out.extend(self.expand_call(s.site, s.pos, depth))
            elif isinstance(s, If):
                out.append(replace(s, then=self.block(s.then, depth, only),
                                   orelse=self.block(s.orelse, depth, only)))
            elif isinstance(s, While):
                out.append(replace(s, body=self.block(s.body, depth, only)))
            else:
                out.append(s)
        return tuple(out)


def expand(prog: Program, action: Unroll | Inline) -> Program:
    """Apply one expansion; loops and call sites of changed procedures are renumbered."""
    procs = []
    for p in prog.procedures:
        if action.proc is not None and p.name != action.proc:
            procs.append(p)
            continue
        if isinstance(action, Unroll):
            if action.k < 1:
                raise ValueError("unroll factor must be at least 1")
            body = _unroll_block(p.body, action.k, action.loop)
        elif isinstance(action, Inline):
            if action.depth < 1:
                raise ValueError("inline depth must be at least 1")
            body = _Inliner(prog, p).block(p.body, action.depth, action.site)
        else:
            raise TypeError(f"unknown expansion {action!r}")
        if body == p.body:
            procs.append(p)
        else:
            procs.append(make_procedure(p.name, p.params, body, p.pos))
    return Program(tuple(procs), prog.entry)
