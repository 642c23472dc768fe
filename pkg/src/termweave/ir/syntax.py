"""Abstract syntax, parser and printer for the procedure language.

Grammar (informal)::

    program   := proc+
    proc      := 'proc' NAME '(' [NAME (',' NAME)*] ')' '{' stmt* '}'
    stmt      := NAME '=' linexp ';'
               | NAME (',' NAME)* '=' 'call' NAME '(' [linexp (',' linexp)*] ')' ';'
               | 'call' NAME '(' ... ')' ';'
               | 'if' '(' cond ')' block ['else' (block | if-stmt)]
               | 'while' '(' cond ')' block
               | 'return' [linexp (',' linexp)*] ';'
    cond      := '*' | disjunction of conjunctions of comparisons, '!' allowed

``*`` as a condition is a nondeterministic choice.  Comments start with
``//`` or ``#`` and run to the end of the line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence, Union

from ..logic import (FALSE, TRUE, And, Atom, Const, Formula, LinExpr, Not, Or,
                     atom_sides,
                     ShapeError, conj, const, disj, eq, free_vars, ge, gt, le,
                     lt, ne, neg, var)

__all__ = [
    "SyntaxErrorAt", "ResolutionError", "UnsupportedConstruct", "Pos",
    "Assign", "If", "While", "Call", "Return", "Stmt", "CallSite",
    "Procedure", "Program", "parse_program", "format_program", "make_procedure",
    "walk", "call_graph", "recursive_sccs",
]


class SyntaxErrorAt(ValueError):
    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class ResolutionError(ValueError):
    """Unresolved callee, arity mismatch or undeclared variable."""


class UnsupportedConstruct(ValueError):
    """Nonlinear arithmetic, division and similar constructs."""


@dataclass(frozen=True)
class Pos:
    line: int = 0
    col: int = 0


@dataclass(frozen=True)
class CallSite:
    id: int
    callee: str
    args: tuple[LinExpr, ...]
    results: tuple[str, ...]

    @property
    def arg_vars(self) -> tuple[str, ...]:
        return tuple(sorted(set().union(*(a.vars for a in self.args)))) if self.args else ()


@dataclass(frozen=True)
class Assign:
    target: str
    expr: LinExpr
    pos: Pos = field(default=Pos(), compare=False)


@dataclass(frozen=True)
class If:
    cond: Formula | None  # None means nondeterministic choice
    then: tuple["Stmt", ...]
    orelse: tuple["Stmt", ...] = ()
    pos: Pos = field(default=Pos(), compare=False)


@dataclass(frozen=True)
class While:
    cond: Formula | None
    body: tuple["Stmt", ...]
    id: int = 0
    pos: Pos = field(default=Pos(), compare=False)


@dataclass(frozen=True)
class Call:
    site: CallSite
    pos: Pos = field(default=Pos(), compare=False)


@dataclass(frozen=True)
class Return:
    values: tuple[LinExpr, ...]
    pos: Pos = field(default=Pos(), compare=False)


Stmt = Union[Assign, If, While, Call, Return]


@dataclass(frozen=True)
class Procedure:
    name: str
    params: tuple[str, ...]
    body: tuple[Stmt, ...]
    returns_arity: int
    vars: tuple[str, ...]
    call_sites: tuple[CallSite, ...]
    pos: Pos = field(default=Pos(), compare=False)

    @property
    def locals(self) -> tuple[str, ...]:
        return tuple(v for v in self.vars if v not in self.params)

    @property
    def returns(self) -> tuple[str, ...]:
        return tuple(f"out.{j}" for j in range(self.returns_arity))

    def loops(self) -> list[While]:
        return [s for s in walk(self.body) if isinstance(s, While)]

    def site(self, sid: int) -> CallSite:
        for cs in self.call_sites:
            if cs.id == sid:
                return cs
        raise KeyError(f"no call site {sid} in {self.name}")


@dataclass(frozen=True)
class Program:
    procedures: tuple[Procedure, ...]
    entry: str

    def __post_init__(self) -> None:
        names = [p.name for p in self.procedures]
        if len(set(names)) != len(names):
            raise ResolutionError("duplicate procedure name")
        if self.entry not in names:
            raise ResolutionError(f"entry procedure {self.entry} not declared")
        table = {p.name: p for p in self.procedures}
        for p in self.procedures:
            for cs in p.call_sites:
                if cs.callee not in table:
                    raise ResolutionError(f"unresolved callee {cs.callee} in {p.name}")
                h = table[cs.callee]
                if len(cs.args) != len(h.params):
                    raise ResolutionError(
                        f"call to {h.name} in {p.name} passes {len(cs.args)} arguments, "
                        f"expected {len(h.params)}")
                if len(cs.results) != h.returns_arity:
                    raise ResolutionError(
                        f"call to {h.name} in {p.name} binds {len(cs.results)} results, "
                        f"{h.name} returns {h.returns_arity}")

    def proc(self, name: str) -> Procedure:
        for p in self.procedures:
            if p.name == name:
                return p
        raise KeyError(name)

    def with_entry(self, name: str) -> "Program":
        return Program(self.procedures, name)


# -- construction helpers ---------------------------------------------------

def walk(stmts: Iterable[Stmt]) -> Iterator[Stmt]:
    for s in stmts:
        yield s
        if isinstance(s, If):
            yield from walk(s.then)
            yield from walk(s.orelse)
        elif isinstance(s, While):
            yield from walk(s.body)


def _renumber(stmts: tuple[Stmt, ...], counters: list[int]) -> tuple[Stmt, ...]:
    out = []
    for s in stmts:
        if isinstance(s, While):
            counters[0] += 1
            lid = counters[0]
            out.append(replace(s, id=lid, body=_renumber(s.body, counters)))
        elif isinstance(s, If):
            out.append(replace(s, then=_renumber(s.then, counters),
                               orelse=_renumber(s.orelse, counters)))
        elif isinstance(s, Call):
            counters[1] += 1
            out.append(replace(s, site=replace(s.site, id=counters[1])))
        else:
            out.append(s)
    return tuple(out)


def make_procedure(name: str, params: Sequence[str], body: Sequence[Stmt],
                   pos: Pos = Pos()) -> Procedure:
    """Number loops and call sites, collect variables and check well-formedness."""
    params = tuple(params)
    if len(set(params)) != len(params):
        raise ResolutionError(f"duplicate parameter in {name}")
    body = _renumber(tuple(body), [0, 0])
    declared: list[str] = list(params)
    used: set[str] = set()
    returns = None
    for i, s in enumerate(body):
        if isinstance(s, Return):
            if i != len(body) - 1:
                raise UnsupportedConstruct(f"{name}: return must be the last statement")
            returns = len(s.values)
    for s in walk(body):
        targets: tuple[str, ...] = ()
        if isinstance(s, Assign):
            targets = (s.target,)
            used |= s.expr.vars
        elif isinstance(s, Call):
            targets = s.site.results
            for a in s.site.args:
                used |= a.vars
        elif isinstance(s, (If, While)):
            if s.cond is not None:
                used |= free_vars(s.cond)
        elif isinstance(s, Return):
            for e in s.values:
                used |= e.vars
            if s is not body[-1]:
                raise UnsupportedConstruct(f"{name}: return must be the last statement")
        for t in targets:
            if t not in declared:
                declared.append(t)
    undeclared = sorted(used - set(declared))
    if undeclared:
        raise ResolutionError(f"{name}: undeclared variable {undeclared[0]}")
    sites = tuple(s.site for s in walk(body) if isinstance(s, Call))
    for cs in sites:
        if len(set(cs.results)) != len(cs.results):
            raise ResolutionError(f"{name}: duplicate result variable at call {cs.callee}")
    return Procedure(name, params, body, returns or 0, tuple(declared), sites, pos)


def call_graph(prog: Program) -> dict[str, list[str]]:
    return {p.name: list(dict.fromkeys(cs.callee for cs in p.call_sites))
            for p in prog.procedures}


def recursive_sccs(prog: Program) -> dict[str, frozenset[str]]:
    """Map each procedure on a call-graph cycle to its strongly connected component."""
    import networkx as nx

    g = nx.DiGraph()
    for f, callees in call_graph(prog).items():
        g.add_node(f)
        for h in callees:
            g.add_edge(f, h)
    out: dict[str, frozenset[str]] = {}
    for comp in nx.strongly_connected_components(g):
        if len(comp) > 1 or any(g.has_edge(f, f) for f in comp):
            for f in comp:
                out[f] = frozenset(comp)
    return out


# -- lexer -----------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>(//|\#)[^\n]*)
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|&&|\|\||[-+*/%<>=!(){},;])
""", re.VERBOSE)

KEYWORDS = {"proc", "if", "else", "while", "call", "return", "true", "false"}


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Tok]:
    toks = []
    line, line_start, i = 1, 0, 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            raise SyntaxErrorAt(line, i - line_start + 1, f"unexpected character {text[i]!r}")
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            t = m.group()
            if kind == "name" and t in KEYWORDS:
                kind = "kw"
            toks.append(Tok(kind, t, line, i - line_start + 1))
        i = m.end()
    toks.append(Tok("eof", "", line, i - line_start + 1))
    return toks


# -- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def cur(self) -> Tok:
        return self.toks[self.i]

    def error(self, what: str) -> SyntaxErrorAt:
        t = self.cur
        found = "end of input" if t.kind == "eof" else repr(t.text)
        return SyntaxErrorAt(t.line, t.col, f"expected {what}, found {found}")

    def at(self, text: str) -> bool:
        return self.cur.text == text and self.cur.kind in ("op", "kw")

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            raise self.error(f"'{text}'")
        t = self.cur
        self.i += 1
        return t

    def name(self) -> str:
        if self.cur.kind != "name":
            raise self.error("identifier")
        t = self.cur.text
        self.i += 1
        return t

    def pos(self) -> Pos:
        return Pos(self.cur.line, self.cur.col)

    # program structure
    def program(self) -> Program:
        procs = []
        if self.cur.kind == "eof":
            raise self.error("'proc'")
        while self.cur.kind != "eof":
            procs.append(self.proc())
        names = [p.name for p in procs]
        entry = "main" if "main" in names else names[0]
        return Program(tuple(procs), entry)

    def proc(self) -> Procedure:
        pos = self.pos()
        self.expect("proc")
        name = self.name()
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.name())
            while self.at(","):
                self.i += 1
                params.append(self.name())
        self.expect(")")
        body = self.block()
        return make_procedure(name, params, body, pos)

    def block(self) -> tuple[Stmt, ...]:
        self.expect("{")
        out = []
        while not self.at("}"):
            if self.cur.kind == "eof":
                raise self.error("'}'")
            out.append(self.stmt())
        self.expect("}")
        return tuple(out)

    def stmt(self) -> Stmt:
        pos = self.pos()
        if self.at("if"):
            return self.if_stmt()
        if self.at("while"):
            self.i += 1
            self.expect("(")
            cond = self.cond_or_star()
            self.expect(")")
            return While(cond, self.block(), 0, pos)
        if self.at("return"):
            self.i += 1
            values = []
            if not self.at(";"):
                values.append(self.linexp())
                while self.at(","):
                    self.i += 1
                    values.append(self.linexp())
            self.expect(";")
            return Return(tuple(values), pos)
        if self.at("call"):
            return self.call((), pos)
        if self.cur.kind != "name":
            raise self.error("statement")
        targets = [self.name()]
        while self.at(","):
            self.i += 1
            targets.append(self.name())
        self.expect("=")
        if self.at("call"):
            return self.call(tuple(targets), pos)
        if len(targets) != 1:
            raise self.error("'call'")
        e = self.linexp()
        self.expect(";")
        return Assign(targets[0], e, pos)

    def call(self, targets: tuple[str, ...], pos: Pos) -> Call:
        self.expect("call")
        callee = self.name()
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.linexp())
            while self.at(","):
                self.i += 1
                args.append(self.linexp())
        self.expect(")")
        self.expect(";")
        return Call(CallSite(0, callee, tuple(args), targets), pos)

    def if_stmt(self) -> If:
        pos = self.pos()
        self.expect("if")
        self.expect("(")
        cond = self.cond_or_star()
        self.expect(")")
        then = self.block()
        orelse: tuple[Stmt, ...] = ()
        if self.at("else"):
            self.i += 1
            orelse = (self.if_stmt(),) if self.at("if") else self.block()
        return If(cond, then, orelse, pos)

    # conditions
    def cond_or_star(self) -> Formula | None:
        if self.at("*"):
            self.i += 1
            return None
        return self.cond()

    def cond(self) -> Formula:
        parts = [self.conj()]
        while self.at("||"):
            self.i += 1
            parts.append(self.conj())
        return disj(parts) if len(parts) > 1 else parts[0]

    def conj(self) -> Formula:
        parts = [self.unary()]
        while self.at("&&"):
            self.i += 1
            parts.append(self.unary())
        return conj(parts) if len(parts) > 1 else parts[0]

    def unary(self) -> Formula:
        if self.at("!"):
            self.i += 1
            return neg(self.unary())
        if self.at("true"):
            self.i += 1
            return TRUE
        if self.at("false"):
            self.i += 1
            return FALSE
        if self.at("("):
            save = self.i
            try:
                return self.comparison()
            except SyntaxErrorAt:
                self.i = save
            self.expect("(")
            c = self.cond()
            self.expect(")")
            return c
        return self.comparison()

    def comparison(self) -> Formula:
        lhs = self.linexp()
        op = self.cur.text if self.cur.kind == "op" else ""
        rel = {"<": lt, "<=": le, ">": gt, ">=": ge, "==": eq, "!=": ne}.get(op)
        if rel is None:
            raise self.error("comparison operator")
        self.i += 1
        rhs = self.linexp()
        return rel(lhs, rhs)

    # linear expressions
    def linexp(self) -> LinExpr:
        e = self.term()
        while self.at("+") or self.at("-"):
            op = self.cur.text
            self.i += 1
            t = self.term()
            e = e + t if op == "+" else e - t
        return e

    def term(self) -> LinExpr:
        e = self.factor()
        while self.at("*") or self.at("/") or self.at("%"):
            op = self.cur.text
            if op != "*":
                raise UnsupportedConstruct(
                    f"line {self.cur.line}, col {self.cur.col}: '{op}' is not supported")
            self.i += 1
            f = self.factor()
            if e.is_const():
                e = f * e.const
            elif f.is_const():
                e = e * f.const
            else:
                raise UnsupportedConstruct(
                    f"line {self.cur.line}: nonlinear product is not supported")
        return e

    def factor(self) -> LinExpr:
        t = self.cur
        if self.at("-"):
            self.i += 1
            return -self.factor()
        if t.kind == "int":
            self.i += 1
            return const(int(t.text))
        if t.kind == "name":
            self.i += 1
            return var(t.text)
        if self.at("("):
            self.i += 1
            e = self.linexp()
            self.expect(")")
            return e
        raise self.error("expression")


def parse_program(text: str) -> Program:
    """Parse source text into a resolved :class:`Program`."""
    return _Parser(text).program()


# -- printer ---------------------------------------------------------------

def _fmt_expr(e: LinExpr) -> str:
    parts = []
    for v, c in e.coeffs:
        mag = abs(c)
        body = v if mag == 1 else f"{mag} * {v}"
        parts.append(("-" if c < 0 else "+", body))
    if e.const or not parts:
        parts.append(("-" if e.const < 0 else "+", str(abs(e.const))))
    sign, first = parts[0]
    out = ("-" + first) if sign == "-" else first
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


def _fmt_cond(f: Formula | None) -> str:
    if f is None:
        return "*"
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        lhs, op, rhs = atom_sides(f)
        return f"{_fmt_expr(lhs)} {op} {rhs}"
    if isinstance(f, Not):
        return f"!({_fmt_cond(f.arg)})"
    if isinstance(f, And):
        return " && ".join(f"({_fmt_cond(a)})" for a in f.args)
    if isinstance(f, Or):
        return " || ".join(f"({_fmt_cond(a)})" for a in f.args)
    raise ShapeError(f"cannot print condition {f!r}")


def _fmt_block(stmts: Sequence[Stmt], indent: int) -> list[str]:
    pad = "  " * indent
    out = []
    for s in stmts:
        if isinstance(s, Assign):
            out.append(f"{pad}{s.target} = {_fmt_expr(s.expr)};")
        elif isinstance(s, Call):
            args = ", ".join(_fmt_expr(a) for a in s.site.args)
            lhs = f"{', '.join(s.site.results)} = " if s.site.results else ""
            out.append(f"{pad}{lhs}call {s.site.callee}({args});")
        elif isinstance(s, Return):
            vals = ", ".join(_fmt_expr(v) for v in s.values)
            out.append(f"{pad}return {vals};" if vals else f"{pad}return;")
        elif isinstance(s, While):
            out.append(f"{pad}while ({_fmt_cond(s.cond)}) {{")
            out.extend(_fmt_block(s.body, indent + 1))
            out.append(f"{pad}}}")
        elif isinstance(s, If):
            out.append(f"{pad}if ({_fmt_cond(s.cond)}) {{")
            out.extend(_fmt_block(s.then, indent + 1))
            if s.orelse:
                out.append(f"{pad}}} else {{")
                out.extend(_fmt_block(s.orelse, indent + 1))
            out.append(f"{pad}}}")
    return out


def format_program(prog: Program) -> str:
    chunks = []
    for p in prog.procedures:
        lines = [f"proc {p.name}({', '.join(p.params)}) {{"]
        lines.extend(_fmt_block(p.body, 1))
        lines.append("}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + "\n"
