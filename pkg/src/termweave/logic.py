"""Quantifier-free linear integer arithmetic formulas.

The kernel is deliberately small: linear expressions with arbitrary-precision
integer coefficients, atoms ``expr <= 0``, ``expr < 0`` and ``expr = 0``,
boolean connectives, and applications of predicate symbols.  Unknown
predicates live in the synthesis layer; here an application is just a node
that can be evaluated under an interpretation or rewritten.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Union

__all__ = [
    "LinExpr", "Formula", "Const", "Atom", "Not", "And", "Or", "Implies", "App",
    "PredicateSymbol", "PredicateDef", "TRUE", "FALSE", "MissingBinding",
    "ShapeError", "var", "const", "lin", "le", "lt", "ge", "gt", "eq", "ne",
    "conj", "disj", "neg", "implies", "free_vars", "substitute", "evaluate",
    "nnf", "apps", "atom_sides", "map_apps", "symbols", "simplify", "to_smtlib",
    "term_to_smtlib", "smt_symbol", "parse_model", "pretty",
]


class MissingBinding(KeyError):
    """A variable or predicate symbol has no value during evaluation."""


class ShapeError(ValueError):
    """Arity or argument-shape violation."""


Number = int
TermLike = Union["LinExpr", str, int]


@dataclass(frozen=True)
class LinExpr:
    """``sum(c * v) + const`` with integer coefficients, kept canonical."""

    coeffs: tuple[tuple[str, int], ...] = ()
    const: int = 0

    @staticmethod
    def make(coeffs: Mapping[str, int] | Iterable[tuple[str, int]], const: int = 0) -> "LinExpr":
        acc: dict[str, int] = {}
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        for v, c in items:
            acc[v] = acc.get(v, 0) + int(c)
        return LinExpr(tuple(sorted((v, c) for v, c in acc.items() if c != 0)), int(const))

    @property
    def vars(self) -> frozenset[str]:
        return frozenset(v for v, _ in self.coeffs)

    def coeff(self, v: str) -> int:
        for name, c in self.coeffs:
            if name == v:
                return c
        return 0

    def is_const(self) -> bool:
        return not self.coeffs

    def as_var(self) -> str | None:
        if self.const == 0 and len(self.coeffs) == 1 and self.coeffs[0][1] == 1:
            return self.coeffs[0][0]
        return None

    def __add__(self, other: TermLike) -> "LinExpr":
        o = lin(other)
        return LinExpr.make(list(self.coeffs) + list(o.coeffs), self.const + o.const)

    __radd__ = __add__

    def __neg__(self) -> "LinExpr":
        return LinExpr(tuple((v, -c) for v, c in self.coeffs), -self.const)

    def __sub__(self, other: TermLike) -> "LinExpr":
        return self + (-lin(other))

    def __rsub__(self, other: TermLike) -> "LinExpr":
        return lin(other) - self

    def __mul__(self, k: int) -> "LinExpr":
        if not isinstance(k, int):
            raise ShapeError("nonlinear product")
        return LinExpr.make([(v, c * k) for v, c in self.coeffs], self.const * k)

    __rmul__ = __mul__

    def subst(self, mapping: Mapping[str, "LinExpr"]) -> "LinExpr":
        out = LinExpr((), self.const)
        for v, c in self.coeffs:
            out = out + (mapping[v] * c if v in mapping else LinExpr(((v, c),)))
        return out

    def value(self, valuation: Mapping[str, int]) -> int:
        total = self.const
        for v, c in self.coeffs:
            try:
                total += c * valuation[v]
            except KeyError:
                raise MissingBinding(v) from None
        return total

    def __str__(self) -> str:
        parts = []
        for v, c in self.coeffs:
            if c == 1:
                parts.append(f"+ {v}")
            elif c == -1:
                parts.append(f"- {v}")
            elif c < 0:
                parts.append(f"- {-c}*{v}")
            else:
                parts.append(f"+ {c}*{v}")
        if self.const or not parts:
            parts.append(f"- {-self.const}" if self.const < 0 else f"+ {self.const}")
        text = " ".join(parts)
        if text.startswith("+ "):
            return text[2:]
        return "-" + text[2:]


def var(name: str) -> LinExpr:
    return LinExpr(((name, 1),))


def const(k: int) -> LinExpr:
    return LinExpr((), int(k))


def lin(t: TermLike) -> LinExpr:
    if isinstance(t, LinExpr):
        return t
    if isinstance(t, bool):
        raise ShapeError("boolean used as term")
    if isinstance(t, int):
        return const(t)
    if isinstance(t, str):
        return var(t)
    raise ShapeError(f"not a linear term: {t!r}")


@dataclass(frozen=True)
class PredicateSymbol:
    """An unknown (or solved) predicate; ``(kind, owner, site, polarity)`` is its key."""

    kind: str
    owner: str
    arity: int
    site: str | None = None
    polarity: str = "over"
    roles: tuple[str, ...] = field(default=(), compare=False)

    @property
    def key(self) -> tuple:
        return (self.kind, self.owner, self.site, self.polarity)

    @property
    def name(self) -> str:
        parts = [self.kind, self.owner]
        if self.site is not None:
            parts.append(self.site.replace(":", "_"))
        if self.polarity != "over":
            parts.append("u")
        return "_".join(parts)

    def __call__(self, *args: TermLike) -> "App":
        return App(self, tuple(lin(a) for a in args))

    def __str__(self) -> str:
        return self.name


class Formula:
    """Base class of formula nodes."""

    __slots__ = ()

    def __and__(self, other: "Formula") -> "Formula":
        return conj(self, other)

    def __or__(self, other: "Formula") -> "Formula":
        return disj(self, other)

    def __invert__(self) -> "Formula":
        return neg(self)

    def __str__(self) -> str:
        return pretty(self)


@dataclass(frozen=True, repr=False)
class Const(Formula):
    value: bool

    def __repr__(self) -> str:
        return "TRUE" if self.value else "FALSE"


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True, repr=False)
class Atom(Formula):
    """``expr op 0`` where op is one of ``<=``, ``<``, ``=``."""

    expr: LinExpr
    op: str

    def __post_init__(self) -> None:
        if self.op not in ("<=", "<", "="):
            raise ShapeError(f"bad relation {self.op}")

    def __repr__(self) -> str:
        return f"Atom({pretty(self)})"


@dataclass(frozen=True, repr=False)
class Not(Formula):
    arg: Formula

    def __repr__(self) -> str:
        return f"Not({self.arg!r})"


@dataclass(frozen=True, repr=False)
class And(Formula):
    args: tuple[Formula, ...]

    def __repr__(self) -> str:
        return f"And({', '.join(map(repr, self.args))})"


@dataclass(frozen=True, repr=False)
class Or(Formula):
    args: tuple[Formula, ...]

    def __repr__(self) -> str:
        return f"Or({', '.join(map(repr, self.args))})"


@dataclass(frozen=True, repr=False)
class Implies(Formula):
    lhs: Formula
    rhs: Formula

    def __repr__(self) -> str:
        return f"Implies({self.lhs!r}, {self.rhs!r})"


@dataclass(frozen=True, repr=False)
class App(Formula):
    """Application of a predicate symbol; ``site`` tags the call site it stands for."""

    symbol: PredicateSymbol
    args: tuple[LinExpr, ...]
    site: str | None = None

    def __post_init__(self) -> None:
        if len(self.args) != self.symbol.arity:
            raise ShapeError(
                f"{self.symbol.name} expects {self.symbol.arity} arguments, got {len(self.args)}")

    def __repr__(self) -> str:
        return f"App({pretty(self)})"


@dataclass(frozen=True)
class PredicateDef:
    """A concrete interpretation ``lambda params: body`` of a predicate symbol."""

    params: tuple[str, ...]
    body: Formula

    def apply(self, args: Iterable[TermLike]) -> Formula:
        args = [lin(a) for a in args]
        if len(args) != len(self.params):
            raise ShapeError("arity mismatch in predicate application")
        return substitute(self.body, dict(zip(self.params, args)))

    def __call__(self, *values: int) -> bool:
        return evaluate(self.body, dict(zip(self.params, values)))


Interp = Mapping[PredicateSymbol, Union[PredicateDef, Callable[..., bool]]]


# -- constructors -----------------------------------------------------------

def _atom(e: LinExpr, op: str) -> Formula:
    if e.is_const():
        c = e.const
        return TRUE if (c <= 0 if op == "<=" else c < 0 if op == "<" else c == 0) else FALSE
    return Atom(e, op)


def le(a: TermLike, b: TermLike) -> Formula:
    return _atom(lin(a) - lin(b), "<=")


def lt(a: TermLike, b: TermLike) -> Formula:
    return _atom(lin(a) - lin(b), "<")


def ge(a: TermLike, b: TermLike) -> Formula:
    return le(b, a)


def gt(a: TermLike, b: TermLike) -> Formula:
    return lt(b, a)


def eq(a: TermLike, b: TermLike) -> Formula:
    return _atom(lin(a) - lin(b), "=")


def ne(a: TermLike, b: TermLike) -> Formula:
    return neg(eq(a, b))


def conj(*fs: Formula | Iterable[Formula]) -> Formula:
    out: list[Formula] = []
    for f in _flatten_args(fs):
        if f == FALSE:
            return FALSE
        if f == TRUE:
            continue
        if isinstance(f, And):
            out.extend(f.args)
        else:
            out.append(f)
    out = list(dict.fromkeys(out))
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(*fs: Formula | Iterable[Formula]) -> Formula:
    out: list[Formula] = []
    for f in _flatten_args(fs):
        if f == TRUE:
            return TRUE
        if f == FALSE:
            continue
        if isinstance(f, Or):
            out.extend(f.args)
        else:
            out.append(f)
    out = list(dict.fromkeys(out))
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


def _flatten_args(fs) -> Iterator[Formula]:
    for f in fs:
        if isinstance(f, Formula):
            yield f
        else:
            yield from f


def neg(f: Formula) -> Formula:
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, Not):
        return f.arg
    return Not(f)


def implies(a: Formula, b: Formula) -> Formula:
    if a == FALSE or b == TRUE:
        return TRUE
    if a == TRUE:
        return b
    return Implies(a, b)


# -- traversal ---------------------------------------------------------------

def free_vars(f: Formula) -> frozenset[str]:
    out: set[str] = set()
    _collect_vars(f, out)
    return frozenset(out)


def _collect_vars(f: Formula, out: set[str]) -> None:
    if isinstance(f, Atom):
        out.update(f.expr.vars)
    elif isinstance(f, App):
        for a in f.args:
            out.update(a.vars)
    elif isinstance(f, Not):
        _collect_vars(f.arg, out)
    elif isinstance(f, (And, Or)):
        for a in f.args:
            _collect_vars(a, out)
    elif isinstance(f, Implies):
        _collect_vars(f.lhs, out)
        _collect_vars(f.rhs, out)


def apps(f: Formula) -> Iterator[App]:
    if isinstance(f, App):
        yield f
    elif isinstance(f, Not):
        yield from apps(f.arg)
    elif isinstance(f, (And, Or)):
        for a in f.args:
            yield from apps(a)
    elif isinstance(f, Implies):
        yield from apps(f.lhs)
        yield from apps(f.rhs)


def symbols(f: Formula) -> frozenset[PredicateSymbol]:
    return frozenset(a.symbol for a in apps(f))


def map_apps(f: Formula, fn: Callable[[App], Formula]) -> Formula:
    """Rebuild ``f`` with each application replaced by ``fn(app)``."""
    if isinstance(f, App):
        return fn(f)
    if isinstance(f, Not):
        return neg(map_apps(f.arg, fn))
    if isinstance(f, And):
        return conj(map_apps(a, fn) for a in f.args)
    if isinstance(f, Or):
        return disj(map_apps(a, fn) for a in f.args)
    if isinstance(f, Implies):
        return implies(map_apps(f.lhs, fn), map_apps(f.rhs, fn))
    return f


def substitute(f: Formula, mapping: Mapping[str, TermLike]) -> Formula:
    """Replace variables by variables, constants or linear expressions."""
    m = {k: lin(v) for k, v in mapping.items()}
    return _subst(f, m)


def _subst(f: Formula, m: Mapping[str, LinExpr]) -> Formula:
    if isinstance(f, Atom):
        if not (f.expr.vars & m.keys()):
            return f
        return _atom(f.expr.subst(m), f.op)
    if isinstance(f, App):
        return App(f.symbol, tuple(a.subst(m) for a in f.args), f.site)
    if isinstance(f, Not):
        return neg(_subst(f.arg, m))
    if isinstance(f, And):
        return conj(_subst(a, m) for a in f.args)
    if isinstance(f, Or):
        return disj(_subst(a, m) for a in f.args)
    if isinstance(f, Implies):
        return implies(_subst(f.lhs, m), _subst(f.rhs, m))
    return f


def _atom_holds(v: int, op: str) -> bool:
    if op == "<=":
        return v <= 0
    if op == "<":
        return v < 0
    return v == 0


def evaluate(f: Formula, valuation: Mapping[str, int], interp: Interp | None = None) -> bool:
    """Two-valued evaluation; raises :class:`MissingBinding` on gaps."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Atom):
        return _atom_holds(f.expr.value(valuation), f.op)
    if isinstance(f, And):
        return all(evaluate(a, valuation, interp) for a in f.args)
    if isinstance(f, Or):
        return any(evaluate(a, valuation, interp) for a in f.args)
    if isinstance(f, Not):
        return not evaluate(f.arg, valuation, interp)
    if isinstance(f, Implies):
        return (not evaluate(f.lhs, valuation, interp)) or evaluate(f.rhs, valuation, interp)
    if isinstance(f, App):
        if interp is None or f.symbol not in interp:
            raise MissingBinding(f.symbol.name)
        values = [a.value(valuation) for a in f.args]
        p = interp[f.symbol]
        return bool(p(*values))
    raise TypeError(f"not a formula: {f!r}")


def nnf(f: Formula) -> Formula:
    """Negation normal form; negations remain only on predicate applications."""
    return _nnf(f, True)


def _nnf(f: Formula, pos: bool) -> Formula:
    if isinstance(f, Const):
        return f if pos else neg(f)
    if isinstance(f, Atom):
        if pos:
            return f
        if f.op == "<=":
            return _atom(-f.expr, "<")
        if f.op == "<":
            return _atom(-f.expr, "<=")
        return disj(_atom(f.expr, "<"), _atom(-f.expr, "<"))
    if isinstance(f, App):
        return f if pos else Not(f)
    if isinstance(f, Not):
        return _nnf(f.arg, not pos)
    if isinstance(f, And):
        parts = [_nnf(a, pos) for a in f.args]
        return conj(parts) if pos else disj(parts)
    if isinstance(f, Or):
        parts = [_nnf(a, pos) for a in f.args]
        return disj(parts) if pos else conj(parts)
    if isinstance(f, Implies):
        if pos:
            return disj(_nnf(f.lhs, False), _nnf(f.rhs, True))
        return conj(_nnf(f.lhs, True), _nnf(f.rhs, False))
    raise TypeError(f"not a formula: {f!r}")


def simplify(f: Formula) -> Formula:
    """Constant folding through the connectives (atoms are folded on construction)."""
    if isinstance(f, Atom):
        return _atom(f.expr, f.op)
    if isinstance(f, Not):
        return neg(simplify(f.arg))
    if isinstance(f, And):
        return conj(simplify(a) for a in f.args)
    if isinstance(f, Or):
        return disj(simplify(a) for a in f.args)
    if isinstance(f, Implies):
        return implies(simplify(f.lhs), simplify(f.rhs))
    return f


# -- printing ----------------------------------------------------------------

_OPS = {"<=": "<=", "<": "<", "=": "="}


def _split_atom(a: Atom) -> tuple[LinExpr, int]:
    return LinExpr(a.expr.coeffs, 0), -a.expr.const


def atom_sides(a: Atom) -> tuple[LinExpr, str, int]:
    """Readable ``lhs op rhs`` form, flipping the relation when most coefficients are negative."""
    lhs, rhs = _split_atom(a)
    op = {"<=": "<=", "<": "<", "=": "=="}[a.op]
    if sum(1 for _, c in lhs.coeffs if c < 0) * 2 > len(lhs.coeffs):
        lhs, rhs = -lhs, -rhs
        op = {"<=": ">=", "<": ">", "==": "=="}[op]
    return lhs, op, rhs


def pretty(f: Formula) -> str:
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        lhs, op, rhs = atom_sides(f)
        return f"{lhs} {op} {rhs}"
    if isinstance(f, App):
        return f"{f.symbol.name}({', '.join(str(a) for a in f.args)})"
    if isinstance(f, Not):
        return f"!({pretty(f.arg)})"
    if isinstance(f, And):
        return " && ".join(_paren(a) for a in f.args)
    if isinstance(f, Or):
        return " || ".join(_paren(a) for a in f.args)
    if isinstance(f, Implies):
        return f"{_paren(f.lhs)} ==> {_paren(f.rhs)}"
    raise TypeError(f"not a formula: {f!r}")


def _paren(f: Formula) -> str:
    s = pretty(f)
    return f"({s})" if isinstance(f, (And, Or, Implies)) else s


_SIMPLE = re.compile(r"^[A-Za-z~!@$%^&*_+=<>.?/\-][A-Za-z0-9~!@$%^&*_+=<>.?/\-]*$")


def smt_symbol(name: str) -> str:
    if _SIMPLE.match(name):
        return name
    if "|" in name or "\\" in name:
        raise ShapeError(f"cannot quote symbol {name!r}")
    return f"|{name}|"


def _smt_int(k: int) -> str:
    return str(k) if k >= 0 else f"(- {-k})"


def term_to_smtlib(e: LinExpr) -> str:
    parts = []
    for v, c in e.coeffs:
        s = smt_symbol(v)
        parts.append(s if c == 1 else f"(* {_smt_int(c)} {s})")
    if e.const or not parts:
        parts.append(_smt_int(e.const))
    return parts[0] if len(parts) == 1 else f"(+ {' '.join(parts)})"


def to_smtlib(f: Formula) -> str:
    """SMT-LIB2 term text (sort Int); applications print as uninterpreted calls."""
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        lhs, rhs = _split_atom(f)
        return f"({_OPS[f.op]} {term_to_smtlib(lhs)} {_smt_int(rhs)})"
    if isinstance(f, App):
        if not f.args:
            return smt_symbol(f.symbol.name)
        return f"({smt_symbol(f.symbol.name)} {' '.join(term_to_smtlib(a) for a in f.args)})"
    if isinstance(f, Not):
        return f"(not {to_smtlib(f.arg)})"
    if isinstance(f, And):
        return f"(and {' '.join(to_smtlib(a) for a in f.args)})"
    if isinstance(f, Or):
        return f"(or {' '.join(to_smtlib(a) for a in f.args)})"
    if isinstance(f, Implies):
        return f"(=> {to_smtlib(f.lhs)} {to_smtlib(f.rhs)})"
    raise TypeError(f"not a formula: {f!r}")


_DEFINE = re.compile(
    r"\(define-fun\s+(\|[^|]*\||[^\s()]+)\s+\(\)\s+Int\s+(\(\s*-\s*\d+\s*\)|-?\d+)\s*\)")


def parse_model(text: str) -> dict[str, int]:
    """Read ``(define-fun v () Int k)`` entries from solver model output."""
    out: dict[str, int] = {}
    for name, value in _DEFINE.findall(text):
        if name.startswith("|"):
            name = name[1:-1]
        value = value.strip()
        if value.startswith("("):
            out[name] = -int(value.strip("()").replace("-", "").strip())
        else:
            out[name] = int(value)
    return out
