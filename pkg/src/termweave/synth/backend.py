"""Solver backends for verification and parameter-synthesis queries.

Two kinds of queries reach a backend:

* ``find_model(formula)`` asks for an integer model of a quantifier-free
  linear formula whose variables range over all integers (verification
  queries: the negation of a clause under a candidate solution).
* ``solve_params(constraints, groups)`` asks for an assignment of template
  parameters, each group ranging over a finite list of candidate tuples.

:class:`BuiltinBackend` answers the first kind with Fourier-Motzkin
elimination over integer-tightened constraints (exact refutation) and a
bounded back-substitution search for integer models; it answers the second
kind by exhaustive backtracking over the candidate grid.  :class:`SmtLibBackend`
forwards both to an external SMT-LIB2 solver over a pipe.
"""

from __future__ import annotations

import math
import os
import shutil
import subprocess
import threading
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

from ..logic import (And, Atom, Const, Formula, Not, Or, conj, disj, free_vars,
                     nnf, parse_model, simplify, smt_symbol, to_smtlib)

__all__ = [
    "BackendError", "SolverUnknown", "ParamGroup", "SolverBackend",
    "BuiltinBackend", "SmtLibBackend", "make_backend", "compile_formula",
]


class BackendError(RuntimeError):
    """The backend failed (process died, malformed answer, not found)."""


class SolverUnknown(RuntimeError):
    """The backend could neither find a model nor refute the query."""


@dataclass(frozen=True)
class ParamGroup:
    """Parameters assigned jointly; ``candidates`` are tried in order."""

    names: tuple[str, ...]
    candidates: tuple[tuple[int, ...], ...]


class SolverBackend:
    name = "abstract"

    def find_model(self, formula: Formula) -> dict[str, int] | None:
        raise NotImplementedError

    def solve_params(self, constraints: Sequence[Formula],
                     groups: Sequence[ParamGroup]) -> dict[str, int] | None:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# -- compiled evaluation -----------------------------------------------------

def _py(f: Formula, index: dict[str, int]) -> str:
    if isinstance(f, Const):
        return "True" if f.value else "False"
    if isinstance(f, Atom):
        terms = [f"{c}*a[{index[v]}]" for v, c in f.expr.coeffs]
        terms.append(str(f.expr.const))
        rel = {"<=": "<=", "<": "<", "=": "=="}[f.op]
        return f"(({' + '.join(terms)}) {rel} 0)"
    if isinstance(f, Not):
        return f"(not {_py(f.arg, index)})"
    if isinstance(f, And):
        return "(" + " and ".join(_py(a, index) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(" + " or ".join(_py(a, index) for a in f.args) + ")"
    raise TypeError(f"cannot compile {f!r}")


def compile_formula(f: Formula, index: dict[str, int]) -> Callable[[list], bool]:
    """Compile an application-free formula to a predicate over a value list."""
    return eval(f"lambda a: {_py(nnf(f), index)}")  # noqa: S307 - generated from our own AST


# -- integer linear constraints ---------------------------------------------

# A constraint is (coeffs, const, is_eq) meaning sum(c*v) + const <= 0 (or == 0).
Cons = tuple[tuple[tuple[str, int], ...], int, bool]


class _Unsat(Exception):
    pass


def _normalize(coeffs: dict[str, int], k: int, is_eq: bool) -> Cons | None:
    coeffs = {v: c for v, c in coeffs.items() if c}
    if not coeffs:
        if (k == 0) if is_eq else (k <= 0):
            return None
        raise _Unsat()
    g = 0
    for c in coeffs.values():
        g = math.gcd(g, abs(c))
    if is_eq:
        if k % g:
            raise _Unsat()
        k //= g
    else:
        # sum(c/g * v) <= -k/g  tightens to  <= floor(-k/g)
        k = -((-k) // g)
    items = tuple(sorted((v, c // g) for v, c in coeffs.items()))
    return items, k, is_eq


def _cube_constraints(atoms: Sequence[Atom]) -> list[Cons]:
    out = []
    for a in atoms:
        coeffs = dict(a.expr.coeffs)
        k = a.expr.const
        if a.op == "<":
            k += 1
        c = _normalize(coeffs, k, a.op == "=")
        if c is not None:
            out.append(c)
    return out


def _subst_cons(cons: list[Cons], v: str, expr: dict[str, int], k0: int, div: int = 1) -> list[Cons]:
    """Substitute ``v := (expr + k0) / div`` (div > 0) into every constraint."""
    out = []
    for items, k, is_eq in cons:
        d = dict(items)
        c = d.pop(v, 0)
        if c == 0:
            out.append((items, k, is_eq))
            continue
        scaled = {u: a * div for u, a in d.items()}
        for u, a in expr.items():
            scaled[u] = scaled.get(u, 0) + c * a
        n = _normalize(scaled, k * div + c * k0, is_eq)
        if n is not None:
            out.append(n)
    return out


def _fm_eliminate(cons: list[Cons], v: str, limit: int) -> list[Cons]:
    lower, upper, rest = [], [], []
    for items, k, is_eq in cons:
        d = dict(items)
        c = d.get(v, 0)
        if c == 0:
            rest.append((items, k, is_eq))
        elif is_eq:
            # use the equality as two inequalities
            (upper if c > 0 else lower).append((d, k))
            neg_d = {u: -a for u, a in d.items()}
            (upper if -c > 0 else lower).append((neg_d, -k))
        elif c > 0:
            upper.append((d, k))
        else:
            lower.append((d, k))
    if len(lower) * len(upper) + len(rest) > limit:
        raise SolverUnknown("Fourier-Motzkin blow-up")
    seen = set(rest)
    for dl, kl in lower:
        cl = -dl[v]
        for du, ku in upper:
            cu = du[v]
            comb: dict[str, int] = {}
            for u, a in dl.items():
                comb[u] = comb.get(u, 0) + a * cu
            for u, a in du.items():
                comb[u] = comb.get(u, 0) + a * cl
            comb.pop(v, None)
            n = _normalize(comb, kl * cu + ku * cl, False)
            if n is not None and n not in seen:
                seen.add(n)
                rest.append(n)
    return rest


def _vars_of(cons: list[Cons]) -> list[str]:
    out: dict[str, None] = {}
    for items, _, _ in cons:
        for v, _ in items:
            out[v] = None
    return list(out)


def _eliminate_equalities(cons: list[Cons]) -> tuple[list[Cons], list[tuple[str, dict[str, int], int]]]:
    """Solve unit-coefficient equalities; returns remaining constraints and definitions."""
    defs: list[tuple[str, dict[str, int], int]] = []
    changed = True
    while changed:
        changed = False
        for i, (items, k, is_eq) in enumerate(cons):
            if not is_eq:
                continue
            unit = next(((v, c) for v, c in items if abs(c) == 1), None)
            if unit is None:
                continue
            v, c = unit
            # c*v + rest + k = 0  =>  v = -(rest + k)/c
            expr = {u: -a * c for u, a in items if u != v}
            k0 = -k * c
            rest = cons[:i] + cons[i + 1:]
            cons = _subst_cons(rest, v, expr, k0)
            defs.append((v, expr, k0))
            changed = True
            break
    return cons, defs


def _rational_feasible(cons: list[Cons], limit: int) -> bool:
    try:
        for v in _elim_order(cons):
            cons = _fm_eliminate(cons, v, limit)
    except _Unsat:
        return False
    return True


def _elim_order(cons: list[Cons]) -> list[str]:
    vs = _vars_of(cons)
    counts = {v: 0 for v in vs}
    for items, _, _ in cons:
        for v, _ in items:
            counts[v] += 1
    return sorted(vs, key=lambda v: (counts[v], v))


def _bounds(cons: list[Cons], v: str, limit: int) -> tuple[float | None, float | None]:
    """Rational bounds on ``v`` from the projection of ``cons`` onto ``v``."""
    proj = cons
    for u in _elim_order(cons):
        if u != v:
            proj = _fm_eliminate(proj, u, limit)
    lo, hi = None, None
    for items, k, is_eq in proj:
        if not items:
            continue
        (_, c), = items
        # c*v + k <= 0
        val = -k / c
        if is_eq:
            lo = val if lo is None else max(lo, val)
            hi = val if hi is None else min(hi, val)
        elif c > 0:
            hi = val if hi is None else min(hi, val)
        else:
            lo = val if lo is None else max(lo, val)
    return lo, hi


class _Budget:
    def __init__(self, n: int):
        self.n = n

    def spend(self) -> None:
        self.n -= 1
        if self.n < 0:
            raise SolverUnknown("integer model search budget exhausted")


def _candidates(lo, hi, box: tuple[int, int], tries: int) -> tuple[list[int], bool]:
    """Integer candidates in [lo, hi], preferring the larger box extreme; flag = complete."""
    ilo = None if lo is None else math.ceil(lo - 1e-9)
    ihi = None if hi is None else math.floor(hi + 1e-9)
    if ilo is not None and ihi is not None and ilo > ihi:
        return [], True
    blo, bhi = box
    clo = blo if ilo is None else max(ilo, min(blo, ihi if ihi is not None else blo))
    chi = bhi if ihi is None else min(ihi, max(bhi, ilo if ilo is not None else bhi))
    if ilo is not None:
        clo = max(clo, ilo)
    if ihi is not None:
        chi = min(chi, ihi)
    if clo > chi:
        clo = chi = ilo if ilo is not None else ihi
    order: list[int] = []
    first = (clo, chi) if abs(clo) > abs(chi) else (chi, clo)
    for c in (*first, 0):
        if clo <= c <= chi and c not in order:
            order.append(c)
    step = 1
    while len(order) < tries and (clo + step <= chi or chi - step >= clo):
        for c in (chi - step, clo + step):
            if clo <= c <= chi and c not in order:
                order.append(c)
        step += 1
    complete = (ilo is not None and ihi is not None and ihi - ilo + 1 <= len(order))
    return order[:tries], complete


def _int_model(cons: list[Cons], box, limit: int, budget: _Budget, tries: int) -> dict[str, int] | None:
    """Integer model, or ``None`` when provably none exists; may raise SolverUnknown."""
    budget.spend()
    try:
        cons, defs = _eliminate_equalities(cons)
    except _Unsat:
        return None
    if not _rational_feasible(cons, limit):
        return None
    vs = _elim_order(cons)
    if not vs:
        model: dict[str, int] = {}
    else:
        v = vs[-1]
        try:
            lo, hi = _bounds(cons, v, limit)
        except _Unsat:
            return None
        cands, complete = _candidates(lo, hi, box, tries)
        model = None
        gave_up = False
        for c in cands:
            try:
                sub = _subst_cons(cons, v, {}, c)
            except _Unsat:
                continue
            try:
                m = _int_model(sub, box, limit, budget, tries)
            except SolverUnknown:
                gave_up = True
                continue
            if m is not None:
                m[v] = c
                model = m
                break
        if model is None:
            if complete and not gave_up:
                return None
            raise SolverUnknown("no integer model found among candidates")
    for v, expr, k0 in reversed(defs):
        model.setdefault(v, 0)
        for u in expr:
            model.setdefault(u, 0)
        model[v] = sum(a * model[u] for u, a in expr.items()) + k0
    return model


def _dnf(f: Formula, limit: int) -> Iterator[list[Atom]]:
    """Cubes of an application-free NNF formula, generated lazily."""
    if isinstance(f, Const):
        if f.value:
            yield []
        return
    if isinstance(f, Atom):
        yield [f]
        return
    if isinstance(f, Or):
        for a in f.args:
            yield from _dnf(a, limit)
        return
    if isinstance(f, And):
        yield from _dnf_and(list(f.args), limit)
        return
    raise TypeError(f"unexpected node in DNF: {f!r}")


def _dnf_and(args: list[Formula], limit: int) -> Iterator[list[Atom]]:
    atoms = [a for a in args if isinstance(a, Atom)]
    others = [a for a in args if not isinstance(a, Atom)]
    if any(a == Const(False) for a in others):
        return
    others = [a for a in others if not isinstance(a, Const)]
    if not others:
        yield atoms
        return
    head, tail = others[0], others[1:]
    for cube in _dnf(head, limit):
        for rest in _dnf_and(atoms + cube + tail, limit):
            yield rest


class BuiltinBackend(SolverBackend):
    """Dependency-free backend.

    ``box`` bounds the preferred region for integer models (counterexamples
    are drawn from its extremes first) but never restricts refutation:
    a query is reported unsatisfiable only when elimination proves it so.
    """

    name = "builtin"

    def __init__(self, box: tuple[int, int] = (-64, 64), fm_limit: int = 4000,
                 model_budget: int = 20000, tries: int = 6, cube_limit: int = 50000,
                 node_limit: int = 400_000):
        self.box = box
        self.fm_limit = fm_limit
        self.model_budget = model_budget
        self.tries = tries
        self.cube_limit = cube_limit
        self.node_limit = node_limit
        self.queries = 0
        self._cache: dict = {}

    def find_model(self, formula: Formula) -> dict[str, int] | None:
        self.queries += 1
        f = nnf(formula)
        fv = sorted(free_vars(f))
        unknown = False
        for n, cube in enumerate(_dnf(f, self.cube_limit)):
            if n >= self.cube_limit:
                raise SolverUnknown("too many disjuncts")
            try:
                cons = _cube_constraints(cube)
            except _Unsat:
                continue
            try:
                m = _int_model(cons, self.box, self.fm_limit, _Budget(self.model_budget), self.tries)
            except SolverUnknown:
                unknown = True
                continue
            if m is not None:
                return {v: m.get(v, 0) for v in fv}
        if unknown:
            raise SolverUnknown("some disjuncts could not be decided")
        return None

    def _checks(self, f: Formula, layout: tuple, index: dict[str, int],
                group_of: dict[str, int]) -> list[tuple[int, Callable, frozenset[int]]]:
        """Compiled relaxations of ``f`` per search depth, cached across calls.

        Each entry is ``(depth, check, groups mentioned)``.
        """
        key = (layout, id(f))
        hit = self._cache.get(key)
        if hit is not None and hit[0] is f:
            return hit[1]
        g = simplify(nnf(f))
        if isinstance(g, Const):
            checks = [] if g.value else [(0, lambda a: False, frozenset())]
            self._cache[key] = (f, checks)
            return checks

        def depth_of(a: Atom) -> int:
            return max((group_of[v] for v in a.expr.vars), default=-1)

        levels = sorted({depth_of(a) for a in _atoms(g)})
        checks = []
        prev = None
        for d in levels:
            relaxed = _relax(g, lambda a, d=d: depth_of(a) <= d)
            if relaxed == Const(True) or relaxed == prev:
                continue
            prev = relaxed
            mentioned = frozenset(group_of[v] for v in free_vars(relaxed))
            checks.append((max(d, 0), compile_formula(relaxed, index), mentioned))
        if len(self._cache) > 50000:
            self._cache.clear()
        self._cache[key] = (f, checks)
        return checks

    def solve_params(self, constraints: Sequence[Formula],
                     groups: Sequence[ParamGroup]) -> dict[str, int] | None:
        """Backtracking with conflict-directed backjumping over the groups."""
        self.queries += 1
        names = [n for g in groups for n in g.names]
        index = {n: i for i, n in enumerate(names)}
        group_of = {n: gi for gi, g in enumerate(groups) for n in g.names}
        layout = tuple(g.names for g in groups)
        n_groups = len(groups)
        checks: list[list[tuple[Callable, frozenset[int]]]] = [[] for _ in groups]
        for c in constraints:
            missing = free_vars(c) - index.keys()
            if missing:
                raise BackendError(f"constraint mentions unbound parameter {sorted(missing)[0]}")
            for d, fn, mentioned in self._checks(c, layout, index, group_of):
                if not mentioned:
                    if not fn([0] * len(names)):
                        return None
                    continue
                checks[d].append((fn, mentioned))
        if n_groups == 0:
            return {}
        values = [0] * len(names)
        offsets = []
        off = 0
        for g in groups:
            offsets.append(off)
            off += len(g.names)
        conf: list[set[int]] = [set() for _ in groups]
        pos = [0] * n_groups
        nodes = 0
        depth = 0
        while True:
            g = groups[depth]
            if pos[depth] >= len(g.candidates):
                if not conf[depth]:
                    return None
                h = max(conf[depth])
                conf[h] |= conf[depth] - {h}
                for lvl in range(h + 1, depth + 1):
                    conf[lvl] = set()
                    pos[lvl] = 0
                depth = h
                pos[depth] += 1
                continue
            nodes += 1
            if nodes > self.node_limit:
                raise SolverUnknown("parameter search budget exhausted")
            cand = g.candidates[pos[depth]]
            o = offsets[depth]
            values[o:o + len(cand)] = cand
            culprit = None
            for fn, mentioned in checks[depth]:
                if not fn(values):
                    culprit = mentioned
                    break
            if culprit is None:
                if depth == n_groups - 1:
                    return dict(zip(names, values))
                depth += 1
                pos[depth] = 0
                conf[depth] = set()
            else:
                conf[depth] |= culprit - {depth}
                pos[depth] += 1


def _atoms(f: Formula) -> Iterator[Atom]:
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, (And, Or)):
        for a in f.args:
            yield from _atoms(a)
    elif isinstance(f, Not):
        yield from _atoms(f.arg)


def _relax(f: Formula, known: Callable[[Atom], bool]) -> Formula:
    """Replace atoms that are not yet decided by ``true`` (sound for NNF)."""
    if isinstance(f, Atom):
        return f if known(f) else Const(True)
    if isinstance(f, And):
        return conj(_relax(a, known) for a in f.args)
    if isinstance(f, Or):
        return disj(_relax(a, known) for a in f.args)
    return f


class SmtLibBackend(SolverBackend):
    """SMT-LIB2 over a child-process pipe (``z3 -in``, ``cvc5 --incremental`` ...)."""

    name = "smtlib"

    def __init__(self, path: str, args: Sequence[str] | None = None, timeout_ms: int = 30000):
        exe = shutil.which(path) or (path if os.path.exists(path) else None)
        if exe is None:
            raise BackendError(f"solver executable not found: {path}")
        if args is None:
            base = os.path.basename(exe)
            if "z3" in base:
                args = ["-in", "-smt2"]
            elif "cvc5" in base or "cvc4" in base:
                args = ["--incremental", "--lang=smt2"]
            else:
                args = []
        self.path = exe
        self.timeout_ms = timeout_ms
        self._lock = threading.Lock()
        self.proc = subprocess.Popen([exe, *args], stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                     stderr=subprocess.STDOUT, text=True, bufsize=1)
        self.queries = 0
        self._send("(set-option :print-success false)")
        self._send("(set-option :produce-models true)")
        self._send("(set-logic QF_LIA)")

    def _send(self, text: str) -> None:
        try:
            self.proc.stdin.write(text + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise BackendError(f"solver pipe closed: {e}") from e

    def _read_sexpr(self) -> str:
        buf, depth, started = [], 0, False
        while True:
            line = self.proc.stdout.readline()
            if not line:
                raise BackendError("solver terminated unexpectedly")
            buf.append(line)
            for ch in line:
                if ch == "(":
                    depth += 1
                    started = True
                elif ch == ")":
                    depth -= 1
            if not started and line.strip():
                return "".join(buf)
            if started and depth <= 0:
                return "".join(buf)

    def _check(self, decls: Sequence[str], asserts: Sequence[str]) -> dict[str, int] | None:
        with self._lock:
            self.queries += 1
            self._send("(push 1)")
            for d in decls:
                self._send(f"(declare-fun {smt_symbol(d)} () Int)")
            for a in asserts:
                self._send(f"(assert {a})")
            self._send("(check-sat)")
            answer = self._read_sexpr().strip()
            try:
                if answer == "unsat":
                    return None
                if answer == "unknown":
                    raise SolverUnknown("external solver answered unknown")
                if answer != "sat":
                    raise BackendError(f"unexpected solver answer: {answer}")
                if not decls:
                    return {}
                self._send("(get-model)")
                model = parse_model(self._read_sexpr())
                return {d: model.get(d, 0) for d in decls}
            finally:
                self._send("(pop 1)")

    def find_model(self, formula: Formula) -> dict[str, int] | None:
        fv = sorted(free_vars(formula))
        return self._check(fv, [to_smtlib(formula)])

    def solve_params(self, constraints: Sequence[Formula],
                     groups: Sequence[ParamGroup]) -> dict[str, int] | None:
        decls = [n for g in groups for n in g.names]
        asserts = []
        for g in groups:
            alts = []
            for cand in g.candidates:
                eqs = " ".join(f"(= {smt_symbol(n)} {v if v >= 0 else f'(- {-v})'})"
                               for n, v in zip(g.names, cand))
                alts.append(f"(and {eqs})" if len(g.names) > 1 else eqs)
            asserts.append(f"(or {' '.join(alts)})" if len(alts) > 1 else alts[0])
        asserts.extend(to_smtlib(c) for c in constraints)
        return self._check(decls, asserts)

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self._send("(exit)")
                self.proc.wait(timeout=2)
            except (BackendError, subprocess.TimeoutExpired):
                self.proc.kill()


def make_backend(spec: str | None = None, box: tuple[int, int] | None = None) -> SolverBackend:
    """``builtin`` (default) or a solver executable path; ``TERMWEAVE_SOLVER`` is the fallback."""
    spec = spec or os.environ.get("TERMWEAVE_SOLVER") or "builtin"
    if spec == "builtin":
        return BuiltinBackend(box=box) if box else BuiltinBackend()
    return SmtLibBackend(spec)
