"""Sufficient preconditions for termination.

A candidate precondition ``P`` over a procedure's inputs is certified by
re-running the termination analysis with ``P(x_in)`` added to every clause of
that procedure that mentions its inputs.  The search starts from the whole
input space, then from the first certified single-point box, and enlarges
interval bounds one step at a time for as long as certification succeeds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Iterator

from .decomp import PipelineConfig, analyze_once, encode_for_mode
from .decomp.pipeline import TERMINATING, Analysis, define_fun
from .encode import ConstraintSystem
from .ir import Program
from .logic import FALSE, TRUE, Formula, PredicateSymbol, free_vars
from .synth import Instance, PredicateSolution, SolverBackend, make_backend
from .synth.templates import BoundsTemplate, interval_rows

__all__ = ["PrecondProblem", "PrecondResult", "infer_precond", "restrict_inputs",
           "precond_template"]


def precond_template(prog: Program, proc: str, bound: int = 6) -> BoundsTemplate:
    p = prog.proc(proc)
    names = tuple(f"{v}.in" for v in p.params)
    sym = PredicateSymbol("Precond", proc, len(names), polarity="under", roles=names)
    return BoundsTemplate(sym, names, tuple(interval_rows(range(len(names)))), bound)


@dataclass
class PrecondProblem:
    """Target procedure, the candidate template over its inputs and the
    over-approximating analysis of the unrestricted program, if available."""

    prog: Program
    target: str
    template: BoundsTemplate
    config: PipelineConfig = PipelineConfig()
    over: Analysis | None = None

    @staticmethod
    def make(prog: Program, target: str, config: PipelineConfig = PipelineConfig(),
             bound: int = 6, over: Analysis | None = None) -> "PrecondProblem":
        return PrecondProblem(prog, target, precond_template(prog, target, bound), config, over)


@dataclass
class PrecondResult:
    solution: PredicateSolution
    certified: list[dict[str, int]] = field(default_factory=list)
    attempts: int = 0
    exhausted: bool = False

    @property
    def formula(self) -> Formula:
        return self.solution.formula

    def to_dict(self) -> dict[str, Any]:
        inst = self.solution.instance
        return {
            "status": self.solution.status,
            "definition": define_fun(self.solution.symbol, inst) if inst is not None else
            f"(define-fun {self.solution.symbol.name} () Bool false)",
            "certifications": len(self.certified),
            "attempts": self.attempts,
            "budget_exhausted": self.exhausted,
        }


def restrict_inputs(cs: ConstraintSystem, proc: str, pre: Formula) -> ConstraintSystem:
    """Add ``pre`` (over the procedure's input variables) to every clause of
    ``proc`` that quantifies over those inputs."""
    inputs = free_vars(pre)
    clauses = []
    for c in cs.clauses:
        if c.proc == proc and inputs <= set(c.universals):
            c = replace(c, premises=(pre,) + tuple(c.premises))
        clauses.append(c)
    return replace(cs, clauses=tuple(clauses))


def _reachable(prog: Program, root: str) -> set[str]:
    seen = {root}
    todo = [root]
    while todo:
        for cs in prog.proc(todo.pop()).call_sites:
            if cs.callee not in seen:
                seen.add(cs.callee)
                todo.append(cs.callee)
    return seen


class _Certifier:
    def __init__(self, problem: PrecondProblem, backend: SolverBackend):
        self.p = problem
        self.backend = backend
        self.prog = problem.prog.with_entry(problem.target)
        self.cs = encode_for_mode(self.prog, problem.config.mode)
        self.scope = _reachable(self.prog, problem.target)
        self.cache: dict[tuple, bool] = {}

    def __call__(self, values: dict[str, int]) -> bool:
        key = tuple(sorted(values.items()))
        if key not in self.cache:
            pre = self.p.template.instantiate(values).body
            if pre == FALSE:
                ok = True
            else:
                cs = self.cs if pre == TRUE else restrict_inputs(self.cs, self.p.target, pre)
                a = analyze_once(self.prog, self.p.config, self.backend, cs=cs)
                ok = all(a.verdicts.get(f) == TERMINATING for f in self.scope)
            self.cache[key] = ok
        return self.cache[key]


def _point_order(bound: int) -> list[int]:
    out = [0]
    for k in range(1, bound + 1):
        out += [k, -k]
    return out


def _point_boxes(t: BoundsTemplate) -> Iterator[dict[str, int]]:
    n = len(t.arg_names)
    order = _point_order(t.bound)
    for point in sorted(itertools.product(order, repeat=n),
                        key=lambda pt: (max(abs(v) for v in pt), [order.index(v) for v in pt])):
        vals = {}
        for i, v in enumerate(point):
            up_on, up_c = t.row_params(2 * i)
            lo_on, lo_c = t.row_params(2 * i + 1)
            vals.update({up_on: 1, up_c: v, lo_on: 1, lo_c: -v})
        yield vals


def _extent(t: BoundsTemplate, vals: dict[str, int], i: int) -> int:
    """Number of grid values (one beyond the bound counts as unbounded) in dimension ``i``."""
    up_on, up_c = t.row_params(2 * i)
    lo_on, lo_c = t.row_params(2 * i + 1)
    hi = vals[up_c] if vals[up_on] else t.bound + 1
    lo = -vals[lo_c] if vals[lo_on] else -t.bound - 1
    return max(0, hi - lo + 1)


def _weakenings(t: BoundsTemplate, vals: dict[str, int]) -> list[dict[str, int]]:
    """One-step enlargements, largest gain first, ties broken by variable order."""
    n = len(t.arg_names)
    out = []
    for k in range(2 * n):
        on_p, c_p = t.row_params(k)
        if not vals[on_p]:
            continue
        new = dict(vals)
        if vals[c_p] >= t.bound:
            new[on_p], new[c_p] = 0, 0
        else:
            new[c_p] = vals[c_p] + 1
        i = k // 2
        others = 1
        for j in range(n):
            if j != i:
                others *= _extent(t, vals, j)
        out.append((-others, k, new))
    out.sort(key=lambda e: (e[0], e[1]))
    return [e[2] for e in out]


def infer_precond(problem: PrecondProblem, backend: SolverBackend | None = None,
                  max_attempts: int = 400) -> PrecondResult:
    """Weakest certified interval precondition reachable by single-step enlargement.

    Returns bottom (false) when no candidate certifies.  Running out of
    ``max_attempts`` returns the best certified candidate so far.
    """
    own = backend is None
    backend = backend or make_backend(problem.config.backend, problem.config.box)
    t = problem.template
    try:
        cert = _Certifier(problem, backend)
        result = PrecondResult(_solution(t, None))
        attempts = 0

        def certify(vals: dict[str, int]) -> bool:
            nonlocal attempts
            attempts += 1
            return cert(vals)

        over = problem.over
        top_ok = (over is not None and all(over.verdicts.get(f) == TERMINATING
                                           for f in cert.scope)) or certify(t.top())
        if top_ok:
            result = PrecondResult(_solution(t, t.top()), [t.top()], attempts)
            return result
        current = None
        for seed in _point_boxes(t):
            if attempts >= max_attempts:
                result.exhausted = True
                break
            if certify(seed):
                current = seed
                break
        if current is None:
            result.attempts = attempts
            return result
        result.certified.append(current)
        improved = True
        while improved:
            improved = False
            for cand in _weakenings(t, current):
                if attempts >= max_attempts:
                    result.exhausted = True
                    break
                if certify(cand):
                    current = cand
                    result.certified.append(cand)
                    improved = True
                    break
        result.solution = _solution(t, current)
        result.attempts = attempts
        return result
    finally:
        if own:
            backend.close()


def _solution(t: BoundsTemplate, vals: dict[str, int] | None) -> PredicateSolution:
    if vals is None:
        return PredicateSolution(t.symbol, None, {}, "bottom")
    inst = Instance.of(t, vals)
    return PredicateSolution(t.symbol, inst.definition, inst.valuation, inst.status, inst)
