"""Concrete interpreter with exhaustive exploration of nondeterministic choices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from ..logic import evaluate
from .syntax import Assign, Call, If, Procedure, Program, Return, Stmt, While

__all__ = ["StepLimit", "run", "explore", "Exploration", "HeadVisit"]


class StepLimit(Exception):
    """Execution exceeded its step or call-depth bound."""


class _NeedChoice(Exception):
    pass


class _Returned(Exception):
    def __init__(self, values: tuple[int, ...]):
        self.values = values


HeadVisit = Callable[[str, int, dict], None]


@dataclass
class _Machine:
    prog: Program
    choices: Sequence[int]
    max_steps: int
    max_depth: int
    on_head: HeadVisit | None = None
    steps: int = 0
    used: int = 0

    def tick(self) -> None:
        self.steps += 1
        if self.steps > self.max_steps:
            raise StepLimit(self.steps)

    def choose(self) -> int:
        if self.used >= len(self.choices):
            raise _NeedChoice()
        c = self.choices[self.used]
        self.used += 1
        return c

    def test(self, cond, env: dict) -> bool:
        if cond is None:
            return self.choose() == 0
        return evaluate(cond, env)

    def call(self, proc: Procedure, args: Sequence[int], depth: int) -> tuple[int, ...]:
        if depth > self.max_depth:
            raise StepLimit(self.steps)
        env = {v: 0 for v in proc.vars}
        env.update(zip(proc.params, args))
        try:
            self.block(proc, proc.body, env, depth)
        except _Returned as r:
            return r.values
        return ()

    def block(self, proc: Procedure, stmts: Sequence[Stmt], env: dict, depth: int) -> None:
        for s in stmts:
            self.tick()
            if isinstance(s, Assign):
                env[s.target] = s.expr.value(env)
            elif isinstance(s, If):
                self.block(proc, s.then if self.test(s.cond, env) else s.orelse, env, depth)
            elif isinstance(s, While):
                while True:
                    self.tick()
                    if self.on_head is not None:
                        self.on_head(proc.name, s.id, dict(env))
                    if not self.test(s.cond, env):
                        break
                    self.block(proc, s.body, env, depth)
            elif isinstance(s, Call):
                callee = self.prog.proc(s.site.callee)
                values = self.call(callee, [a.value(env) for a in s.site.args], depth + 1)
                env.update(zip(s.site.results, values))
            elif isinstance(s, Return):
                raise _Returned(tuple(e.value(env) for e in s.values))


def run(prog: Program, inputs: Sequence[int], choices: Sequence[int] = (),
        proc: str | None = None, max_steps: int = 100_000, max_depth: int = 500,
        on_head: HeadVisit | None = None) -> tuple[int, ...]:
    """Run deterministically, resolving ``*`` from ``choices`` (0 = then/enter).

    Raises :class:`StepLimit` when the bound is exceeded and ``LookupError``
    when more choices are needed than supplied.
    """
    m = _Machine(prog, list(choices), max_steps, max_depth, on_head)
    p = prog.proc(proc or prog.entry)
    try:
        return m.call(p, list(inputs), 0)
    except _NeedChoice:
        raise LookupError("ran out of nondeterministic choices") from None


@dataclass
class Exploration:
    terminates: bool
    outputs: set = field(default_factory=set)
    runs: int = 0
    exhausted: bool = True


def explore(prog: Program, inputs: Sequence[int], proc: str | None = None,
            max_steps: int = 100_000, max_runs: int = 20_000, max_depth: int = 500,
            on_head: HeadVisit | None = None) -> Exploration:
    """Explore every resolution of nondeterministic choices.

    ``terminates`` is true only if every explored run finishes within
    ``max_steps``; if the run budget is exhausted first, ``exhausted`` is
    false and ``terminates`` is false as well.
    """
    result = Exploration(True)
    stack: list[list[int]] = [[]]
    p = prog.proc(proc or prog.entry)
    while stack:
        if result.runs >= max_runs:
            result.exhausted = False
            result.terminates = False
            break
        prefix = stack.pop()
        m = _Machine(prog, prefix, max_steps, max_depth, on_head)
        result.runs += 1
        try:
            result.outputs.add(m.call(p, list(inputs), 0))
        except _NeedChoice:
            result.runs -= 1
            stack.append(prefix + [1])
            stack.append(prefix + [0])
        except StepLimit:
            result.terminates = False
            break
    return result
