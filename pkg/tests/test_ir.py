import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from termweave.ir import (PC, ResolutionError, StepLimit, SyntaxErrorAt, UnsupportedConstruct,
                          call_graph, explore, format_program, in_var, lower_to_iots,
                          parse_program, prime, recursive_sccs, run)
from termweave.logic import evaluate

from conftest import CORPUS_NAMES, load

COUNTDOWN = """
proc main(x) {
  while (x > 0) { x = x - 1; }
  return x;
}
"""


def test_parse_and_run_countdown():
    prog = parse_program(COUNTDOWN)
    assert prog.entry == "main"
    assert run(prog, [5]) == (0,)
    assert run(prog, [-3]) == (-3,)


def test_format_round_trip_on_corpus(corpus_program):
    name, prog = corpus_program
    text = format_program(prog)
    again = parse_program(text)
    assert format_program(again) == text
    assert again == prog


@pytest.mark.parametrize("src, exc", [
    ("proc main( {", SyntaxErrorAt),
    ("proc main(x) { y = call nope(x); }", ResolutionError),
    ("proc main(x, x) { return; }", ResolutionError),
    ("proc main(x) { x = x * x; }", UnsupportedConstruct),
    ("proc main(x) { return y; }", ResolutionError),
])
def test_bad_programs_are_rejected(src, exc):
    with pytest.raises(exc):
        parse_program(src)


def test_return_must_be_last():
    with pytest.raises((UnsupportedConstruct, SyntaxErrorAt, ResolutionError)):
        lower_to_iots(parse_program("proc main(x) { return x; x = 1; }").proc("main"))


def test_step_limit_on_infinite_loop():
    prog = load("loopforever")
    with pytest.raises(StepLimit):
        run(prog, [0], max_steps=1000)


def test_explore_covers_nondeterminism():
    prog = parse_program("proc main(x) { if (*) { x = 1; } else { x = 2; } return x; }")
    ex = explore(prog, [0])
    assert ex.terminates and ex.outputs == {(1,), (2,)} and ex.runs == 2


def test_call_graph_and_recursion():
    assert call_graph(load("call_chain"))["main"] == ["step"]
    rec = recursive_sccs(load("mutual_recursion"))
    assert rec["ping"] == rec["pong"] == frozenset({"ping", "pong"})
    assert "main" not in rec
    assert recursive_sccs(load("direct_recursion"))["f"] == frozenset({"f"})


def test_locals_start_at_zero():
    prog = parse_program("proc main(x) { if (x > 0) { y = 5; } return y + x; }")
    assert run(prog, [0]) == (0,)
    assert run(prog, [1]) == (6,)


def _call_free():
    out = []
    for name in CORPUS_NAMES:
        prog = load(name)
        for p in prog.procedures:
            if not p.call_sites:
                out.append((name, p.name))
    return out


@pytest.mark.parametrize("name, proc", _call_free())
def test_lowering_agrees_with_interpreter(name, proc):
    """Every concrete run is a path of the transition system: the first loop
    head satisfies Init, consecutive heads satisfy Trans and the last head
    reaches the returned values through Out."""
    prog = load(name)
    p = prog.proc(proc)
    ts = lower_to_iots(p)
    rng = random.Random(7)
    for inputs in itertools.product(range(-3, 4), repeat=len(p.params)):
        heads = []
        choices = [rng.randint(0, 1) for _ in range(400)]
        try:
            outs = run(prog, inputs, choices, proc=proc, max_steps=5000,
                       on_head=lambda f, lid, env: heads.append((lid, env)))
        except (StepLimit, LookupError):
            outs = None
        ins = {in_var(v): x for v, x in zip(p.params, inputs)}

        def state(lid, env, primed=False):
            s = {(prime(v) if primed else v): env[v] for v in p.vars}
            if ts.has_pc:
                s[prime(PC) if primed else PC] = lid
            return s

        if not heads:
            continue
        assert evaluate(ts.init, {**ins, **state(*heads[0])})
        for a, b in zip(heads, heads[1:]):
            assert evaluate(ts.trans, {**state(*a), **state(*b, primed=True)})
        if outs is not None:
            outv = {f"out.{j}": v for j, v in enumerate(outs)}
            assert evaluate(ts.out, {**state(*heads[-1]), **outv})


@settings(max_examples=60, deadline=None)
@given(st.integers(-20, 20), st.integers(1, 3))
def test_countdown_by_step(x, k):
    prog = parse_program(f"proc main(x) {{ while (x > 0) {{ x = x - {k}; }} return x; }}")
    (r,) = run(prog, [x])
    assert r == x if x <= 0 else (-k < r <= 0)
