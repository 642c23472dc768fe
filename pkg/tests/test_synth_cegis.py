import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from termweave.decomp import PipelineConfig, build_templates, run_pipeline
from termweave.encode import build_constraints, split_all
from termweave.logic import TRUE, FALSE, And, PredicateSymbol, ShapeError, evaluate, le, var
from termweave.synth import (BuiltinBackend, Budget, Instance, RankingTemplate, SearchSpaceTooLarge,
                             Subproblem, TemplateConfig, brute_force_solve, cegis_solve,
                             check_shapes, clause_violations, ground_instances,
                             verify_solution)
from termweave.synth.templates import BoundsTemplate, interval_rows, polyhedron_rows

from conftest import load

P = PredicateSymbol("Inv", "t", 2)


def _box_template(bound=3):
    return BoundsTemplate(P, ("u", "v"), tuple(interval_rows([0, 1])), bound)


def _all_values(t):
    for combo in itertools.product(*(g.candidates for g in t.groups("any"))):
        vals = {}
        for g, c in zip(t.groups("any"), combo):
            vals.update(zip(g.names, c))
        yield vals


def test_top_and_bottom():
    t = _box_template()
    top = Instance.of(t, t.top())
    assert top.status == "top" and top.definition(100, -100)
    bot = Instance.of(t, t.bottom())
    assert bot.status == "bottom"
    assert not any(bot.definition(a, b) for a in range(-5, 6) for b in range(-5, 6))


def test_holds_matches_definition():
    t = _box_template(2)
    for vals in itertools.islice(_all_values(t), 0, None, 37):
        d = Instance.of(t, vals).definition
        for a, b in itertools.product(range(-3, 4), repeat=2):
            assert t.holds(vals, (a, b)) == d(a, b)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_weaken_to_is_the_least_weakening(data):
    """After ``weaken_to`` the point is covered, and every template instance
    that covers the point and is implied by the old one is implied by the new."""
    t = _box_template(2)
    allv = list(_all_values(t))
    old = data.draw(st.sampled_from(allv))
    pt = data.draw(st.tuples(st.integers(-3, 3), st.integers(-3, 3)))
    new = dict(old)
    changed = t.weaken_to(new, pt)
    assert t.holds(new, pt)
    assert changed == (not t.holds(old, pt))
    assert t.row_implies(old, new)
    for cand in allv:
        if t.holds(cand, pt) and t.row_implies(old, cand):
            assert t.row_implies(new, cand)


def test_polyhedron_rows_include_differences():
    rows = polyhedron_rows([0, 1])
    assert len(rows) == 4 + 4
    assert any(dict(r.coeffs) == {0: 1, 1: -1} for r in rows)


def test_ranking_holds_is_lexicographic():
    r = RankingTemplate(PredicateSymbol("RR", "t", 4), ("a", "b", "a'", "b'"), k=2)
    vals = dict.fromkeys(r.params, 0)
    p0, p1 = r.component_params(0), r.component_params(1)
    vals[p0[0]] = 1          # first component a
    vals[p1[1]] = 1          # second component b
    assert r.holds(vals, (3, 0, 2, 9))       # a drops
    assert r.holds(vals, (3, 5, 3, 4))       # a stays, b drops
    assert not r.holds(vals, (3, 5, 4, 0))   # a grows
    assert r.holds(vals, (-1, 5, -2, 4))       # a drops below zero, b still drops
    assert not r.holds(vals, (-1, -1, -2, -2))  # both drop, but only from negative values


def test_shapes_require_ranking_instances():
    cs = split_all(build_constraints(load("countdown")))
    templates = build_templates(cs, TemplateConfig())
    sp = Subproblem(cs.clauses, templates)
    rr = cs.symbol("RR", "main")
    fake = {s: Instance.of(t, dict.fromkeys(t.params, 0)) for s, t in templates.items() if s != rr}
    from termweave.logic import PredicateDef, TRUE
    fake[rr] = PredicateDef(("x", "x'"), TRUE)
    with pytest.raises(ShapeError):
        check_shapes(sp, fake)


def _monolithic(name, **kw):
    cs = split_all(build_constraints(load(name)))
    cfg = TemplateConfig(bound=4, coeff_range=(-1, 1), const_range=(-4, 4), **kw)
    return Subproblem(cs.clauses, build_templates(cs, cfg), universe=(-4, 4))


# Clauses are only checked inside the universe box, so loops that move a
# variable monotonically leave the box and count as terminating there.
@pytest.mark.parametrize("name, expected", [
    ("countdown", "solved"), ("loopforever", "solved"), ("loop_free", "solved"),
    ("conditional_termination", "solved"), ("nondet_branch", "solved"),
])
def test_cegis_agrees_with_exhaustive_search(name, expected):
    sp = _monolithic(name)
    got = cegis_solve(sp, BuiltinBackend(box=(-4, 4)), Budget(400, 60))
    try:
        ref = brute_force_solve(sp, (-4, 4))
    except SearchSpaceTooLarge:
        pytest.skip("reference search too large")
    ref_status = "solved" if all(s.status == "solved" for s in ref.values()) else "failed"
    assert got.status == ref_status == expected
    if got.status == "solved":
        sol = {s: p.instance for s, p in got.solutions.items()}
        assert verify_solution(sp, sol, BuiltinBackend()).ok


def test_strongest_objective_returns_least_bounds():
    prog = load("const_arg_call")
    cs = split_all(build_constraints(prog))
    templates = build_templates(cs, TemplateConfig())
    ctx = cs.symbol("CallCtx", "g", "main:1")
    sp = Subproblem(tuple(c for c in cs.clauses if ctx in c.conclusion_symbols()),
                    {ctx: templates[ctx]}, objective="strongest")
    got = cegis_solve(sp, BuiltinBackend())
    d = got.solutions[ctx].definition
    assert got.status == "solved"
    assert [x for x in range(-10, 11) if d(x, 0)] == [5]


def test_budget_exhaustion_fails_cleanly():
    sp = _monolithic("countdown")
    got = cegis_solve(sp, BuiltinBackend(), Budget(iters=1, secs=30))
    assert got.status in ("solved", "failed")
    if got.status == "failed":
        assert got.reason


@pytest.mark.parametrize("name", ["countdown", "const_arg_call", "call_chain"])
def test_clause_violations_agree_with_grounding(name):
    prog = load(name)
    rep = run_pipeline(prog, PipelineConfig(mode="procedural"), name=name)
    plain = build_constraints(rep.analysis.prog)
    defs = {}
    for sym, inst in rep.analysis.solutions.items():
        if sym.kind == "Sum":
            defs[plain.symbol("Summary", sym.owner)] = inst.definition
        elif sym.kind != "CallCtx":
            defs[sym] = inst.definition
    box = (-3, 3)
    grounded = {g.clause for g in ground_instances(Subproblem(plain.clauses, {}, defs), box)
                if g.premise == TRUE and g.conclusion == FALSE}
    found = clause_violations(plain.clauses, defs, box)
    assert {label for label, _ in found} == grounded
    for label, point in found:
        c = next(c for c in plain.clauses if c.label == label)
        assert evaluate(And(tuple(c.premises)), point, defs)
        assert not evaluate(c.conclusion, point, defs)
