import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from termweave.logic import (FALSE, TRUE, And, Implies, LinExpr, MissingBinding, Not, Or,
                             PredicateDef, PredicateSymbol, ShapeError, conj, disj, eq, evaluate,
                             free_vars, ge, gt, le, lt, map_apps, ne, neg, nnf, parse_model,
                             pretty, simplify, smt_symbol, substitute, to_smtlib, var)

VARS = ("x", "y", "z")

exprs = st.builds(
    lambda cs, k: LinExpr.make(dict(zip(VARS, cs)), k),
    st.lists(st.integers(-3, 3), min_size=3, max_size=3), st.integers(-5, 5))
atoms = st.builds(lambda f, a, b: f(a, b), st.sampled_from([le, lt, ge, gt, eq, ne]), exprs, exprs)
formulas = st.recursive(
    atoms | st.sampled_from([TRUE, FALSE]),
    lambda kids: st.one_of(
        st.lists(kids, min_size=2, max_size=3).map(lambda xs: And(tuple(xs))),
        st.lists(kids, min_size=2, max_size=3).map(lambda xs: Or(tuple(xs))),
        kids.map(Not),
        st.tuples(kids, kids).map(lambda ab: Implies(*ab))),
    max_leaves=8)
envs = st.fixed_dictionaries({v: st.integers(-6, 6) for v in VARS})


def test_linexpr_arithmetic():
    e = var("x") * 2 - var("y") + 3
    assert e.value({"x": 4, "y": 1}) == 10
    assert (e - e).is_const
    assert e.coeff("z") == 0
    assert (var("x") + 0).as_var() == "x"


def test_atoms_on_ints():
    env = {"x": 2, "y": 2}
    assert evaluate(le("x", "y"), env)
    assert not evaluate(lt("x", "y"), env)
    assert evaluate(eq("x", "y"), env)
    assert not evaluate(ne("x", "y"), env)
    assert evaluate(ge(var("x"), 2), env) and not evaluate(gt(var("x"), 2), env)


@settings(max_examples=300, deadline=None)
@given(formulas, envs)
def test_nnf_and_simplify_preserve_meaning(f, env):
    want = evaluate(f, env)
    assert evaluate(nnf(f), env) == want
    assert evaluate(simplify(f), env) == want
    assert evaluate(neg(f), env) == (not want)


@settings(max_examples=200, deadline=None)
@given(formulas, envs, st.integers(-4, 4))
def test_substitution_commutes_with_evaluation(f, env, k):
    g = substitute(f, {"x": var("y") + k})
    shifted = dict(env, x=env["y"] + k)
    assert evaluate(g, env) == evaluate(f, shifted)


def test_conj_disj_units():
    a = le("x", 0)
    assert conj() == TRUE and disj() == FALSE
    assert conj(a) == a and conj(TRUE, a) == a
    assert simplify(And((a, FALSE))) == FALSE
    assert simplify(Or((a, TRUE))) == TRUE


def test_free_vars():
    assert free_vars(And((le("x", 0), gt(var("y") + var("z"), 1)))) == {"x", "y", "z"}


def test_predicate_application_and_interpretation():
    p = PredicateSymbol("Inv", "main", 2)
    d = PredicateDef(("a", "b"), le("a", "b"))
    f = p("x", var("y") + 1)
    assert evaluate(f, {"x": 3, "y": 2}, {p: d})
    assert not evaluate(f, {"x": 4, "y": 2}, {p: d})
    with pytest.raises(MissingBinding):
        evaluate(f, {"x": 0, "y": 0})
    with pytest.raises(ShapeError):
        d.apply(["x"])
    inlined = map_apps(f, lambda a: d.apply(a.args))
    assert all(evaluate(inlined, {"x": x, "y": y}) == (x <= y + 1)
               for x, y in itertools.product(range(-2, 3), repeat=2))


def test_symbol_names():
    assert PredicateSymbol("Inv", "f", 1).name == "Inv_f"
    assert PredicateSymbol("CallCtx", "g", 1, site="main:0").name == "CallCtx_g_main_0"
    assert PredicateSymbol("Precond", "f", 1, polarity="under").name == "Precond_f_u"


def test_smtlib_text():
    assert to_smtlib(le(var("x") * 2, 3)) == "(<= (* 2 x) 3)"
    assert to_smtlib(le("x", -1)) == "(<= x (- 1))"
    assert smt_symbol("x.in") in ("x.in", "|x.in|")
    assert smt_symbol("a b") == "|a b|"


def test_parse_model():
    text = "(model (define-fun a () Int 3) (define-fun |b c| () Int (- 7)))"
    assert parse_model(text) == {"a": 3, "b c": -7}


def test_pretty_is_readable():
    assert pretty(TRUE) == "true"
    assert "x" in pretty(le("x", 1))
