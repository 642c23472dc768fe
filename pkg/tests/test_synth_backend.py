import itertools
import shutil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from termweave.logic import FALSE, TRUE, And, LinExpr, Not, Or, evaluate, free_vars, le
from termweave.synth import (BackendError, BuiltinBackend, ParamGroup, SmtLibBackend,
                             SolverUnknown, make_backend)

from test_logic import formulas

VARS = ("x", "y", "z")


def _brute_sat(f, lo=-6, hi=6):
    fv = sorted(free_vars(f))
    for pt in itertools.product(range(lo, hi + 1), repeat=len(fv)):
        if evaluate(f, dict(zip(fv, pt))):
            return True
    return False


@settings(max_examples=250, deadline=None)
@given(formulas)
def test_builtin_models_are_genuine_and_complete_on_the_box(f):
    b = BuiltinBackend(box=(-6, 6))
    try:
        m = b.find_model(f)
    except SolverUnknown:
        return
    if m is not None:
        env = {v: 0 for v in VARS}
        env.update(m)
        assert evaluate(f, env)
    else:
        assert not _brute_sat(f)


def test_builtin_refutes_integer_gaps():
    # 2x == 1 has rational but no integer solutions
    b = BuiltinBackend()
    f = And((le(LinExpr.make({"x": 2}), 1), le(LinExpr.make({"x": -2}), -1)))
    assert b.find_model(f) is None
    assert b.find_model(FALSE) is None
    assert b.find_model(TRUE) == {}


params = st.sampled_from(["a", "b", "c"])
pterms = st.builds(lambda cs, k: LinExpr.make(dict(zip("abc", cs)), k),
                   st.lists(st.integers(-2, 2), min_size=3, max_size=3), st.integers(-3, 3))
pconstraints = st.lists(
    st.one_of(pterms.map(lambda e: le(e, 0)),
              st.tuples(pterms, pterms).map(lambda p: Or((le(p[0], 0), le(p[1], 0)))),
              pterms.map(lambda e: Not(le(e, 0)))),
    min_size=1, max_size=4)


@settings(max_examples=200, deadline=None)
@given(pconstraints)
def test_parameter_search_matches_enumeration(cons):
    groups = [ParamGroup(("a",), tuple((v,) for v in range(-2, 3))),
              ParamGroup(("b", "c"), tuple(itertools.product(range(-1, 2), repeat=2)))]
    got = BuiltinBackend().solve_params(cons, groups)
    sols = [dict(a=a, b=b, c=c) for (a,), (b, c) in itertools.product(
        groups[0].candidates, groups[1].candidates)
        if all(evaluate(k, dict(a=a, b=b, c=c)) for k in cons)]
    if got is None:
        assert sols == []
    else:
        assert got in sols
        # first solution in candidate order
        assert got == sols[0]


def test_parameter_search_rejects_unbound_names():
    with pytest.raises(BackendError):
        BuiltinBackend().solve_params([le("q", 0)], [ParamGroup(("a",), ((0,),))])


def test_constant_false_constraint_is_unsatisfiable():
    assert BuiltinBackend().solve_params([FALSE], [ParamGroup(("a",), ((0,),))]) is None


def test_make_backend_resolution(monkeypatch):
    monkeypatch.delenv("TERMWEAVE_SOLVER", raising=False)
    assert isinstance(make_backend(), BuiltinBackend)
    monkeypatch.setenv("TERMWEAVE_SOLVER", "/definitely/missing/solver")
    with pytest.raises(BackendError):
        make_backend()


@pytest.mark.skipif(shutil.which("z3") is None, reason="z3 not installed")
@settings(max_examples=60, deadline=None)
@given(formulas)
def test_smtlib_backend_agrees_with_builtin(f):
    with SmtLibBackend("z3") as z:
        zm = z.find_model(f)
    try:
        bm = BuiltinBackend(box=(-6, 6)).find_model(f)
    except SolverUnknown:
        return
    assert (zm is None) == (bm is None)
    if zm is not None:
        env = {v: 0 for v in VARS}
        env.update(zm)
        assert evaluate(f, env)
