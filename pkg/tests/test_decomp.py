import itertools

import pytest

from termweave.decomp import (MODES, TERMINATING, UNKNOWN, Capacity, Inline, PipelineConfig,
                              Unroll, analyze_once, build_dep_graph, check_schedule,
                              encode_for_mode, expand, run_pipeline, schedule)
from termweave.decomp.solve import ScheduleError, restrict_clauses
from termweave.ir import explore, format_program, parse_program
from termweave.synth import BuiltinBackend
from termweave.synth.templates import BoundsTemplate

from conftest import CORPUS_NAMES, load


def _names(edges):
    return {(u.name, v.name) for u, v in edges}


def test_graph_of_a_non_recursive_call():
    g = build_dep_graph(encode_for_mode(load("const_arg_call"), "procedural"))
    e = _names(g.edges())
    assert {("CallCtx_g_main_1", "Inv_g"), ("Inv_g", "Sum_g"), ("Sum_g", "Inv_main")} <= e
    assert not g.edges(unfolding=True)
    assert all(len(c) == 1 for c in g.sccs())


def test_graph_of_direct_recursion_has_the_summary_cycle():
    g = build_dep_graph(encode_for_mode(load("direct_recursion"), "procedural"))
    cyclic = [c for c in g.sccs() if g.is_cyclic(c)]
    assert cyclic
    names = {s.name for c in cyclic for s in c}
    assert "Sum_f" in names and any(n.startswith("CallCtx_f_f") for n in names)
    assert g.edges(unfolding=True)


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("name", CORPUS_NAMES)
def test_schedules_are_valid(name, mode):
    cs = encode_for_mode(load(name), mode)
    g = build_dep_graph(cs)
    for cap in (Capacity(1), Capacity(2), Capacity(4)):
        s = schedule(g, cap, mode)
        assert check_schedule(g, s) == []
        if mode == "monolithic":
            assert len(s.groups) == 1
        else:
            assert all(len(grp.predicates) <= cap.max_predicates for grp in s.groups)
        for grp in s.groups:
            rr = any(p.kind == "RR" for p in grp.predicates)
            assert grp.objective == ("any" if rr or mode == "monolithic" else "strongest")


def test_acyclic_programs_need_no_fixpoint():
    for name in ("countdown", "call_chain", "const_arg_call", "nested_loops"):
        g = build_dep_graph(encode_for_mode(load(name), "scc-min"))
        assert all(grp.fixpoint == "none" for grp in schedule(g, Capacity(4), "scc-min").groups)


def test_over_capacity_scc_becomes_a_fixpoint_cluster():
    g = build_dep_graph(encode_for_mode(load("mutual_recursion"), "scc-min"))
    s = schedule(g, Capacity(1), "scc-min")
    assert any(grp.fixpoint == "gfp-iterate" for grp in s.groups)
    assert check_schedule(g, s) == []


def test_unsolved_premise_is_a_schedule_error():
    cs = encode_for_mode(load("const_arg_call"), "procedural")
    inv_g = cs.symbol("Inv", "g")
    with pytest.raises(ScheduleError):
        restrict_clauses(cs.clauses, [inv_g], {})


def test_gfp_iterates_descend_and_stabilise():
    a = analyze_once(load("direct_recursion"), PipelineConfig(mode="procedural"),
                     BuiltinBackend())
    assert a.gfp and all(f["stable"] for f in a.gfp)
    for iterates in a.gfp_iterates.values():
        assert len(iterates) - 1 <= 10
        for prev, nxt in zip(iterates, iterates[1:]):
            for sym, inst in nxt.items():
                t = inst.template
                assert isinstance(t, BoundsTemplate)
                assert t.row_implies(inst.valuation, prev[sym].valuation)
                d_new, d_old = inst.definition, prev[sym].definition
                for pt in itertools.product(range(-4, 5), repeat=sym.arity):
                    assert not d_new(*pt) or d_old(*pt)


def _io(prog, inputs):
    ex = explore(prog, inputs, max_steps=20_000, max_runs=2000)
    return ex.terminates, ex.exhausted, frozenset(ex.outputs) if ex.terminates else None


@pytest.mark.parametrize("name", CORPUS_NAMES)
def test_expansions_preserve_behaviour(name):
    prog = load(name)
    arity = len(prog.proc(prog.entry).params)
    variants = [expand(prog, Unroll(k)) for k in (1, 2, 3)]
    variants += [expand(prog, Inline(d)) for d in (1, 2)]
    for v in variants:
        parse_program(format_program(v))
    for inputs in itertools.product(range(-4, 5), repeat=arity):
        want = _io(prog, inputs)
        for v in variants:
            assert _io(v, inputs) == want


def test_unroll_shape():
    prog = parse_program("proc main(x) { while (x > 0) { x = x - 1; } return x; }")
    text = format_program(expand(prog, Unroll(2)))
    assert text.count("if (x > 0)") == 2 and text.count("while") == 1


def test_inline_removes_non_recursive_calls():
    prog = load("inline_needed")
    inlined = expand(prog, Inline(1))
    assert not inlined.proc("main").call_sites
    rec = expand(load("direct_recursion"), Inline(1))
    assert rec.proc("f").call_sites  # recursion stays


@pytest.mark.parametrize("name, action", [("unroll_needed", "unroll"),
                                          ("inline_needed", "inline")])
def test_refinement_flips_verdict(name, action):
    prog = load(name)
    plain = run_pipeline(prog, PipelineConfig())
    assert plain.verdict == UNKNOWN
    refined = run_pipeline(prog, PipelineConfig(refine=True))
    assert refined.verdict == TERMINATING
    assert refined.refinements[-1]["action"].startswith(action)


def test_recompose_recovers_direct_recursion():
    r = run_pipeline(load("direct_recursion"), PipelineConfig(refine=True))
    assert r.verdict == TERMINATING
    assert r.refinements[0]["action"].startswith("recompose")


@pytest.mark.parametrize("mode", MODES)
def test_never_certifies_loopforever(mode):
    assert run_pipeline(load("loopforever"), PipelineConfig(mode=mode, refine=True)).verdict \
        == UNKNOWN


def test_report_json_is_stable():
    prog = load("const_arg_call")
    a = run_pipeline(prog, PipelineConfig()).to_dict(timing=False)
    b = run_pipeline(prog, PipelineConfig()).to_dict(timing=False)
    assert a == b
    assert "wall_ms" not in a
    assert a["verdict"] == TERMINATING and a["verdicts"] == {"g": TERMINATING,
                                                            "main": TERMINATING}
