import shutil
import subprocess

import pytest

from termweave.encode import (CALLCTX, EXIT_SCHEMA, INIT, RECURSION, STEP, EncodingError,
                              build_callctx_clause, build_constraints, recursive_sites,
                              site_tag, parse_site_tag, split_all, split_summary, to_chc_smtlib)
from termweave.logic import evaluate, free_vars

from conftest import load

# (procedures, call sites, recursive call sites), counted by hand from the sources
SHAPES = {
    "call_chain": (2, 1, 0),
    "conditional_termination": (1, 0, 0),
    "const_arg_call": (2, 1, 0),
    "countdown": (1, 0, 0),
    "direct_recursion": (2, 2, 1),
    "inline_needed": (2, 1, 0),
    "loop_free": (1, 0, 0),
    "loopforever": (1, 0, 0),
    "mutual_recursion": (3, 3, 2),
    "nested_loops": (1, 0, 0),
    "nondet_branch": (1, 0, 0),
    "unroll_needed": (1, 0, 0),
}


@pytest.mark.parametrize("name", sorted(SHAPES))
def test_schema_counts(name):
    procs, sites, rec = SHAPES[name]
    prog = load(name)
    plain = build_constraints(prog).schema_counts()
    assert plain[INIT] == plain[STEP] == plain[EXIT_SCHEMA] == procs
    assert plain[CALLCTX] == 0
    split = split_all(build_constraints(prog)).schema_counts()
    assert split[INIT] == split[STEP] == split[EXIT_SCHEMA] == procs
    assert split[CALLCTX] == sites
    assert split[RECURSION] == plain[RECURSION] == rec
    assert len(recursive_sites(prog)) == rec


def test_split_introduces_contexts_and_sum():
    cs = split_all(build_constraints(load("const_arg_call")))
    names = {s.name for s in cs.unknowns}
    assert {"CallCtx_g_main_1", "Sum_g", "Inv_g", "RR_g", "Summary_main"} <= names
    assert "Summary_g" not in names
    ctx = cs.clauses_of("main", CALLCTX)[0]
    assert ctx.conclusion_symbols() == {cs.symbol("CallCtx", "g", "main:1")}
    # the callee's own clauses are guarded by its context
    for c in cs.clauses_of("g", INIT) + cs.clauses_of("g", STEP):
        assert cs.symbol("CallCtx", "g", "main:1") in c.premise_symbols()


def test_calling_context_clause_is_the_argument_binding():
    prog = load("const_arg_call")
    c = build_callctx_clause(build_constraints(prog), "main", 1)
    assert c.schema == CALLCTX and c.premise_symbols() == frozenset()
    (arg,) = [v for v in c.universals if v.endswith("in0")]
    for k in range(-3, 8):
        env = {v: 0 for v in c.universals}
        env[arg] = k
        premise = all(evaluate(p, env) for p in c.premises)
        assert premise == (k == 5)


def test_split_summary_of_one_site():
    prog = load("call_chain")
    cs = split_summary(build_constraints(prog), "main", prog.proc("main").call_sites[0].id)
    assert cs.split == {"step"}
    with pytest.raises(EncodingError):
        split_summary(build_constraints(prog), "main", 99)


def test_site_tags_round_trip():
    assert parse_site_tag(site_tag("f", 3)) == ("f", 3)
    assert parse_site_tag("a:b:12") == ("a:b", 12)


def test_clause_universals_cover_free_vars(corpus_program):
    _, prog = corpus_program
    for c in split_all(build_constraints(prog)).clauses:
        assert free_vars(c.formula) <= set(c.universals)


@pytest.mark.skipif(shutil.which("z3") is None, reason="z3 not installed")
@pytest.mark.parametrize("name", ["countdown", "const_arg_call", "direct_recursion"])
def test_chc_text_is_accepted_by_z3(name):
    text = to_chc_smtlib(split_all(build_constraints(load(name))))
    r = subprocess.run(["z3", "-in", "-smt2", "-T:10"], input=text, capture_output=True,
                       text=True, timeout=30)
    assert "error" not in r.stdout.lower(), r.stdout
    assert r.stdout.strip().splitlines()[-1] in ("sat", "unsat", "unknown", "timeout")
