"""End-to-end analysis: lower, encode, schedule, solve, verify, refine."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from ..encode import ConstraintSystem, build_constraints, recursive_sites, split_all
from ..ir import Program, format_program
from ..logic import PredicateSymbol, smt_symbol, to_smtlib
from ..synth import (Budget, Instance, SolverBackend, SolverUnknown, BackendError, Subproblem,
                     Template, TemplateConfig, check_shapes, make_backend, make_template,
                     verify_clause)
from ..logic import ShapeError
from .expand import Inline, Unroll, expand
from .graph import (Capacity, DepGraph, Schedule, SolveGroup, build_dep_graph, order_groups,
                    schedule)
from .solve import Engine, GroupOutcome, gfp_iterate, recursive_site_tags, solve_group

__all__ = ["PipelineConfig", "AnalysisReport", "Analysis", "run_pipeline", "analyze_once",
           "build_templates", "encode_for_mode", "TERMINATING", "UNKNOWN"]

TERMINATING = "Terminating"
UNKNOWN = "Unknown"


@dataclass(frozen=True)
class PipelineConfig:
    """Analysis settings.

    ``ranking_k`` of None starts with linear rankings and escalates to
    lexicographic pairs for groups where linear ones fail.
    """

    mode: str = "procedural"
    capacity: Capacity = Capacity()
    templates: TemplateConfig = TemplateConfig()
    ranking_k: int | None = None
    backend: str = "builtin"
    box: tuple[int, int] = (-64, 64)
    budget: Budget = Budget()
    refine: bool = False
    max_recompose: int = 2
    max_unroll: int = 1
    max_inline: int = 1
    gfp_iters: int = 10
    lazy: bool = False
    universe: tuple[int, int] | None = None

    def describe(self) -> dict[str, Any]:
        t = self.templates
        return {
            "mode": self.mode,
            "capacity": self.capacity.max_predicates,
            "max_params": self.capacity.max_params,
            "domain": t.domain,
            "bound": t.bound,
            "ranking": "auto" if self.ranking_k is None else self.ranking_k,
            "backend": self.backend,
            "box": list(self.box),
            "budget_iters": self.budget.iters,
            "budget_secs": self.budget.secs,
            "refine": self.refine,
            "max_unroll": self.max_unroll,
            "max_inline": self.max_inline,
        }


def encode_for_mode(prog: Program, mode: str) -> ConstraintSystem:
    cs = build_constraints(prog)
    return cs if mode == "monolithic" else split_all(cs)


def build_templates(cs: ConstraintSystem, config: TemplateConfig,
                    ranking_k: int | None = None) -> dict[PredicateSymbol, Template]:
    cfg = config if ranking_k is None else replace(config, ranking_k=ranking_k)
    out = {}
    for s in cs.unknowns:
        proc = cs.owner_proc(s) if s.kind != "CallCtx" else s.owner
        pc, locs = cs.layout.get(proc, (None, ()))
        out[s] = make_template(s, cs.names_of(s), cfg, pc if s.kind == "Inv" else None, locs)
    return out


def define_fun(sym: PredicateSymbol, inst: Instance) -> str:
    d = inst.definition
    params = " ".join(f"({smt_symbol(p)} Int)" for p in d.params)
    return f"(define-fun {smt_symbol(sym.name)} ({params}) Bool {to_smtlib(d.body)})"


@dataclass
class Analysis:
    """One pass of the pipeline over a fixed program and schedule."""

    prog: Program
    cs: ConstraintSystem
    graph: DepGraph
    schedule: Schedule
    outcomes: list[GroupOutcome] = field(default_factory=list)
    solutions: dict[PredicateSymbol, Instance] = field(default_factory=dict)
    verdicts: dict[str, str] = field(default_factory=dict)
    verdict: str = UNKNOWN
    failed_groups: list[int] = field(default_factory=list)
    gfp: list[dict[str, Any]] = field(default_factory=list)
    gfp_iterates: dict[int, list] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)
    wall_ms: float = 0.0

    @property
    def cegis_iters(self) -> int:
        return sum(o.iterations for o in self.outcomes)


def _verify_all(a: Analysis, engine: Engine) -> None:
    templates = engine.templates
    sp = Subproblem(a.cs.clauses, templates)
    try:
        check_shapes(Subproblem(a.cs.clauses, {s: t for s, t in templates.items()
                                              if s in a.solutions}), a.solutions)
    except ShapeError as e:
        a.diagnostics.append(str(e))
        a.verdicts = {p.name: UNKNOWN for p in a.prog.procedures}
        return
    ok = {p.name: True for p in a.prog.procedures}
    for c in a.cs.clauses:
        needed = c.premise_symbols() | c.conclusion_symbols()
        if not needed <= a.solutions.keys():
            ok[c.proc] = False
            continue
        try:
            cex = verify_clause(c, sp, a.solutions, engine.backend)
        except (SolverUnknown, BackendError) as e:
            a.diagnostics.append(f"{c.label}: verification undecided ({e})")
            ok[c.proc] = False
            continue
        if cex is not None:
            a.diagnostics.append(f"{c.label}: falsified at {dict(sorted(cex.items()))}")
            ok[c.proc] = False
    a.verdicts = {p: TERMINATING if v else UNKNOWN for p, v in ok.items()}
    a.verdict = TERMINATING if all(ok.values()) else UNKNOWN


def analyze_once(prog: Program, config: PipelineConfig, backend: SolverBackend,
                 sched: Schedule | None = None, cs: ConstraintSystem | None = None) -> Analysis:
    """Solve every group of the schedule in order, then verify all clauses."""
    t0 = time.monotonic()
    cs = cs or encode_for_mode(prog, config.mode)
    graph = build_dep_graph(cs, config.lazy)
    templates = build_templates(cs, config.templates, config.ranking_k)
    if sched is None:
        weights = {s: len(t.params) for s, t in templates.items()}
        sched = schedule(graph, config.capacity, config.mode, weights)
    engine = Engine(backend, templates, config.budget, config.universe,
                    2 if config.ranking_k is None else None)
    a = Analysis(prog, cs, graph, sched)
    unfold_sites = recursive_site_tags(recursive_sites(prog))
    for idxs in sched.clusters():
        groups = [sched.groups[i] for i in idxs]
        if groups[0].fixpoint == "gfp-iterate":
            g = gfp_iterate(groups, cs.clauses, a.solutions, engine, unfold_sites,
                            config.gfp_iters)
            a.outcomes.extend(g.groups)
            a.gfp.append({"groups": idxs, "rounds": g.rounds, "stable": g.stable,
                          "widened": g.widened, "status": g.status})
            a.gfp_iterates[idxs[0]] = g.iterates
            if g.status != "solved":
                a.failed_groups = idxs
                break
            for o in g.groups:
                a.solutions.update(o.solutions)
            if g.widened:
                a.diagnostics.append(f"fixpoint over groups {idxs} did not stabilise "
                                     f"within {config.gfp_iters} rounds")
                a.failed_groups = idxs
        else:
            o = solve_group(groups[0], cs.clauses, a.solutions, engine)
            a.outcomes.append(o)
            if o.status != "solved":
                a.diagnostics.append(f"group {idxs[0]} ({', '.join(groups[0].names)}): {o.reason}")
                a.failed_groups = idxs
                break
            a.solutions.update(o.solutions)
    _verify_all(a, engine)
    if a.verdict != TERMINATING and not a.failed_groups:
        a.failed_groups = list(range(len(sched.groups)))
    a.wall_ms = (time.monotonic() - t0) * 1000.0
    return a


def _recompose(a: Analysis) -> Schedule:
    """Merge the failing groups with the groups they directly depend on."""
    sched, g = a.schedule, a.graph
    failing = set(a.failed_groups)
    merge = set(failing)
    for i in failing:
        for s in sched.groups[i].predicates:
            for p in g.predecessors(s):
                merge.add(sched.group_of(p))
    # keep whole gfp clusters together
    for i in list(merge):
        gi = sched.groups[i]
        if gi.fixpoint == "gfp-iterate":
            merge |= {j for j, gj in enumerate(sched.groups)
                      if gj.fixpoint == "gfp-iterate" and gj.cluster == gi.cluster}
    merged = sorted((s for i in merge for s in sched.groups[i].predicates), key=g.key)
    parts: list[tuple[str, list]] = []
    done = False
    for i, grp in enumerate(sched.groups):
        if i in merge:
            if not done:
                parts.append(("joint", merged))
                done = True
            continue
        parts.append((grp.role, list(grp.predicates)))
    return Schedule(order_groups(g, parts, False), sched.mode)


def _digest(prog: Program) -> str:
    return hashlib.sha256(format_program(prog).encode()).hexdigest()[:16]


@dataclass
class AnalysisReport:
    program: str
    digest: str
    config: dict[str, Any]
    analysis: Analysis
    refinements: list[dict[str, Any]] = field(default_factory=list)
    preconditions: dict[str, Any] = field(default_factory=dict)
    wall_ms: float = 0.0

    @property
    def verdict(self) -> str:
        return self.analysis.verdict

    @property
    def verdicts(self) -> dict[str, str]:
        return self.analysis.verdicts

    def to_dict(self, timing: bool = True) -> dict[str, Any]:
        a = self.analysis
        groups = []
        for i, grp in enumerate(a.schedule.groups):
            entry: dict[str, Any] = {
                "index": i, "predicates": grp.names, "objective": grp.objective,
                "fixpoint": grp.fixpoint, "role": grp.role,
            }
            outs = [o for o in a.outcomes if o.group == grp]
            if outs:
                o = outs[-1]
                entry.update(status=o.status, iterations=sum(x.iterations for x in outs))
                if o.ranking_k is not None:
                    entry["ranking_k"] = o.ranking_k
                if timing:
                    entry["wall_ms"] = round(sum(x.wall_ms for x in outs), 3)
            else:
                entry.update(status="skipped", iterations=0)
            groups.append(entry)
        out: dict[str, Any] = {
            "program": self.program,
            "digest": self.digest,
            "config": self.config,
            "verdict": a.verdict,
            "verdicts": dict(sorted(a.verdicts.items())),
            "schedule": groups,
            "fixpoints": a.gfp,
            "cegis_iters": a.cegis_iters,
            "solutions": {s.name: define_fun(s, i) for s, i in
                          sorted(a.solutions.items(), key=lambda kv: a.graph.key(kv[0]))},
            "refinements": self.refinements,
            "diagnostics": a.diagnostics,
        }
        if self.preconditions:
            out["preconditions"] = self.preconditions
        if timing:
            out["wall_ms"] = round(self.wall_ms, 3)
        return out


def run_pipeline(prog: Program, config: PipelineConfig = PipelineConfig(),
                 backend: SolverBackend | None = None, name: str = "<program>") -> AnalysisReport:
    """Analyse ``prog``; with refinement, climb the recompose/unroll/inline ladder."""
    t0 = time.monotonic()
    own = backend is None
    backend = backend or make_backend(config.backend, config.box)
    try:
        a = analyze_once(prog, config, backend)
        report = AnalysisReport(name, _digest(prog), config.describe(), a)
        if config.refine and a.verdict != TERMINATING:
            _refine(prog, config, backend, report)
    finally:
        if own:
            backend.close()
    report.wall_ms = (time.monotonic() - t0) * 1000.0
    return report


def _refine(prog: Program, config: PipelineConfig, backend: SolverBackend,
            report: AnalysisReport) -> None:
    base = report.analysis
    current = base
    for step in range(config.max_recompose):
        if config.mode == "monolithic":
            break
        sched = _recompose(current)
        if len(sched.groups) == len(current.schedule.groups):
            break
        current = analyze_once(prog, config, backend, sched, current.cs)
        report.refinements.append({"action": f"recompose #{step + 1}",
                                   "groups": len(sched.groups), "verdict": current.verdict})
        if current.verdict == TERMINATING:
            report.analysis = current
            return
    actions: list[Unroll | Inline] = [Unroll(k) for k in range(1, config.max_unroll + 1)]
    actions += [Inline(d) for d in range(1, config.max_inline + 1)]
    for act in actions:
        expanded = expand(prog, act)
        if expanded == prog:
            continue
        a = analyze_once(expanded, config, backend)
        report.refinements.append({"action": act.describe(), "digest": _digest(expanded),
                                   "verdict": a.verdict})
        if a.verdict == TERMINATING:
            report.analysis = a
            return
