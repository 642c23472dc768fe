"""Command-line driver and the corpus harness comparing solving modes."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from .decomp import MODES, TERMINATING, UNKNOWN, Capacity, PipelineConfig, run_pipeline
from .ir import parse_program
from .logic import ShapeError
from .precond import PrecondProblem, infer_precond
from .synth import BackendError, Budget, TemplateConfig, make_backend

__all__ = ["main", "build_parser", "config_from_args", "compare_modes", "collect_programs",
           "analyze_source", "CORPUS_DIR", "EXIT_OK", "EXIT_UNKNOWN", "EXIT_INPUT",
           "EXIT_ALARM"]

EXIT_OK = 0
EXIT_ALARM = 1
EXIT_INPUT = 2
EXIT_UNKNOWN = 10

CORPUS_DIR = Path(__file__).parent / "corpus"
_DOMAINS = {"interval": "interval", "template-polyhedra": "polyhedron", "polyhedron": "polyhedron"}


class UsageError(Exception):
    pass


def _ranking(text: str) -> int | None:
    """``auto``, ``linear`` or ``lexicographic[:K]`` (K defaults to 2)."""
    if text == "auto":
        return None
    if text == "linear":
        return 1
    head, _, k = text.partition(":")
    if head in ("lexicographic", "lex"):
        try:
            n = int(k) if k else 2
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad ranking {text!r}") from None
        if n < 1:
            raise argparse.ArgumentTypeError("lexicographic rankings need k >= 1")
        return n
    raise argparse.ArgumentTypeError(f"bad ranking {text!r}")


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return n


def _nonneg(text: str) -> int:
    n = int(text)
    if n < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="termweave", description="Termination analysis of small "
                                "procedural programs by template-based predicate synthesis.")
    sub = p.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", help="analyse programs or a directory of .tw files")
    a.add_argument("inputs", nargs="+", help="program files or directories")
    a.add_argument("--mode", action="append", choices=MODES,
                   help="solving mode; repeat to run several (default procedural)")
    a.add_argument("--capacity", type=_positive, default=4,
                   help="most predicates solved jointly (default 4)")
    a.add_argument("--capacity-params", type=_positive, default=None,
                   help="most template parameters solved jointly")
    a.add_argument("--domain", choices=sorted(_DOMAINS), default="interval")
    a.add_argument("--bound", type=_positive, default=8, help="constant bound of bound templates")
    a.add_argument("--ranking", type=_ranking, default=None, metavar="auto|linear|lexicographic[:K]",
                   help="ranking template (default auto: linear, then lexicographic pairs)")
    a.add_argument("--backend", default=None,
                   help="'builtin' or the path of an SMT-LIB2 solver (fallback $TERMWEAVE_SOLVER)")
    a.add_argument("--box", type=int, nargs=2, metavar=("LO", "HI"), default=(-64, 64),
                   help="search box of the builtin backend")
    a.add_argument("--budget-iters", type=_positive, default=200)
    a.add_argument("--budget-secs", type=float, default=30.0)
    a.add_argument("--refine", action="store_true", help="recompose, unroll and inline on failure")
    a.add_argument("--max-unroll", type=_nonneg, default=1)
    a.add_argument("--max-inline", type=_nonneg, default=1)
    a.add_argument("--gfp-iters", type=_positive, default=10)
    a.add_argument("--lazy", action="store_true", help="add ranking-to-invariant scheduling edges")
    a.add_argument("--precond", action="append", default=[], metavar="PROC",
                   help="infer a sufficient precondition for PROC")
    a.add_argument("--compare", action="store_true", help="emit the mode comparison table")
    a.add_argument("--out", help="write the report here instead of stdout")
    a.add_argument("--no-timing", action="store_true", help="omit timings from the report")
    a.add_argument("--jobs", type=_positive, default=1, help="programs analysed concurrently")
    a.add_argument("--figures", metavar="DIR", help="also render figures into DIR")
    sub.add_parser("corpus", help="print the directory of the bundled corpus")
    return p


def config_from_args(args: argparse.Namespace, mode: str) -> PipelineConfig:
    lo, hi = args.box
    if lo > hi:
        raise UsageError("--box needs LO <= HI")
    if args.budget_secs <= 0:
        raise UsageError("--budget-secs must be positive")
    backend = args.backend or os.environ.get("TERMWEAVE_SOLVER") or "builtin"
    templates = TemplateConfig(domain=_DOMAINS[args.domain], bound=args.bound)
    return PipelineConfig(
        mode=mode,
        capacity=Capacity(args.capacity, args.capacity_params),
        templates=templates,
        ranking_k=args.ranking,
        backend=backend,
        box=(lo, hi),
        budget=Budget(args.budget_iters, args.budget_secs),
        refine=args.refine,
        max_unroll=args.max_unroll,
        max_inline=args.max_inline,
        gfp_iters=args.gfp_iters,
        lazy=args.lazy,
    )


def collect_programs(inputs: Sequence[str]) -> list[tuple[str, Path]]:
    """(name, path) of every program; directories contribute their ``*.tw`` files."""
    out: list[tuple[str, Path]] = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            out += [(f.name, f) for f in sorted(path.glob("*.tw"))]
        elif path.is_file():
            out.append((path.name, path))
        else:
            raise UsageError(f"no such file or directory: {item}")
    return out


@dataclass
class _Task:
    name: str
    source: str | None
    error: str | None
    config: PipelineConfig
    precond: tuple[str, ...] = ()
    timing: bool = True


@dataclass
class _Done:
    name: str
    mode: str
    report: dict[str, Any] | None = None
    error: str | None = None
    warnings: list[str] = field(default_factory=list)


def analyze_source(name: str, source: str, config: PipelineConfig,
                   precond: Sequence[str] = (), timing: bool = True) -> dict[str, Any]:
    """Report dictionary of one program under one configuration."""
    prog = parse_program(source)
    for proc in precond:
        prog.proc(proc)
    backend = make_backend(config.backend, config.box)
    try:
        report = run_pipeline(prog, config, backend, name)
        for proc in precond:
            problem = PrecondProblem.make(prog, proc, replace(config, refine=False),
                                          over=report.analysis)
            report.preconditions[proc] = infer_precond(problem, backend).to_dict()
    finally:
        backend.close()
    return report.to_dict(timing)


def _run_task(task: _Task) -> _Done:
    done = _Done(task.name, task.config.mode)
    if task.error is not None:
        done.error = task.error
        return done
    try:
        done.report = analyze_source(task.name, task.source or "", task.config, task.precond,
                                     task.timing)
    except BackendError as e:
        done.error = f"backend: {e}"
    except (ValueError, KeyError, ShapeError) as e:
        done.error = f"{type(e).__name__}: {e}"
    return done


def _run_all(tasks: list[_Task], jobs: int) -> list[_Done]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_task, tasks))


def _row(done: _Done, timing: bool) -> dict[str, Any]:
    row: dict[str, Any] = {"program": done.name, "mode": done.mode}
    if done.report is None:
        row.update(verdict="error", error=done.error)
        return row
    r = done.report
    row.update(verdict=r["verdict"], groups=len(r["schedule"]), cegis_iters=r["cegis_iters"])
    if timing:
        row["wall_ms"] = r["wall_ms"]
    return row


def compare_modes(results: Sequence[_Done], modes: Sequence[str],
                  timing: bool = True) -> dict[str, Any]:
    """Rows per (program, mode) plus verdict disagreements against monolithic.

    A decomposed mode certifying a program that monolithic solving does not is
    a soundness alarm; the reverse is expected and recorded as precision loss.
    """
    rows = [_row(d, timing) for d in results]
    by_prog: dict[str, dict[str, str]] = {}
    for row in rows:
        by_prog.setdefault(row["program"], {})[row["mode"]] = row["verdict"]
    alarms, losses = [], []
    for prog, verdicts in by_prog.items():
        mono = verdicts.get("monolithic")
        if mono not in (TERMINATING, UNKNOWN):
            continue
        for mode in modes:
            v = verdicts.get(mode)
            if mode == "monolithic" or v not in (TERMINATING, UNKNOWN):
                continue
            if v == TERMINATING and mono == UNKNOWN:
                alarms.append({"program": prog, "mode": mode})
            elif v == UNKNOWN and mono == TERMINATING:
                losses.append({"program": prog, "mode": mode})
    return {"modes": list(modes), "rows": rows, "soundness_alarms": alarms,
            "precision_loss": losses, "errors": sum(r["verdict"] == "error" for r in rows)}


def format_table(table: dict[str, Any]) -> str:
    cols = ["program", "mode", "verdict", "groups", "cegis_iters", "wall_ms"]
    rows = [[str(r.get(c, "")) for c in cols] for r in table["rows"]]
    widths = [max([len(c)] + [len(r[i]) for r in rows]) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows]
    for a in table["soundness_alarms"]:
        lines.append(f"ALARM: {a['program']} certified by {a['mode']} but not monolithic")
    for a in table["precision_loss"]:
        lines.append(f"precision loss: {a['program']} under {a['mode']}")
    return "\n".join(lines)


def _emit(doc: dict[str, Any], out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _analyze(args: argparse.Namespace) -> int:
    modes = list(dict.fromkeys(args.mode or ["procedural"]))
    configs = [config_from_args(args, m) for m in modes]
    if configs[0].backend != "builtin":
        make_backend(configs[0].backend).close()
    programs = collect_programs(args.inputs)
    timing = not args.no_timing
    tasks = []
    for name, path in programs:
        try:
            source, error = path.read_text(), None
        except OSError as e:
            source, error = None, f"unreadable: {e}"
        for cfg in configs:
            tasks.append(_Task(name, source, error, cfg, tuple(args.precond), timing))
    results = _run_all(tasks, args.jobs)
    for d in results:
        if d.error:
            print(f"termweave: {d.name} [{d.mode}]: {d.error}", file=sys.stderr)

    if args.compare:
        table = compare_modes(results, modes, timing)
        _emit(table, args.out)
        print(format_table(table), file=sys.stderr)
        if args.figures:
            from .plotting import plot_comparison
            plot_comparison(table, args.figures)
        return EXIT_ALARM if table["soundness_alarms"] else EXIT_OK

    reports = [d.report if d.report is not None else
               {"program": d.name, "mode": d.mode, "error": d.error} for d in results]
    if len(reports) == 1:
        _emit(reports[0], args.out)
    else:
        _emit({"reports": reports}, args.out)
    if args.figures:
        from .plotting import plot_reports
        plot_reports([d.report for d in results if d.report is not None], args.figures)
    if any(d.error for d in results):
        return EXIT_INPUT
    if any(d.report["verdict"] != TERMINATING for d in results if d.report is not None):
        return EXIT_UNKNOWN
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    if args.command == "corpus":
        print(CORPUS_DIR)
        return EXIT_OK
    try:
        return _analyze(args)
    except (UsageError, BackendError, ValueError) as e:
        print(f"termweave: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
