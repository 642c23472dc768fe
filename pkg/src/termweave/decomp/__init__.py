"""Dependency graph, scheduling, fixpoint iteration, expansion and the pipeline."""

from .expand import Inline, Unroll, expand
from .graph import (MODES, Capacity, DepGraph, Schedule, SolveGroup, build_dep_graph,
                    check_schedule, schedule)
from .pipeline import (TERMINATING, UNKNOWN, Analysis, AnalysisReport, PipelineConfig,
                       analyze_once, build_templates, encode_for_mode, run_pipeline)
from .solve import Engine, GfpOutcome, GroupOutcome, gfp_iterate, restrict_clauses, solve_group
