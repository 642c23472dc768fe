"""Interprocedural termination analysis by template-based predicate synthesis."""

from .decomp import PipelineConfig, run_pipeline
from .ir import parse_program
from .precond import PrecondProblem, infer_precond

__version__ = "0.1.0"

__all__ = ["PipelineConfig", "run_pipeline", "parse_program", "PrecondProblem", "infer_precond",
           "__version__"]
