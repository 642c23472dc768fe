"""Procedure language: syntax, interpreter and lowering to transition systems."""

from .interp import Exploration, StepLimit, explore, run
from .lower import (ENTRY, EXIT, IOTS, PC, Path, in_var, lower_to_iots, prime, site_in,
                    site_out, summary_symbol)
from .syntax import (Assign, Call, CallSite, If, Procedure, Program,
                     ResolutionError, Return, SyntaxErrorAt, UnsupportedConstruct,
                     While, call_graph, format_program, make_procedure,
                     parse_program, recursive_sccs, walk)
