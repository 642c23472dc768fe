"""Template-based predicate synthesis."""

from .backend import (BackendError, BuiltinBackend, ParamGroup, SmtLibBackend,
                      SolverBackend, SolverUnknown, make_backend)
from .cegis import (Budget, CegisResult, PredicateSolution, Subproblem, Verification,
                    check_shapes, cegis_solve, ground_constraint, verify_clause,
                    verify_solution)
from .templates import (BoundsTemplate, Instance, RankingTemplate, Template, TemplateConfig,
                        TemplateError, make_template)
from .oracle import SearchSpaceTooLarge, brute_force_solve, clause_violations, ground_instances
