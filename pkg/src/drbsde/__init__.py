"""Lattice solvers and executable checks for doubly reflected backward equations."""

from .errors import (ConfigError, DRBSDEError, GeneratorGrowthViolation, InfeasibleProblem,
                     InputsNotOrdered, InsufficientMetadata, InvalidArgument, LimitDisagreement,
                     MonotonicityViolation, SandwichViolation, StepTooCoarse, UniquenessViolation,
                     VerdictViolation)
from .lattice import (Forcing, LatticeProcess, ProblemData, build_lattice, build_time_grid,
                      evaluate_data, sup_gap)
from .generators import (GeneratorFamily, GeneratorSpec, Growth, add_generators, builtin,
                         infconv_family, infconv_regularize)
from .oracle import SolutionQuadruple, implicit_node_solve, solve_dp
from .penalization import (KINDS, PenaltyScheme, run_penalization, solve_penalized,
                           three_scheme_agreement)
from .sequences import solve_monotone_sequence
from .assumptions import SamplingBox, check_assumptions, mokobodzki_check, necessity_statistic
from .verification import (comparison_harness, convergence_study, skorokhod_report,
                           uniqueness_probe)

__version__ = "0.1.0"
