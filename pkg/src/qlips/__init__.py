"""Mesh-free solver for quasi-linear elliptic and parabolic interface
problems: randomized-network least squares plus a perturbation correction."""

from .errors import (ConfigError, DomainError, NumericalError, QlipsError,
                     SamplingError, ShapeError)
from .geometry import (CollocationSet, CollocationSpec, InterfaceGeometry,
                       Region, classify, classify_points,
                       interface_point_and_normal, level_set,
                       level_set_gradient, sample_collocation,
                       subdomain_index)
from .basis import (CompositeNet, FeatureBlock, NetState, RandomFeatureNet,
                    eval_state, features, init_net)
from .problem import (Coefficient, ExactSolution, InterfaceProblem, Source,
                      builtin_example, jump_data_from_exact,
                      make_manufactured_source, manufactured_problem,
                      manufactured_source)
from .assembly import (AssemblyBlocks, PerturbationState, ResidualSystem,
                       assemble_jacobian, assemble_perturbation_jacobian,
                       assemble_perturbation_residual, assemble_residual,
                       assemble_system, build_blocks,
                       build_perturbation_state, stack_alpha, with_alpha)
from .solver import (SolveReport, SolverOptions, gauss_newton,
                     truncated_pinv_solve)
from .perturbation import (EPSILON_FLOOR, CorrectedSolution, CorrectionSpec,
                           composite_residual_norm, correct,
                           correction_nets_for, epsilon_from_residual)

__version__ = "0.1.0"
