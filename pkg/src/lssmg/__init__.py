"""Least squares shadowing sensitivities for the Lorenz system, solved by
multigrid in time, cyclic reduction or Krylov methods."""
from .dynamics import LorenzParams, Trajectory, integrate, random_initial_condition
from .errors import (BreakdownError, ConfigError, DivergenceError, GuardError,
                     InnerSolveError, LssError, NonFiniteStateError, SingularBlockError)
from .kkt import BlockTridiag, KktBlocks, assemble_blocks, schur_blocks
from .multigrid import MgConfig, build_hierarchy, mg_solve
from .cyclic_reduction import solve_cr, flop_estimate, FlopModel
from .report import SolveReport, fit_convergence_rate
from .sensitivity import ZCoordinate, direct_solve, gradient, recover_tangent
from .smoothers import SmootherSpec

__version__ = "0.1.0"
