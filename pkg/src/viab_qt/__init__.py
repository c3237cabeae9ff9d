"""viab-qt: Monte Carlo verification of viability for stochastic
semilinear control systems in a spectral truncation.

The library estimates one-step tangency residuals, traces their decay
across step ladders, constructs budget-audited approximate mild solutions,
runs closed-loop viability experiments and certifies deterministic
boundary conditions for smooth constraint sets.
"""

from ._kernels import USING_NUMBA, backend_name
from .approx_builder import (ApproxMildSolution, AuditReport, BuildOutcome,
                             BuilderFailure, audit_definition3,
                             build_approx_solution, theta_nonexpansive_check)
from .constraint_sets import (Ball, HalfSpace, LevelSet, ProjectionResult,
                              boundary_sample, distance, make_constraint,
                              make_levelset, project)
from .errors import (BlowUpError, ConfigError, DegenerateCovarianceError,
                     NumericalError, ProjectionError, ViabQtError)
from .nagumo_checker import (BoundaryCertificate, NagumoReport,
                             certify_boundary, check_smooth_point,
                             check_unit_ball_point, galerkin_ladder)
from .one_step_sampler import (OneStepLaw, Trajectory, constant_strategy,
                               coupled_step_samples, integrate_mild,
                               one_step_law, sample_one_step)
from .quasi_tangency import (TangencyProfile, TangencyResidual,
                             correction_variable, minimize_residual,
                             residual_for_control, residual_terms,
                             tangency_profile)
from .spectral_core import (HSOperator, SpectralSpace, cholesky_factor,
                            drift_convolution, hs_norm, noise_covariance,
                            sampling_factor, semigroup_apply)
from .streams import substream
from .system_model import (CoefficientModel, ControlSet, LinearModel,
                           control_grid, eval_drift, eval_noise,
                           lipschitz_probe, make_model, register_family,
                           registry_families, singleton_control)
from .viability_mc import (LinearEquivalenceReport, ViabilityReport,
                           closed_loop_viability,
                           linear_equivalence_experiment)

__version__ = "0.1.0"
