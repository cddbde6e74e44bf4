"""Homogenised and resolved models of nutrient uptake by root hairs."""
from .cell import CellPsi, build_cell_psi, matching_residual, psi_eval, psi_mean_finite_difference, ring_average
from .correctors import CorrectorParams, corrector_residual, w_boundary_flux, w_closed_form
from .estimators import MacroscopicModel, ReferenceModel
from .errors import (ConfigParseError, ConfigurationError, ConvergenceError, DomainError, GeometryError,
                     HairhomError, InvalidModelError, ModeError, SolverError, UnsupportedStudyError,
                     ValidationError)
from .macro import (MacroSolution, effective_sink, effective_sink_mm_explicit, h_of_u0,
                    reconstruct_second_order, sink_coefficient, solve_macro, solve_U2, solve_u0, solve_u1,
                    u0_closed_form)
from .reference import (AxiGrid, ReferenceSolution, build_axi_grid, cell_average_profile, solve_annulus,
                        solve_reference, total_uptake)
from .scenario import DEFAULT_PARAMS, Scenario, Uptake, a_from_lambda, custom_uptake, lambda_from_a

__version__ = "0.1.0"
