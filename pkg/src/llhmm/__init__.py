"""Finite-difference heterogeneous multiscale method for Landau-Lifshitz
dynamics with a rapidly oscillating exchange coefficient."""

from .coefficients import (
    Coefficient,
    HomogenizedMatrix,
    homogenized_matrix,
    parse_coefficient,
    preset,
    solve_cell_problem,
)
from .grid import Grid, MagnetizationField, central_difference, div_a_grad, div_grad_AH
from .integrators import (
    FieldProvider,
    IntegratorState,
    compose_h,
    estimate_stability_limit,
    integrate,
    llg_rhs,
    step_heun_p,
    step_implicit_midpoint,
    step_mpe,
    step_mpea,
    step_rk4_p,
)
from .kernels import Kernel, construct_kernel, scaled_eval, space_time_average
from .macro import HmmConfig, hmm_field_provider, run_hmm
from .micro import (
    MicroResult,
    MicroSetup,
    error_decomposition,
    interpolate_polynomial,
    normalize_initial_data,
    solve_micro,
    upscale,
)
from .reference import ErrorReport, l2_error, run_averaged_baseline, run_dns, run_homogenized

__version__ = "0.1.0"
