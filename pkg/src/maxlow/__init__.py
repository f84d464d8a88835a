"""Staggered-grid solvers for low-frequency time-harmonic Maxwell problems.

The package covers the whole-space Green's-kernel representation with its
static limit and radiation diagnostics, the bounded-domain mimetic Maxwell
operator with spectral, kernel and Helmholtz-decomposition machinery,
moment-constrained static solvers, and a configuration-driven experiment CLI.
"""

from .errors import (
    ConfigError,
    ConstraintError,
    GeometryError,
    MaxlowError,
    NearSingularError,
    SeriesDivergenceError,
    ShapeError,
    SingularityError,
)
from .grid import (
    GridDomain,
    Kind,
    MaterialLaw,
    StaggeredField,
    WeightExponent,
    adjoint_defect,
    discrete_curl,
    discrete_curl_dual,
    discrete_div,
    discrete_div_dual,
    discrete_grad,
    discrete_grad_dual,
    field_norm,
    rho,
    weighted_inner_product,
)
from .greens import (
    HelmholtzKernel,
    convolve_grad,
    convolve_scalar,
    cross_convolve,
    eval_grad_phi,
    eval_phi,
    singular_cell_weight,
)
from .operator import (
    DecompositionResult,
    HarmonicBasis,
    MaxwellOperatorMatrix,
    SpectralData,
    assemble,
    helmholtz_decompose,
    kernel_basis,
    neumann_series,
    resolvent_solve,
    static_inverse,
)
from .sfld import read_sfld, write_sfld
from .sources import generic_sources, random_bump_field, smooth_bump, solenoidal_sources
from .statics import (
    BasisSetB,
    StaticProblemData,
    build_B,
    project_along_gradients,
    solve_static,
    solve_static_magnetic,
    verify_steps,
)
from .wholespace import (
    IsotropicBlockConstants,
    WholeSpaceSolution,
    apriori_ratio,
    box_points,
    fit_loglog_slope,
    helmholtz_rhs,
    interior_mask,
    limiting_absorption_sweep,
    maxwell_residual,
    points_norm,
    radiation_defect,
    radiation_sweep,
    solve_on_grid,
    solve_whole_space,
    sphere_points,
    static_limit_on_grid,
    static_limit_solution,
    vector_laplacian,
)

__version__ = "0.1.0"
