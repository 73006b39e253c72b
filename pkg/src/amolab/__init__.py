"""amolab: a numerical laboratory for a wave model of the Atlantic
Multidecadal Oscillation and its delay-equation reductions."""

__version__ = "0.1.0"

from .params import (
    DegenerateSystemError,
    ExpansionCoeffs,
    ModelCoeffs,
    PhysicalParams,
    WaveStructure,
    derive_coeffs,
    derive_wave_structure,
    expansion_coeffs,
    load_config,
    scale_basin_width,
)
from .pde import (
    FieldState,
    Grid,
    StabilityError,
    Trajectory,
    build_system_matrix,
    exact_solution,
    init_gaussian,
    overturning_diagnostics,
    simulate,
    step,
)
from .mz import (
    LaplaceLimit,
    OrthogonalEigen,
    kernel_matrix,
    kernel_oracle,
    kernel_shape,
    langevin_simulate,
    laplace_limit,
    memory_integrand,
    noise_terms,
    orthogonal_eigen,
    orthogonal_solution,
)
from .delay import (
    DelaySystem,
    HistoryBuffer,
    HistoryError,
    difference_trajectory,
    error_terms,
    integrate_dde,
    step_difference,
    warmup_history,
)
from .spectral import (
    EigenSet,
    SpectrumResult,
    asymptotic_spectrum,
    char_roots,
    dense_eigensolver,
    discrete_eigen_closed_form,
    eigenfunction_bc_error,
    exact_pde_eigen,
    psd,
)
from .ingest import IndexSeries, parse_index, running_mean
