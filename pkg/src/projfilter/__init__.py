"""projfilter: measurement-based projection filtering for state preparation.

Simulates sequential ancilla measurements that apply cos(t_i O + delta_i) to
a register state, projecting onto symmetry sectors and filtering by energy,
and optimizes the measurement times and phases that shape the filter.
"""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConvergenceError,
    DependencyError,
    ExtinctionError,
    ParseError,
    StructureError,
)
from .filtering import (
    FilterTrajectory,
    MeasurementRecord,
    SpectralState,
    TrajectoryRecord,
    apply_step_spectral,
    apply_step_statevector,
    asymptotic_success,
    cos_sin_branches,
    filter_curve,
    filter_slope,
    filter_value,
    group_degenerate,
    load_spectral_state,
    run_postselected,
    run_sampled,
    save_spectral_state,
    shift_target,
    success_probability,
)
from .operators import (
    EigenDecomposition,
    SectorBasis,
    SparseHermitianOperator,
    SpinLatticeSpec,
    StateVector,
    build_heisenberg,
    build_jz,
    build_total_spin_squared,
    eigendecompose,
    expectation,
    extremal_eigenvalues,
    jz_sector,
    neel_state,
    random_trial_state,
    scale_and_shift,
    sector_restrict,
    sector_restrict_state,
)
from .optimize import (
    BaselineResult,
    OptimizationConfig,
    OptimizationResult,
    PseudoSpectrumConfig,
    build_pseudo_spectrum,
    compare_baselines,
    objective,
    objective_gradient,
    optimize_schedule,
    target_profile,
)
from .schedules import (
    Schedule,
    constant_schedule,
    exponential_schedule,
    gaussian_schedule,
    halving_schedule,
    load_schedule,
    save_schedule,
)

__all__ = [name for name in dir() if not name.startswith("_")]
