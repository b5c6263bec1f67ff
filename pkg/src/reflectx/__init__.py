"""reflectx: spectral-Galerkin simulation of stochastic Navier-Stokes dynamics
reflected in the closed unit ball of H, via a penalization scheme.

The package produces penalized trajectory pairs (u, L), the velocity field and
the bounded-variation reflection process, and provides the diagnostics that
measure every estimate the scheme is expected to satisfy: moment bounds,
variation bounds, the boundary-support property of d|L|, the variational
inequality, and weighted Cauchy/uniqueness gaps across penalty levels.
"""

__version__ = "0.1.0"

from .fields import (  # noqa: F401
    BallGeometry,
    DimensionMismatchError,
    SpectralField,
    UNIT_BALL,
    Wavevector,
    ball_distance_quartic,
    ball_distance_sq,
    ball_project,
    inner_h,
    lambda_of,
    load_field,
    mode_field,
    norm_h,
    norm_v,
    penetration,
    phi_of,
    random_field,
    save_field,
    zero_field,
)
from .operators import (  # noqa: F401
    CoefficientSet,
    SpectralGrid,
    apply_A,
    drift_f,
    extend_field,
    noise_fields,
    noise_sigma,
    nonlinear_B,
    restrict_field,
    trilinear_b,
)
from .integrator import (  # noqa: F401
    EnsembleResult,
    IntegrationError,
    PathFailure,
    PenaltyRunConfig,
    ReflectionPath,
    brownian_increments,
    penalty_resolvent,
    simulate_ensemble,
    simulate_path,
    step,
)
from .diagnostics import (  # noqa: F401
    DiagnosticsReport,
    Estimate,
    boundary_support_integral,
    cauchy_gap,
    moment_estimates,
    probe_basis,
    stieltjes_integral,
    total_variation,
    uniqueness_gap,
    variational_inequality_check,
    vi_for_state_projection,
    vi_for_zero,
)
from .harness import (  # noqa: F401
    ConfigError,
    ExperimentError,
    ExperimentResult,
    ExperimentSpec,
    emit_report,
    member_seed,
    parse_config,
    print_config,
    run_and_emit,
    run_experiment,
    write_path_csv,
)
