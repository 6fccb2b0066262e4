"""Systemic-risk simulation and analytics for mean-field interacting diffusions."""

from .analytics import (
    FlockingBound,
    GeneratorTriple,
    TailApprox,
    VarianceReport,
    build_generator,
    flocking_bound,
    gaussian_tail_exact,
    laplace_tail_approx,
    matrix_exponential,
    variance_closed_form_k2,
    variance_delta_expansion,
    variance_homogeneous,
    variance_quadrature,
    variance_report,
)
from .errors import ConfigError, NotApplicableError, NumericalError
from .model import (
    ExpansionCoefficients,
    GroupSpec,
    PopulationLayout,
    SystemConfig,
    expansion_coefficients,
    layout_from_fractions,
    layout_from_groups,
    validate_and_expand,
)
from .montecarlo import (
    ConvergenceRow,
    EstimateWithError,
    ExpansionErrorRow,
    LossDistribution,
    convergence_study,
    estimate_flocking_exceedance,
    estimate_loss_distribution,
    estimate_systemic_event,
    expansion_error_study,
)
from .sde import (
    DefaultRecord,
    TimeGrid,
    TrajectorySet,
    detect_defaults,
    euler_paths,
    gaussian_increments,
    max_deviation,
    simulate_replication,
)

__version__ = "0.1.0"
