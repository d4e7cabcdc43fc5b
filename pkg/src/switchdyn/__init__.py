"""Simulation and growth-rate analysis for randomly switched vector fields."""

from . import models  # populates the model registry
from .core import (
    BlockDecomposition,
    LinearSwitchedSystem,
    SwitchedSystem,
    Trajectory,
    block_decompose,
    build_model,
    fd_jacobian,
    linearize_at_origin,
    load_linear_system,
    validate_face_invariance,
    validate_system,
)
from .errors import (
    DepthExceeded,
    EmptyWindow,
    MissingSplit,
    NonFiniteState,
    NotMetzler,
    NotOnFace,
    NotTriangular,
    NumericError,
    OriginNotEquilibrium,
    RateBoundViolated,
    Reducible,
    StepUnderflow,
    SwitchdynError,
    ValidationError,
)
from .integrators import IntegratorConfig, flow, flow_on_sphere
from .jump import (
    MarkovChainSpec,
    ModePath,
    SimulationPlan,
    rng_for,
    simulate_chain,
    simulate_on_face,
    simulate_pdmp,
    stationary_distribution,
    write_trajectory_csv,
)
from .lyapunov import (
    ExponentEstimate,
    TwoDTriangularVerdict,
    check_face_absorption,
    check_triangular_max,
    classify_2d_triangular,
    estimate_growth_via_theta,
    estimate_top_exponent,
    metzler_lower_bound,
    minimum_growth_scan,
    theta_average_batch,
)
from .persistence import (
    ExtinctionReport,
    GridSpec,
    OccupationHistogram,
    bracket_generators,
    bracket_rank,
    extinction_rate,
    first_exit,
    l1_distance,
    low_norm_fraction,
    occupation_measure,
)

__version__ = "0.1.0"
