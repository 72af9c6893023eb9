"""Risk-averse Bayesian estimation: estimators, gains, and axiom checks."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    GridError,
    InvalidProblem,
    LossError,
    QuadratureError,
    RiskaverseError,
    ScheduleError,
    SingularInformation,
    UnknownCatalogId,
    UnsupportedProblem,
)
from .numerics import (
    GridSpec,
    QuadratureResult,
    SetEstimate,
    SetLimit,
    finite_diff_hessian,
    grid_argmax,
    integrate_box,
    set_distance,
    setlim_detect,
)
from .problems import (
    Diffeomorphism,
    EstimationProblem,
    ObservationSpace,
    ParameterSpace,
    PROBLEM_CATALOG,
    affine_map,
    augment_superfluous,
    bernoulli_observation,
    bernoulli_trials,
    binomial_restricted,
    builtin_problem,
    cube_map,
    exp_map,
    finite_categorical,
    finite_posterior,
    gaussian_mean,
    identity_map,
    posterior_normalizer,
    posterior_weight,
    reparameterize,
    transform_observations,
    validate_problem,
)
from .losses import (
    ATTENUATIONS,
    Attenuation,
    LOSS_NAMES,
    Loss,
    RNProfile,
    f_divergence,
    f_divergence_loss,
    g_loss_through_recovery,
    gain_k,
    hellinger,
    hellinger_sq,
    iia_violating,
    iro_violating,
    iro_violating_masses,
    make_loss,
    quadratic,
    quadratic_loss,
    raised_cosine,
    recovered_bernoulli_rate,
    rn_profile,
    semicontinuous_g,
    truncated_quadratic,
    validate_attenuation,
    weighted_ml,
)
from .information import InfoMatrix, fisher_information, gamma_fit, loss_hessian
from .estimators import (
    ConvergenceTrace,
    KSchedule,
    expected_gain,
    fmap_estimate,
    generalized_wf,
    map_estimate,
    ml_estimate,
    posterior_mean,
    risk_averse_estimate,
    wf_estimate,
)
from .axioms import (
    AXIOMS,
    AxiomReport,
    DiscriminativityResult,
    ExperimentResult,
    NecessityReport,
    check_iia,
    check_irp,
    check_iro,
    check_isi,
    default_noises,
    default_observation_transforms,
    default_pairs,
    default_parameter_transforms,
    discriminativity_probe,
    iia_problem_pair,
    necessity_suite,
)
from .config import (
    ESTIMATOR_NAMES,
    ExperimentConfig,
    config_digest,
    load_config,
    parse_config,
)

__all__ = [
    "__version__",
    "ConfigError",
    "GridError",
    "InvalidProblem",
    "LossError",
    "QuadratureError",
    "RiskaverseError",
    "ScheduleError",
    "SingularInformation",
    "UnknownCatalogId",
    "UnsupportedProblem",
    "GridSpec",
    "QuadratureResult",
    "SetEstimate",
    "SetLimit",
    "finite_diff_hessian",
    "grid_argmax",
    "integrate_box",
    "set_distance",
    "setlim_detect",
    "Diffeomorphism",
    "EstimationProblem",
    "ObservationSpace",
    "ParameterSpace",
    "PROBLEM_CATALOG",
    "affine_map",
    "augment_superfluous",
    "bernoulli_observation",
    "bernoulli_trials",
    "binomial_restricted",
    "builtin_problem",
    "cube_map",
    "exp_map",
    "finite_categorical",
    "finite_posterior",
    "gaussian_mean",
    "identity_map",
    "posterior_normalizer",
    "posterior_weight",
    "reparameterize",
    "transform_observations",
    "validate_problem",
    "ATTENUATIONS",
    "Attenuation",
    "LOSS_NAMES",
    "Loss",
    "RNProfile",
    "f_divergence",
    "f_divergence_loss",
    "g_loss_through_recovery",
    "gain_k",
    "hellinger",
    "hellinger_sq",
    "iia_violating",
    "iro_violating",
    "iro_violating_masses",
    "make_loss",
    "quadratic",
    "quadratic_loss",
    "raised_cosine",
    "recovered_bernoulli_rate",
    "rn_profile",
    "semicontinuous_g",
    "truncated_quadratic",
    "validate_attenuation",
    "weighted_ml",
    "InfoMatrix",
    "fisher_information",
    "gamma_fit",
    "loss_hessian",
    "ConvergenceTrace",
    "KSchedule",
    "expected_gain",
    "fmap_estimate",
    "generalized_wf",
    "map_estimate",
    "ml_estimate",
    "posterior_mean",
    "risk_averse_estimate",
    "wf_estimate",
    "AXIOMS",
    "AxiomReport",
    "DiscriminativityResult",
    "ExperimentResult",
    "NecessityReport",
    "check_iia",
    "check_irp",
    "check_iro",
    "check_isi",
    "default_noises",
    "default_observation_transforms",
    "default_pairs",
    "default_parameter_transforms",
    "discriminativity_probe",
    "iia_problem_pair",
    "necessity_suite",
    "ESTIMATOR_NAMES",
    "ExperimentConfig",
    "config_digest",
    "load_config",
    "parse_config",
]
