"""Interval-design dose finding with isotonic and dose-response MTD estimation."""

__version__ = "0.1.0"

from .core import (
    CohortEvent,
    Decision,
    DoseGrid,
    TrialDesign,
    TrialRecord,
    TrialState,
    TrialStatus,
    admissible_doses,
    apply_cohort,
    check_elimination,
    compute_boundaries,
    decide,
    decision_table,
    replay_events,
    run_trial,
    visited_doses,
)
from .drm import (
    CoefficientPrior,
    DoseResponseModel,
    GridPosteriorEngine,
    PosteriorSummary,
    grid_posterior,
    log_posterior,
    mcmc_sample,
    model_prob,
    select_mtd_drm,
)
from .elicit import (
    BetaSpec,
    ElicitationInput,
    ElicitedPrior,
    QuantileTargets,
    SearchConstraints,
    anchor_coefficients,
    beta_from_median,
    beta_median,
    beta_quantile,
    build_targets,
    elicit_prior,
    elicitation_report,
    implied_quantiles,
    min_info_beta,
    optimize_prior,
    quantile_loss,
)
from .errors import (
    DoseFindingError,
    InvalidDesignError,
    NumericalUnderflowError,
    OptimizationFailureError,
    ScenarioError,
    TrialStateError,
    UnsupportedFamilyError,
)
from .links import LINKS, link_forward, link_inverse
from .pava import (
    IsotonicFit,
    isotonic_fit,
    pava_fit,
    posterior_point,
    posterior_var,
    select_mtd_pava,
)
from .sim import (
    MethodSpec,
    Scenario,
    SimulationReport,
    SweepConfig,
    allocation_summary,
    correct_rate,
    load_sweep_config,
    make_estimator,
    overdose_rate,
    run_scenario,
    run_scenario_multi,
    run_sweep,
    standard_scenarios,
    sweep_rows,
    sweep_summary,
)
