"""Multiscale probabilistic ILI forecasting.

A hierarchical Beta state-space model is fit to state-level surveillance
panels by adaptive Metropolis-within-Gibbs MCMC; forecasts are sampled at the
state scale, aggregated bottom-up with population weights, binned into
CDC-style targets, and scored with the multibin log score.
"""

from .data import (
    IliPanel,
    RawIliRow,
    SeasonCalendar,
    VolatilityReport,
    WeightMatrix,
    build_panel,
    clean_row,
    load_baselines,
    load_panel,
    load_weights,
    observed_aggregates,
    panel_from_values,
    parse_ilinet,
    save_panel,
    scorable_seasonal_targets,
    standardized_volatility,
)
from .evaluation import (
    EvaluationResult,
    ExperimentPlan,
    emit_report,
    hpd_width,
    mse_table,
    run_loso,
    skill_summary,
)
from .forecast import (
    ForecastJob,
    TrajectoryDraws,
    aggregate,
    predict_states,
    read_flusight_csv,
    write_flusight_csv,
)
from .model import (
    Hyperconfig,
    ModelDims,
    ModelState,
    log_joint,
    log_likelihood,
    log_prior,
    sample_observations,
    sample_prior,
    theta_panel,
)
from .sampler import (
    McmcConfig,
    PosteriorDraws,
    calibration_coverage,
    geweke_joint_test,
    run_chain,
    run_chains,
    theta_draws,
)
from .targets import (
    ScoreRecord,
    SeasonTruth,
    TargetDistribution,
    average_scores,
    compute_onset,
    compute_peak,
    evaluation_window,
    multibin_score,
    pad_distribution,
    point_prediction,
    round_tenth,
    target_distributions,
)

__version__ = "0.1.0"
