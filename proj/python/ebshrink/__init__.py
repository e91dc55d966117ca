"""Empirical-Bayes multi-tissue regression with a spike-and-Gaussian mixture prior."""

from ._core import (
    CvReport,
    CvTissueRow,
    Design,
    EbshrinkError,
    FitOptions,
    FitResult,
    PriorParams,
    ResponsePanel,
    Setting,
    SimConfig,
    SimData,
    SimRow,
    TissuePosterior,
    auc,
    default_config,
    e_step,
    fit,
    init_params,
    kfold_cv,
    log_bayes_factor,
    log_mvn_masked,
    log_mvn_projected,
    m_step_complete,
    m_step_masked,
    make_panel,
    mse,
    ols,
    predict,
    run_replications,
    simulate_setting,
    stouffer_combine,
    tissue_posterior,
)

__all__ = [name for name in dir() if not name.startswith("_")]
