"""Two-stage MCMC: spatial margins first, then the copula regression."""

from .chain import ChainOutput
from .copula_stage import (
    copula_design,
    copula_eta_draws,
    copula_loglik_at_mean,
    draw_predictors,
    fit_copula,
    iwls_mh_update_copula,
    iwls_mode,
    iwls_proposal,
    pseudo_observations,
)
from .margin import (
    FieldContext,
    SamplerError,
    fit_margin,
    gibbs_update_mean_block,
    gibbs_update_variances,
    loglik_at_mean,
    margin_pointwise_loglik,
    mh_update_winding,
    mh_update_zeta2,
    posterior_mean_predictor,
    ram_update_theta,
    winding_mode,
)
from .predict import (
    PredictiveParams,
    circular_median,
    predictive_log_density,
    predictive_parameters,
    sample_predictive,
)
from .ram import RamAdapter
from .state import CopulaState, MarginData, MarginState, MCMCConfig, initial_margin_state, spawn_rngs
