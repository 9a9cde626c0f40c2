//! Diagnostics: participation-weighted divergence, concentration checks on
//! window averages, learning-rate planning and convergence-slope fits.

mod bounds;
mod divergence;
mod planner;
mod slope;

pub use bounds::{
    binomial_slack, chebyshev_mixing_check, hoeffding_check, BoundCheck, BoundKind, MixingReport,
    MixingSpec,
};
pub use divergence::{
    decomposition_check, divergence_exact, divergence_sampled, round_terms, DecompositionReport,
    DivergenceReport, RoundTerms, SampleSpec,
};
pub use planner::{
    choose_amplification_interval, lr_manual, lr_noise_adaptive, lr_noise_agnostic,
    lr_theorem_caps, IntervalChoice, IntervalClamp, LRPlan, PlanInputs, PlanSource,
};
pub use slope::{fit_convergence_slope, ols, LineFit, SlopeFit};
