//! Learning from physical corrections.

mod beta;
mod chi_squared;
mod deformation;
mod explanation;
mod online;
mod theta_update;

pub use beta::{estimate_beta_hat, laplace_loglik, BetaEstimatorConfig};
pub use chi_squared::{fit_chi_squared, ChiSquaredFit, MIN_FIT_SAMPLES};
pub use deformation::{build_deformation, deform, CorrectionEvent, DeformationOperator};
pub use explanation::{explanation_posterior, ExplanationModel, FeatureExplanation};
pub use online::{online_step, FeatureEvidence, InteractionRecord, LearningMode, OnlineLearner, OnlineLearnerState};
pub use theta_update::{adaptive_theta_update, fixed_theta_update, ThetaUpdate, ThetaUpdateConfig};
