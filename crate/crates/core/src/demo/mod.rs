//! Offline joint `(θ, β)` inference from demonstrations.

mod belief;
mod grids;

pub use belief::{
    demo_loglik, logsumexp, misspecification_flag, posterior_weights, update_belief, JointBelief,
    MisspecificationPolicy, WeightMode,
};
pub use grids::{build_default_grids, BetaGrid, ThetaGrid, DEFAULT_BETAS};
