//! Confidence estimate `β̂` for a single correction.
//!
//! With the Laplace approximation of the action partition function the
//! log-likelihood of an observed push is
//! `−βλ(‖u_H‖² − ‖u*‖²) + ½ ln(βᵏ|H| / (2π)ᵏ)`, maximized at
//! `β̂ = k / (2λ(‖u_H‖² − ‖u*‖²))`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Error, Result};
use crate::model::dot;
use crate::optimizer::CorrectionSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaEstimatorConfig {
    /// Effort weight `λ`.
    pub lambda: f64,
    /// Action dimension `k`.
    pub k: usize,
    /// Floor on `‖u_H‖² − ‖u*‖²`.
    pub floor: f64,
    pub cap: f64,
}

impl Default for BetaEstimatorConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            k: 2,
            floor: 1e-8,
            cap: 1e4,
        }
    }
}

impl BetaEstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda", format!("must be positive, got {}", self.lambda)));
        }
        if self.k == 0 {
            return Err(invalid("k", "action dimension must be at least 1"));
        }
        if !(self.floor > 0.0) {
            return Err(invalid("floor", "must be positive"));
        }
        if !(self.cap > 0.0) {
            return Err(invalid("cap", "must be positive"));
        }
        Ok(())
    }

    fn check(&self, u_h: &[f64], sol: &CorrectionSolution) -> Result<f64> {
        self.validate()?;
        ensure_len(self.k, u_h.len(), "observed push")?;
        ensure_len(self.k, sol.u_star.len(), "minimal push")?;
        if !sol.converged {
            return Err(Error::Infeasible {
                residual: sol.constraint_residual,
            });
        }
        Ok(dot(u_h, u_h) - sol.effort())
    }
}

/// `β̂ = k / (2λ max(‖u_H‖² − ‖u*‖², δ))`, capped.
pub fn estimate_beta_hat(u_h: &[f64], sol: &CorrectionSolution, cfg: &BetaEstimatorConfig) -> Result<f64> {
    let gap = cfg.check(u_h, sol)?;
    let beta = cfg.k as f64 / (2.0 * cfg.lambda * gap.max(cfg.floor));
    Ok(beta.min(cfg.cap))
}

/// Laplace-approximated `ln P(u_H | β)`.
pub fn laplace_loglik(u_h: &[f64], sol: &CorrectionSolution, beta: f64, cfg: &BetaEstimatorConfig) -> Result<f64> {
    let gap = cfg.check(u_h, sol)?;
    if !(beta > 0.0) {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    ensure_len(cfg.k, sol.hessian.nrows(), "Hessian")?;
    if !sol.log_det_hessian.is_finite() {
        return Err(Error::NonPositiveDeterminant(sol.log_det_hessian.exp()));
    }
    let k = cfg.k as f64;
    let log_norm = 0.5 * (k * beta.ln() + sol.log_det_hessian - k * (2.0 * std::f64::consts::PI).ln());
    Ok(-beta * cfg.lambda * gap + log_norm)
}
