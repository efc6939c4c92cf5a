use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Settings shared by the trajectory optimizer and the correction solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub gradient_tolerance: f64,
    /// Step shrink factor during backtracking.
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
    /// Penalty schedule for the constrained correction solver.
    pub kappa_0: f64,
    pub kappa_growth: f64,
    pub kappa_max: f64,
    /// Largest constraint violation accepted as feasible.
    pub feasibility_tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            gradient_tolerance: 1e-6,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            kappa_0: 10.0,
            kappa_growth: 10.0,
            kappa_max: 1e6,
            feasibility_tolerance: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be positive"));
        }
        let positive = [
            ("gradient_tolerance", self.gradient_tolerance),
            ("shrink", self.shrink),
            ("sufficient_decrease", self.sufficient_decrease),
            ("kappa_0", self.kappa_0),
            ("kappa_max", self.kappa_max),
            ("feasibility_tolerance", self.feasibility_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.shrink >= 1.0 {
            return Err(invalid("shrink", "must be below 1"));
        }
        if self.sufficient_decrease >= 1.0 {
            return Err(invalid("sufficient_decrease", "must be below 1"));
        }
        if !(self.kappa_growth > 1.0) {
            return Err(invalid("kappa_growth", "must exceed 1"));
        }
        if self.kappa_max < self.kappa_0 {
            return Err(invalid("kappa_max", "must be at least kappa_0"));
        }
        Ok(())
    }

    /// Penalty values visited by the correction solver: `κ_0, κ_0·g, …, κ_max`.
    pub fn kappa_schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = self.kappa_0;
        while k < self.kappa_max * (1.0 - 1e-12) {
            out.push(k);
            k *= self.kappa_growth;
        }
        out.push(self.kappa_max);
        out
    }
}
