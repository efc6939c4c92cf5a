use crate::error::{ensure_len, invalid, Result};
use crate::model::trajectory::{dot, FeatureVector, WeightVector};

/// `θᵀΦ`.
pub fn linear_cost(theta: &WeightVector, phi: &FeatureVector) -> Result<f64> {
    ensure_len(theta.len(), phi.len(), "feature vector")?;
    Ok(dot(theta, phi))
}

/// Cost of a corrected trajectory: `θᵀΦ_D + λ‖u_H‖²`.
pub fn phri_cost(theta: &WeightVector, phi_deformed: &FeatureVector, u_h: &[f64], effort_weight: f64) -> Result<f64> {
    if !(effort_weight >= 0.0) {
        return Err(invalid("lambda", format!("must be non-negative, got {effort_weight}")));
    }
    Ok(linear_cost(theta, phi_deformed)? + effort_weight * dot(u_h, u_h))
}
