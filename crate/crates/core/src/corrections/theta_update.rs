//! MAP weight update after a correction.
//!
//! The adaptive rule solves `θ' = θ̂ − α w(θ') ΔΦ` with
//! `w = Γ₁ / (Γ₁ + Γ₀)`, `Γ₁ = P(E=1|β̂) e^{−θ'ᵀΔΦ}` and
//! `Γ₀ = P(E=0|β̂) (ν/π)^{k/2} e^{−ν‖ΔΦ‖²}`. Every solution has the form
//! `θ' = θ̂ − sΔΦ`, so the search is over the scalar `s ∈ [0, α]`, where
//! `h(s) = s − α w(θ̂ − sΔΦ)` changes sign.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Error, Result};
use crate::model::{dot, FeatureVector, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThetaUpdateConfig {
    /// Step size (prior variance) `α`.
    pub alpha: f64,
    /// Precision `ν` of the unexplained-correction noise model.
    pub nu: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for ThetaUpdateConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            nu: 1.0,
            tolerance: 1e-8,
            max_iters: 100,
        }
    }
}

impl ThetaUpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(invalid("alpha", format!("must be nonnegative, got {}", self.alpha)));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(invalid("nu", format!("must be positive, got {}", self.nu)));
        }
        if !(self.tolerance > 0.0) || self.max_iters == 0 {
            return Err(invalid("tolerance", "tolerance and max_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaUpdate {
    /// Updated weights clamped to the nonnegative orthant.
    pub theta: WeightVector,
    /// Fixed point before clamping.
    pub unclamped: WeightVector,
    /// `w(θ')` at the solution.
    pub weight: f64,
    pub iterations: usize,
    /// `‖θ' − θ̂ + α w(θ') ΔΦ‖`.
    pub residual: f64,
}

/// `θ̂ − αΔΦ`, clamped at zero.
pub fn fixed_theta_update(theta: &WeightVector, delta: &FeatureVector, alpha: f64) -> Result<WeightVector> {
    ensure_len(theta.len(), delta.len(), "feature difference")?;
    Ok(clamp(&step(theta, delta, alpha)))
}

/// Adaptive update for a correction explained with probability `p_explained`.
pub fn adaptive_theta_update(
    theta: &WeightVector,
    delta: &FeatureVector,
    p_explained: f64,
    cfg: &ThetaUpdateConfig,
    k: usize,
) -> Result<ThetaUpdate> {
    ensure_len(theta.len(), delta.len(), "feature difference")?;
    cfg.validate()?;
    if !(0.0..=1.0).contains(&p_explained) {
        return Err(invalid("p_explained", format!("must lie in [0, 1], got {p_explained}")));
    }
    let alpha = cfg.alpha;
    let d2 = dot(delta, delta);

    // Exact endpoints: w ≡ 1 reduces to the fixed rule, w ≡ 0 to no change.
    if p_explained == 1.0 || p_explained == 0.0 {
        let (s, w) = if p_explained == 1.0 { (alpha, 1.0) } else { (0.0, 0.0) };
        let unclamped = step(theta, delta, s);
        return Ok(ThetaUpdate {
            theta: clamp(&unclamped),
            unclamped,
            weight: w,
            iterations: 0,
            residual: 0.0,
        });
    }

    // w(s) = σ(c + s‖ΔΦ‖²).
    let c = p_explained.ln()
        - (1.0 - p_explained).ln()
        - dot(theta, delta)
        - 0.5 * k as f64 * (cfg.nu / std::f64::consts::PI).ln()
        + cfg.nu * d2;
    let w = |s: f64| sigmoid(c + s * d2);
    let h = |s: f64| s - alpha * w(s);
    let scale = d2.sqrt().max(1.0);

    let (mut lo, mut hi) = (0.0, alpha);
    let mut s = 0.0;
    let mut iterations = 0;
    let mut hs = h(s);
    while (hs * scale).abs() > cfg.tolerance * 1e-3 && iterations < cfg.max_iters && hi > lo {
        iterations += 1;
        if hs < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let ws = w(s);
        let slope = 1.0 - alpha * d2 * ws * (1.0 - ws);
        let newton = s - hs / slope;
        // Newton when it stays inside the bracket, bisection otherwise.
        s = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        hs = h(s);
    }
    let residual = hs.abs() * d2.sqrt();
    if residual > cfg.tolerance {
        return Err(Error::NoConvergence { iterations, residual });
    }
    let unclamped = step(theta, delta, s);
    Ok(ThetaUpdate {
        theta: clamp(&unclamped),
        unclamped,
        weight: w(s),
        iterations,
        residual,
    })
}

fn step(theta: &WeightVector, delta: &FeatureVector, s: f64) -> WeightVector {
    WeightVector(theta.iter().zip(delta.iter()).map(|(t, d)| t - s * d).collect())
}

fn clamp(theta: &WeightVector) -> WeightVector {
    WeightVector(theta.iter().map(|t| t.max(0.0)).collect())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_cases() {
        let t = WeightVector(vec![0.5]);
        assert_eq!(
            fixed_theta_update(&t, &FeatureVector(vec![1.0]), 0.2).unwrap().0[0],
            0.3
        );
        assert_eq!(fixed_theta_update(&t, &FeatureVector(vec![0.0]), 0.2).unwrap(), t);
        assert_eq!(fixed_theta_update(&t, &FeatureVector(vec![3.0]), 0.0).unwrap(), t);
        assert_eq!(
            fixed_theta_update(&t, &FeatureVector(vec![9.0]), 1.0).unwrap().0[0],
            0.0
        );
    }

    #[test]
    fn endpoint_probabilities() {
        let t = WeightVector(vec![0.4, 0.1]);
        let d = FeatureVector(vec![-0.3, 0.7]);
        let cfg = ThetaUpdateConfig::default();
        let one = adaptive_theta_update(&t, &d, 1.0, &cfg, 1).unwrap();
        let expected: Vec<f64> = t.iter().zip(d.iter()).map(|(a, b)| a - cfg.alpha * b).collect();
        assert_eq!(one.unclamped.0, expected);
        assert_eq!(one.theta, fixed_theta_update(&t, &d, cfg.alpha).unwrap());
        let zero = adaptive_theta_update(&t, &d, 0.0, &cfg, 1).unwrap();
        assert_eq!(zero.theta, t);
    }

    #[test]
    fn zero_difference_is_identity() {
        let t = WeightVector(vec![0.4, 0.1]);
        let u = adaptive_theta_update(
            &t,
            &FeatureVector(vec![0.0, 0.0]),
            0.37,
            &ThetaUpdateConfig::default(),
            2,
        )
        .unwrap();
        assert_eq!(u.theta, t);
    }

    #[test]
    fn fixed_point_residual_and_geometry() {
        let cfg = ThetaUpdateConfig {
            alpha: 2.0,
            nu: 3.0,
            ..Default::default()
        };
        for (p, d) in [(0.3, vec![0.8, -0.2]), (0.9, vec![-2.0, 1.5]), (0.01, vec![0.05, 0.0])] {
            let t = WeightVector(vec![1.0, 0.5]);
            let d = FeatureVector(d);
            let u = adaptive_theta_update(&t, &d, p, &cfg, 2).unwrap();
            assert!(u.residual <= 1e-8);
            assert!((0.0..=1.0).contains(&u.weight));
            let moved: Vec<f64> = u.unclamped.iter().zip(t.iter()).map(|(a, b)| a - b).collect();
            let norm = dot(&moved, &moved).sqrt();
            assert!(norm <= cfg.alpha * dot(&d, &d).sqrt() + 1e-12);
            // Collinear with ΔΦ.
            let cross = moved[0] * d[1] - moved[1] * d[0];
            assert!(cross.abs() < 1e-12);
        }
    }
}
