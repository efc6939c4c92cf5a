//! Scaled chi-squared densities fitted to `β̂` samples.
//!
//! `X = s·Y` with `Y ∼ χ²(ν)` is a gamma variable with shape `ν/2` and
//! scale `2s`. For a fixed shape the scale MLE is closed form, so the fit is a
//! 1-D search over the profile likelihood in `ln ν`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};

pub const MIN_FIT_SAMPLES: usize = 10;

/// Search interval for the degrees of freedom.
const DF_RANGE: (f64, f64) = (1e-3, 1e5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredFit {
    pub df: f64,
    pub scale: f64,
    pub samples: usize,
}

impl ChiSquaredFit {
    pub fn new(df: f64, scale: f64) -> Result<Self> {
        if !(df > 0.0) || !df.is_finite() {
            return Err(invalid("df", format!("must be positive, got {df}")));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(invalid("scale", format!("must be positive, got {scale}")));
        }
        Ok(Self { df, scale, samples: 0 })
    }

    /// Log-density; `−∞` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        let shape = self.df / 2.0;
        let theta = 2.0 * self.scale;
        (shape - 1.0) * x.ln() - x / theta - shape * theta.ln() - ln_gamma(shape)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn mean(&self) -> f64 {
        self.df * self.scale
    }

    /// Mode of the density (0 when `df ≤ 2`).
    pub fn mode(&self) -> f64 {
        ((self.df - 2.0) * self.scale).max(0.0)
    }
}

/// Maximum-likelihood fit with location fixed at zero.
pub fn fit_chi_squared(samples: &[f64]) -> Result<ChiSquaredFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(invalid(
            "samples",
            format!("need at least {MIN_FIT_SAMPLES}, got {}", samples.len()),
        ));
    }
    if samples.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(invalid("samples", "must be finite and positive"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mean_ln = samples.iter().map(|x| x.ln()).sum::<f64>() / n;
    // Jensen gap; zero exactly when every sample is equal.
    let gap = mean.ln() - mean_ln;
    if !(gap > 1e-12) {
        return Err(Error::Degenerate("all samples are (nearly) equal".into()));
    }
    // Per-sample profile log-likelihood in the gamma shape a:
    // a ln a − a − a ln(mean) + (a − 1) mean_ln − ln Γ(a).
    let profile = |ln_df: f64| {
        let a = ln_df.exp() / 2.0;
        a * a.ln() - a - a * mean.ln() + (a - 1.0) * mean_ln - ln_gamma(a)
    };
    let ln_df = golden_section_max(profile, DF_RANGE.0.ln(), DF_RANGE.1.ln(), 1e-10);
    let df = ln_df.exp();
    Ok(ChiSquaredFit {
        df,
        scale: mean / df,
        samples: samples.len(),
    })
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{ChiSquared, Distribution};

    use super::*;

    fn draws(df: f64, scale: f64, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = ChiSquared::new(df).unwrap();
        (0..count).map(|_| scale * d.sample(&mut rng)).collect()
    }

    #[test]
    fn recovers_df_three() {
        let fit = fit_chi_squared(&draws(3.0, 1.0, 10_000, 11)).unwrap();
        assert!((2.7..=3.3).contains(&fit.df), "{fit:?}");
        assert!((fit.scale - 1.0).abs() < 0.1);
        assert_eq!(fit.samples, 10_000);
    }

    #[test]
    fn scaling_samples_scales_the_fit() {
        let x = draws(5.0, 0.7, 2_000, 5);
        let a = fit_chi_squared(&x).unwrap();
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let b = fit_chi_squared(&doubled).unwrap();
        assert!((b.df - a.df).abs() < 1e-6 * a.df);
        assert!((b.scale - 2.0 * a.scale).abs() < 1e-6 * a.scale);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_chi_squared(&[2.0; 20]).is_err());
        assert!(fit_chi_squared(&[1.0, 2.0, 3.0]).is_err());
        let mut x = draws(3.0, 1.0, 20, 1);
        x[3] = -1.0;
        assert!(fit_chi_squared(&x).is_err());
    }

    #[test]
    fn density_matches_closed_form_and_integrates() {
        // χ²(2) has density e^{−x/2}/2.
        let fit = ChiSquaredFit::new(2.0, 1.0).unwrap();
        for x in [0.1, 1.0, 4.0] {
            assert!((fit.pdf(x) - 0.5 * (-x / 2.0f64).exp()).abs() < 1e-12);
        }
        let fit = ChiSquaredFit::new(4.5, 0.3).unwrap();
        let h = 1e-3;
        let total: f64 = (1..60_000).map(|i| fit.pdf(i as f64 * h) * h).sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
        assert_eq!(fit.pdf(-1.0), 0.0);
    }
}
