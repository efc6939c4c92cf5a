use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corrections::chi_squared::{fit_chi_squared, ChiSquaredFit};
use crate::error::{invalid, Error, Result};
use crate::model::Feature;

/// `P(β̂ | E)` for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExplanation {
    pub feature: Feature,
    /// Fit to `β̂` of poorly-explained corrections (`E = 0`).
    pub unexplained: ChiSquaredFit,
    /// Fit to `β̂` of well-explained corrections (`E = 1`).
    pub explained: ChiSquaredFit,
}

impl FeatureExplanation {
    pub fn fit(feature: Feature, unexplained: &[f64], explained: &[f64]) -> Result<Self> {
        Ok(Self {
            feature,
            unexplained: fit_chi_squared(unexplained)?,
            explained: fit_chi_squared(explained)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationModel {
    /// `P(E = 1)`.
    pub prior: f64,
    pub features: Vec<FeatureExplanation>,
    /// Calibrated precision of the unexplained-correction model, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl ExplanationModel {
    pub fn new(prior: f64, features: Vec<FeatureExplanation>) -> Result<Self> {
        let m = Self {
            prior,
            features,
            nu: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prior) {
            return Err(invalid("prior", format!("must lie in [0, 1], got {}", self.prior)));
        }
        for (i, f) in self.features.iter().enumerate() {
            if self.features[..i].iter().any(|g| g.feature == f.feature) {
                return Err(invalid("features", format!("`{}` appears twice", f.feature)));
            }
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0) || !nu.is_finite() {
                return Err(invalid("nu", format!("must be positive, got {nu}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, feature: Feature) -> Option<&FeatureExplanation> {
        self.features.iter().find(|f| f.feature == feature)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        std::fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let m: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        m.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(m)
    }
}

/// `P(E = 1 | β̂)` for `feature`. Falls back to the prior when both
/// densities vanish at `β̂`.
pub fn explanation_posterior(beta_hat: f64, model: &ExplanationModel, feature: Feature) -> Result<f64> {
    let fe = model
        .get(feature)
        .ok_or_else(|| invalid("feature", format!("no explanation fits for `{feature}`")))?;
    let l1 = model.prior.ln() + fe.explained.ln_pdf(beta_hat);
    let l0 = (1.0 - model.prior).ln() + fe.unexplained.ln_pdf(beta_hat);
    if l1 == f64::NEG_INFINITY && l0 == f64::NEG_INFINITY {
        return Ok(model.prior);
    }
    // σ(l1 − l0), written to stay finite when either side is −∞.
    Ok(if l1 >= l0 {
        1.0 / (1.0 + (l0 - l1).exp())
    } else {
        let e = (l1 - l0).exp();
        e / (1.0 + e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(prior: f64, e0: (f64, f64), e1: (f64, f64)) -> ExplanationModel {
        ExplanationModel::new(
            prior,
            vec![FeatureExplanation {
                feature: Feature::Table,
                unexplained: ChiSquaredFit::new(e0.0, e0.1).unwrap(),
                explained: ChiSquaredFit::new(e1.0, e1.1).unwrap(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn identical_fits_give_one_half() {
        let m = model(0.5, (3.0, 1.0), (3.0, 1.0));
        assert!((explanation_posterior(2.2, &m, Feature::Table).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn certain_prior_wins() {
        let m = model(1.0, (3.0, 1.0), (8.0, 10.0));
        for b in [0.01, 1.0, 50.0] {
            assert_eq!(explanation_posterior(b, &m, Feature::Table).unwrap(), 1.0);
        }
        let m = model(0.0, (3.0, 1.0), (8.0, 10.0));
        assert_eq!(explanation_posterior(50.0, &m, Feature::Table).unwrap(), 0.0);
    }

    #[test]
    fn tail_evidence_is_decisive() {
        let m = model(0.5, (4.0, 0.1), (6.0, 5.0));
        assert!(explanation_posterior(60.0, &m, Feature::Table).unwrap() > 0.9);
        assert!(explanation_posterior(0.2, &m, Feature::Table).unwrap() < 0.1);
    }

    #[test]
    fn zero_densities_fall_back_to_prior() {
        let m = model(0.3, (3.0, 1.0), (3.0, 1.0));
        assert_eq!(explanation_posterior(0.0, &m, Feature::Table).unwrap(), 0.3);
        assert!(explanation_posterior(1.0, &m, Feature::Laptop).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = model(0.5, (4.0, 0.1), (6.0, 5.0));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        m.save(&p).unwrap();
        assert_eq!(ExplanationModel::load(&p).unwrap(), m);
    }
}
