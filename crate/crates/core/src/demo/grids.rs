use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::WeightVector;

/// Component levels combined per feature before normalizing.
const THETA_LEVELS: [f64; 3] = [0.0, 0.5, 1.0];

/// Default confidence grid: log-spaced from 0.01 to 100.
pub const DEFAULT_BETAS: [f64; 9] = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0];

/// Two hypotheses closer than this (Euclidean) are considered the same.
const DEDUP_TOLERANCE: f64 = 1e-9;

/// Discrete set of unit-norm, nonnegative weight hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<WeightVector>", into = "Vec<WeightVector>")]
pub struct ThetaGrid(Vec<WeightVector>);

impl ThetaGrid {
    pub fn new(thetas: Vec<WeightVector>) -> Result<Self> {
        let d = thetas.first().ok_or(Error::Empty("theta grid"))?.len();
        for (i, t) in thetas.iter().enumerate() {
            if t.len() != d {
                return Err(invalid("theta grid", "hypotheses differ in dimension"));
            }
            if !t.is_nonnegative() {
                return Err(invalid(
                    "theta grid",
                    format!("hypothesis {i} has a negative component"),
                ));
            }
            if (t.norm() - 1.0).abs() > 1e-9 {
                return Err(invalid("theta grid", format!("hypothesis {i} is not unit norm")));
            }
            if thetas[..i].iter().any(|o| distance(o, t) < DEDUP_TOLERANCE) {
                return Err(invalid("theta grid", format!("hypothesis {i} is a duplicate")));
            }
        }
        Ok(Self(thetas))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.0[0].len()
    }

    pub fn get(&self, i: usize) -> &WeightVector {
        &self.0[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &WeightVector> {
        self.0.iter()
    }

    /// Index of the hypothesis nearest to `theta` after normalizing it.
    pub fn nearest(&self, theta: &WeightVector) -> usize {
        let t = theta.normalized();
        (0..self.len())
            .min_by(|a, b| distance(&self.0[*a], &t).total_cmp(&distance(&self.0[*b], &t)))
            .unwrap_or(0)
    }
}

impl TryFrom<Vec<WeightVector>> for ThetaGrid {
    type Error = Error;
    fn try_from(v: Vec<WeightVector>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ThetaGrid> for Vec<WeightVector> {
    fn from(g: ThetaGrid) -> Self {
        g.0
    }
}

/// Strictly increasing positive confidence values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BetaGrid(Vec<f64>);

impl BetaGrid {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Empty("beta grid"));
        }
        if betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(invalid("beta grid", "values must be positive and finite"));
        }
        if betas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("beta grid", "values must be strictly increasing"));
        }
        Ok(Self(betas))
    }

    /// Test-only constructor that also admits `β = 0`.
    #[cfg(test)]
    pub(crate) fn with_zero(mut betas: Vec<f64>) -> Self {
        betas.insert(0, 0.0);
        Self(betas)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn max(&self) -> f64 {
        *self.0.last().expect("beta grid is non-empty")
    }

    pub fn min(&self) -> f64 {
        self.0[0]
    }
}

impl TryFrom<Vec<f64>> for BetaGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BetaGrid> for Vec<f64> {
    fn from(g: BetaGrid) -> Self {
        g.0
    }
}

/// Every nonzero combination of `{0, 0.5, 1}` per component, normalized to
/// unit length and deduplicated (first occurrence kept, lexicographic order),
/// together with [`DEFAULT_BETAS`].
pub fn build_default_grids(d: usize) -> Result<(ThetaGrid, BetaGrid)> {
    if d < 1 {
        return Err(invalid("d", "feature dimension must be at least 1"));
    }
    let combos = THETA_LEVELS.len().pow(d as u32);
    let mut thetas: Vec<WeightVector> = Vec::new();
    for code in 0..combos {
        let mut rest = code;
        let mut v = vec![0.0; d];
        // Most significant digit first, so the order is lexicographic.
        for slot in v.iter_mut().rev() {
            *slot = THETA_LEVELS[rest % THETA_LEVELS.len()];
            rest /= THETA_LEVELS.len();
        }
        let w = WeightVector(v);
        if w.norm() == 0.0 {
            continue;
        }
        let unit = w.normalized();
        if !thetas.iter().any(|t| distance(t, &unit) < DEDUP_TOLERANCE) {
            thetas.push(unit);
        }
    }
    Ok((ThetaGrid::new(thetas)?, BetaGrid::new(DEFAULT_BETAS.to_vec())?))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
