use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Error, Result};

/// Margin added around start/goal when no explicit workspace box is given.
const DEFAULT_WORKSPACE_MARGIN: f64 = 0.5;

/// Planar (or spatial) kinematic environment.
///
/// The last state coordinate is height above the table: the table is the
/// hyperplane `x[n-1] == table_offset` and the workspace box never extends
/// below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub dt: f64,
    pub table_offset: f64,
    pub laptop_center: Vec<f64>,
    pub laptop_radius: f64,
    pub human_center: Vec<f64>,
    pub human_radius: f64,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace_min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace_max: Option<Vec<f64>>,
}

impl EnvironmentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("n", "state dimension must be at least 1"));
        }
        if self.horizon < 2 {
            return Err(invalid("T", format!("horizon must be >= 2, got {}", self.horizon)));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.laptop_radius > 0.0) {
            return Err(invalid(
                "laptop_radius",
                format!("must be positive, got {}", self.laptop_radius),
            ));
        }
        if !(self.human_radius >= 0.0) {
            return Err(invalid(
                "human_radius",
                format!("must be non-negative, got {}", self.human_radius),
            ));
        }
        ensure_len(self.n, self.laptop_center.len(), "laptop_center")?;
        ensure_len(self.n, self.human_center.len(), "human_center")?;
        ensure_len(self.n, self.start.len(), "start")?;
        ensure_len(self.n, self.goal.len(), "goal")?;
        if let Some(lo) = &self.workspace_min {
            ensure_len(self.n, lo.len(), "workspace_min")?;
        }
        if let Some(hi) = &self.workspace_max {
            ensure_len(self.n, hi.len(), "workspace_max")?;
        }
        let (lo, hi) = self.bounds();
        for i in 0..self.n {
            if lo[i] > hi[i] {
                return Err(invalid("workspace", format!("empty box along axis {i}")));
            }
            for (name, p) in [("start", &self.start), ("goal", &self.goal)] {
                if p[i] < lo[i] - 1e-12 || p[i] > hi[i] + 1e-12 {
                    return Err(invalid(name, "lies outside the workspace box"));
                }
            }
        }
        Ok(())
    }

    /// Number of waypoints, `T + 1`.
    pub fn waypoints(&self) -> usize {
        self.horizon + 1
    }

    /// Index of the height coordinate.
    pub fn height_axis(&self) -> usize {
        self.n - 1
    }

    /// Lower and upper corners of the workspace box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo: Vec<f64> = match &self.workspace_min {
            Some(lo) => lo.clone(),
            None => (0..self.n)
                .map(|i| self.start[i].min(self.goal[i]) - DEFAULT_WORKSPACE_MARGIN)
                .collect(),
        };
        let hi: Vec<f64> = match &self.workspace_max {
            Some(hi) => hi.clone(),
            None => (0..self.n)
                .map(|i| self.start[i].max(self.goal[i]) + DEFAULT_WORKSPACE_MARGIN)
                .collect(),
        };
        let h = self.height_axis();
        lo[h] = lo[h].max(self.table_offset);
        (lo, hi)
    }
}

/// Basis features a cost can be built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Efficiency,
    Table,
    Laptop,
    Human,
}

impl Feature {
    pub const ALL: [Feature; 4] = [Feature::Efficiency, Feature::Table, Feature::Laptop, Feature::Human];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Efficiency => "efficiency",
            Feature::Table => "table",
            Feature::Laptop => "laptop",
            Feature::Human => "human",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which features are active, and the divisor each raw value is scaled by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub features: Vec<Feature>,
    pub normalizers: Vec<f64>,
}

impl FeatureConfig {
    /// Unit divisors for every feature.
    pub fn unnormalized(features: Vec<Feature>) -> Self {
        let normalizers = vec![1.0; features.len()];
        Self { features, normalizers }
    }

    pub fn new(features: Vec<Feature>, normalizers: Vec<f64>) -> Result<Self> {
        let cfg = Self { features, normalizers };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Empty("feature list"));
        }
        ensure_len(self.features.len(), self.normalizers.len(), "normalizers")?;
        if let Some(d) = self.normalizers.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(invalid("normalizers", format!("divisor {d} is not positive")));
        }
        for (i, f) in self.features.iter().enumerate() {
            if self.features[..i].contains(f) {
                return Err(invalid("features", format!("`{f}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn index_of(&self, feature: Feature) -> Option<usize> {
        self.features.iter().position(|f| *f == feature)
    }

    /// Sub-configuration keeping only `keep`, in this config's order.
    pub fn restricted_to(&self, keep: &[Feature]) -> Result<Self> {
        let mut features = Vec::new();
        let mut normalizers = Vec::new();
        for (f, d) in self.features.iter().zip(&self.normalizers) {
            if keep.contains(f) {
                features.push(*f);
                normalizers.push(*d);
            }
        }
        Self::new(features, normalizers)
    }
}

/// On-disk environment document: the environment plus its feature setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentDocument {
    #[serde(flatten)]
    pub env: EnvironmentSpec,
    pub features: Vec<Feature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizers: Option<Vec<f64>>,
}

impl EnvironmentDocument {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let doc: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        doc.env.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        doc.feature_config().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(doc)
    }

    /// Feature configuration; unit divisors when none are given.
    pub fn feature_config(&self) -> Result<FeatureConfig> {
        match &self.normalizers {
            Some(d) => FeatureConfig::new(self.features.clone(), d.clone()),
            None => {
                let cfg = FeatureConfig::unnormalized(self.features.clone());
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }
}
