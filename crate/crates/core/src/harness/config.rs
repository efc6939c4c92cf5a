use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corrections::{BetaEstimatorConfig, ThetaUpdateConfig};
use crate::error::{Error, Result};
use crate::model::{EnvironmentDocument, Feature};
use crate::optimizer::OptimizerConfig;
use crate::sim::CorrectionStyle;

/// Top-level experiment description, loaded from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Environment document, relative to the config file.
    pub environment: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_set_size")]
    pub set_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub demos: DemoStudyConfig,
    #[serde(default)]
    pub corrections: CorrectionStudyConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_set_size() -> usize {
    300
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate().map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn environment_path(&self) -> PathBuf {
        self.base_dir.join(&self.environment)
    }

    pub fn load_environment(&self) -> Result<EnvironmentDocument> {
        EnvironmentDocument::load(&self.environment_path())
    }

    /// Environment of the correction study: its own document when it names
    /// one, the shared one otherwise.
    pub fn load_correction_environment(&self) -> Result<EnvironmentDocument> {
        match &self.corrections.environment {
            Some(p) => EnvironmentDocument::load(&self.base_dir.join(p)),
            None => self.load_environment(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.set_size == 0 {
            return Err(crate::error::invalid("set_size", "must be at least 1"));
        }
        self.corrections.beta.validate()?;
        self.corrections.update.validate()?;
        Ok(())
    }
}

/// A true cost as written in a config: weights over named features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueCostSpec {
    pub features: Vec<Feature>,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub beta_sim: Option<f64>,
}

/// A batch of simulated demonstrators sharing one rationality level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoGroup {
    pub count: usize,
    /// `None`: each demonstrator optimizes its own (jittered) true cost.
    #[serde(default)]
    pub beta_sim: Option<f64>,
    /// Log-normal spread applied to each demonstrator's true weights.
    #[serde(default)]
    pub jitter: f64,
    /// Replaces the scenario truth for this group.
    #[serde(default)]
    pub truth: Option<TrueCostSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoScenario {
    pub name: String,
    pub truth: TrueCostSpec,
    pub groups: Vec<DemoGroup>,
    /// Features the robot reasons about; the study default when absent.
    #[serde(default)]
    pub modeled: Option<Vec<Feature>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceDemoConfig {
    pub perfect: TrueCostSpec,
    pub noisy: TrueCostSpec,
    pub misspecified: TrueCostSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoStudyConfig {
    #[serde(default = "default_demo_features")]
    pub modeled: Vec<Feature>,
    /// Misspecification threshold on β; calibrated from the reference
    /// demonstrations when absent.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub reference: Option<ReferenceDemoConfig>,
    #[serde(default)]
    pub noise: DemoNoise,
    #[serde(default)]
    pub scenarios: Vec<DemoScenario>,
}

/// Candidate pool of a noisy demonstrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoNoise {
    pub candidates: usize,
    /// Standard deviation of the leading perturbation mode.
    pub amplitude: f64,
}

impl Default for DemoNoise {
    fn default() -> Self {
        Self {
            candidates: 300,
            amplitude: 0.04,
        }
    }
}

fn default_demo_features() -> Vec<Feature> {
    vec![Feature::Efficiency, Feature::Table, Feature::Laptop]
}

impl Default for DemoStudyConfig {
    fn default() -> Self {
        Self {
            modeled: default_demo_features(),
            epsilon: None,
            reference: None,
            noise: DemoNoise::default(),
            scenarios: Vec::new(),
        }
    }
}

/// Simulated human behaviour during corrections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectorSpec {
    pub magnitude: f64,
    pub beta_sim: Option<f64>,
    pub leak_angle_deg: f64,
}

impl Default for CorrectorSpec {
    fn default() -> Self {
        Self {
            magnitude: 2.0,
            beta_sim: Some(10.0),
            leak_angle_deg: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Events per style (efficient and inefficient).
    #[serde(default = "default_events")]
    pub events_per_style: usize,
    /// Planner weights over the modeled features for the trajectories
    /// being corrected; one is picked per event.
    pub base_thetas: Vec<Vec<f64>>,
    /// Hidden true cost behind inefficient corrections.
    pub hidden: TrueCostSpec,
    /// Log-spaced candidate precisions for `ν`.
    #[serde(default = "default_nu_grid")]
    pub nu_grid: Vec<f64>,
    #[serde(default = "default_prior")]
    pub prior: f64,
}

fn default_events() -> usize {
    50
}

fn default_nu_grid() -> Vec<f64> {
    (-2..=8).map(|e| 10f64.powf(e as f64 / 2.0)).collect()
}

fn default_prior() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionTask {
    pub name: String,
    /// Whether the corrections are expressible with the modeled features.
    pub explained: bool,
    pub truth: TrueCostSpec,
    /// Initial weights over the modeled features.
    pub initial_theta: Vec<f64>,
    pub style: CorrectionStyle,
    /// Waypoints at which the human intervenes, in order.
    pub timesteps: Vec<usize>,
    #[serde(default)]
    pub leak_feature: Option<Feature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionStudyConfig {
    /// Overrides the shared environment, relative to the config file.
    #[serde(default)]
    pub environment: Option<PathBuf>,
    #[serde(default = "default_demo_features")]
    pub modeled: Vec<Feature>,
    #[serde(default = "default_learned")]
    pub learned: Vec<Feature>,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub beta: BetaEstimatorConfig,
    #[serde(default)]
    pub update: ThetaUpdateConfig,
    #[serde(default)]
    pub corrector: CorrectorSpec,
    #[serde(default)]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default)]
    pub tasks: Vec<CorrectionTask>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
}

fn default_learned() -> Vec<Feature> {
    vec![Feature::Table, Feature::Laptop]
}

fn default_mu() -> f64 {
    0.1
}

fn default_seeds() -> usize {
    20
}

impl Default for CorrectionStudyConfig {
    fn default() -> Self {
        Self {
            environment: None,
            modeled: default_demo_features(),
            learned: default_learned(),
            mu: default_mu(),
            beta: BetaEstimatorConfig::default(),
            update: ThetaUpdateConfig::default(),
            corrector: CorrectorSpec::default(),
            calibration: None,
            tasks: Vec::new(),
            seeds: default_seeds(),
        }
    }
}
