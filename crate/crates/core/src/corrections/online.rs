//! Online learning from corrections: deform, estimate `β̂` per feature,
//! update the weights, replan.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corrections::{
    adaptive_theta_update, estimate_beta_hat, explanation_posterior, BetaEstimatorConfig, CorrectionEvent,
    DeformationOperator, ExplanationModel, ThetaUpdateConfig,
};
use crate::error::{invalid, Error, Result};
use crate::model::{
    smoothed_features, EnvironmentSpec, Feature, FeatureConfig, FeatureVector, Trajectory, WeightVector,
};
use crate::optimizer::{minimal_effort_correction, optimize_trajectory, CorrectionProblem, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearningMode {
    /// Every correction is treated as fully explained.
    Fixed,
    /// Corrections are weighted by `P(E = 1 | β̂)`.
    Adaptive,
}

impl LearningMode {
    pub fn name(self) -> &'static str {
        match self {
            LearningMode::Fixed => "fixed",
            LearningMode::Adaptive => "adaptive",
        }
    }
}

impl std::str::FromStr for LearningMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(LearningMode::Fixed),
            "adaptive" => Ok(LearningMode::Adaptive),
            other => Err(invalid(
                "mode",
                format!("expected `fixed` or `adaptive`, got `{other}`"),
            )),
        }
    }
}

/// What one correction says about one learned feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureEvidence {
    pub feature: Feature,
    pub beta_hat: f64,
    pub delta_phi: f64,
}

/// One feature's outcome for one correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub step: usize,
    pub feature: Feature,
    pub beta_hat: f64,
    pub p_explained: f64,
    pub delta_phi: f64,
    /// Weights after the update.
    pub theta: WeightVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineLearnerState {
    pub theta: WeightVector,
    pub trajectory: Trajectory,
    pub timestep: usize,
    /// Weights after every correction, starting with the initial estimate.
    pub theta_path: Vec<WeightVector>,
    pub history: Vec<InteractionRecord>,
}

impl OnlineLearnerState {
    /// `Σ ‖θ̂_{i+1} − θ̂_i‖`.
    pub fn path_length(&self) -> f64 {
        self.theta_path
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(w[1].iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }

    /// Writes `step, feature, beta_hat, p_explained, delta_phi, theta_…` rows.
    pub fn write_history_csv<W: Write>(&self, out: W, feature_names: &[&str]) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["step", "feature", "beta_hat", "p_explained", "delta_phi"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(feature_names.iter().map(|n| format!("theta_{n}")));
        w.write_record(&header)?;
        for r in &self.history {
            let mut row = vec![
                r.step.to_string(),
                r.feature.name().to_string(),
                format!("{:.9e}", r.beta_hat),
                format!("{:.9e}", r.p_explained),
                format!("{:.9e}", r.delta_phi),
            ];
            row.extend(r.theta.iter().map(|v| format!("{v:.9e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_history_csv(&self, path: &Path, feature_names: &[&str]) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_history_csv(file, feature_names)
            .map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Immutable pieces of the online loop.
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    pub env: EnvironmentSpec,
    /// Modeled features the planner uses.
    pub features: FeatureConfig,
    /// Features whose weights are learned (a subset of `features`).
    pub learned: Vec<Feature>,
    pub operator: DeformationOperator,
    pub optimizer: OptimizerConfig,
    pub beta: BetaEstimatorConfig,
    pub update: ThetaUpdateConfig,
    pub model: Option<ExplanationModel>,
    pub mode: LearningMode,
}

impl OnlineLearner {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.features.validate()?;
        self.optimizer.validate()?;
        self.beta.validate()?;
        self.update.validate()?;
        for f in &self.learned {
            if self.features.index_of(*f).is_none() {
                return Err(invalid("learned", format!("`{f}` is not a modeled feature")));
            }
            if self.mode == LearningMode::Adaptive {
                let model = self
                    .model
                    .as_ref()
                    .ok_or_else(|| invalid("model", "adaptive mode needs an explanation model"))?;
                if model.get(*f).is_none() {
                    return Err(invalid("model", format!("no explanation fits for `{f}`")));
                }
            }
        }
        if self.beta.k != self.env.n {
            return Err(invalid("k", "action dimension must equal the state dimension"));
        }
        Ok(())
    }

    /// State with `theta` and its planned trajectory.
    pub fn initial_state(&self, theta: WeightVector) -> Result<OnlineLearnerState> {
        self.validate()?;
        let trajectory = optimize_trajectory(&theta, &self.env, &self.features, &self.optimizer)?.trajectory;
        Ok(OnlineLearnerState {
            theta_path: vec![theta.clone()],
            theta,
            trajectory,
            timestep: 0,
            history: Vec::new(),
        })
    }

    /// `β̂` and `ΔΦ` of every learned feature for a correction of `trajectory`.
    pub fn analyze(&self, trajectory: &Trajectory, event: &CorrectionEvent) -> Result<Vec<FeatureEvidence>> {
        let deformed = self.operator.deform(trajectory, event)?;
        let phi_r = smoothed_features(trajectory, &self.env, &self.features)?;
        let phi_d = smoothed_features(&deformed, &self.env, &self.features)?;
        let mut out = Vec::with_capacity(self.learned.len());
        for f in &self.learned {
            let i = self
                .features
                .index_of(*f)
                .ok_or_else(|| invalid("learned", format!("`{f}` is not a modeled feature")))?;
            let single = self.features.restricted_to(&[*f])?;
            let target = FeatureVector(vec![phi_d[i]]);
            let problem = CorrectionProblem {
                env: &self.env,
                features: &single,
                operator: &self.operator,
                base: trajectory,
                t: event.t,
                target: &target,
                effort_weight: self.beta.lambda,
            };
            let sol = minimal_effort_correction(problem, &self.optimizer, Some(&event.u_h))?;
            out.push(FeatureEvidence {
                feature: *f,
                beta_hat: estimate_beta_hat(&event.u_h, &sol, &self.beta)?,
                delta_phi: phi_d[i] - phi_r[i],
            });
        }
        Ok(out)
    }

    /// One tick of the loop.
    pub fn step(&self, state: &OnlineLearnerState, event: Option<&CorrectionEvent>) -> Result<OnlineLearnerState> {
        let mut next = state.clone();
        next.timestep += 1;
        let Some(event) = event else {
            return Ok(next);
        };
        let mut theta = state.theta.clone();
        for ev in self.analyze(&state.trajectory, event)? {
            let i = self.features.index_of(ev.feature).expect("validated");
            let p_explained = match self.mode {
                LearningMode::Fixed => 1.0,
                LearningMode::Adaptive => {
                    explanation_posterior(ev.beta_hat, self.model.as_ref().expect("validated"), ev.feature)?
                }
            };
            let updated = adaptive_theta_update(
                &WeightVector(vec![state.theta[i]]),
                &FeatureVector(vec![ev.delta_phi]),
                p_explained,
                &self.update,
                1,
            )?;
            theta.0[i] = updated.theta[0];
            next.history.push(InteractionRecord {
                step: state.timestep,
                feature: ev.feature,
                beta_hat: ev.beta_hat,
                p_explained,
                delta_phi: ev.delta_phi,
                theta: WeightVector(Vec::new()),
            });
        }
        let records = next.history.len() - self.learned.len();
        for r in &mut next.history[records..] {
            r.theta = theta.clone();
        }
        next.trajectory = optimize_trajectory(&theta, &self.env, &self.features, &self.optimizer)?.trajectory;
        next.theta_path.push(theta.clone());
        next.theta = theta;
        Ok(next)
    }
}

/// Functional form of [`OnlineLearner::step`].
pub fn online_step(
    learner: &OnlineLearner,
    state: &OnlineLearnerState,
    event: Option<&CorrectionEvent>,
) -> Result<OnlineLearnerState> {
    learner.step(state, event)
}
