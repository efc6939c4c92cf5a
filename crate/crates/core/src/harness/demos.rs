use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demo::{build_default_grids, misspecification_flag, JointBelief, MisspecificationPolicy};
use crate::error::{ensure_len, invalid, Error, Result};
use crate::harness::config::{DemoNoise, DemoScenario, ExperimentConfig, TrueCostSpec};
use crate::harness::sub_seed;
use crate::model::{compute_features, EnvironmentSpec, Feature, FeatureConfig, FeatureVector, WeightVector};
use crate::optimizer::{optimize_trajectory, sample_normalized_trajectory_set, OptimizerConfig, TrajectorySet};
use crate::sim::{boltzmann_choice, perturbed_candidates, TrueCost};

/// Environment, trajectory set and grids shared by every demonstration run.
#[derive(Debug, Clone)]
pub struct DemoContext {
    pub env: EnvironmentSpec,
    pub set: TrajectorySet,
    pub noise: DemoNoise,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl DemoContext {
    pub fn new(cfg: &ExperimentConfig, env: EnvironmentSpec) -> Result<Self> {
        Self::with_features(cfg, env, &cfg.demos.modeled)
    }

    pub fn with_features(cfg: &ExperimentConfig, env: EnvironmentSpec, features: &[Feature]) -> Result<Self> {
        let set = sample_normalized_trajectory_set(&env, features, cfg.set_size, cfg.seed, &cfg.optimizer)?;
        Ok(Self {
            env,
            set,
            noise: cfg.demos.noise,
            optimizer: cfg.optimizer.clone(),
            seed: cfg.seed,
        })
    }

    pub fn features(&self) -> &FeatureConfig {
        &self.set.feature_config
    }

    pub fn feature_names(&self) -> Vec<&'static str> {
        self.features().features.iter().map(|f| f.name()).collect()
    }

    pub fn uniform_belief(&self) -> Result<JointBelief> {
        let (thetas, betas) = build_default_grids(self.features().dim())?;
        Ok(JointBelief::uniform(thetas, betas))
    }

    /// Turns a config-level cost into a [`TrueCost`]; features the set does
    /// not cache are normalized by their maximum over the set.
    pub fn true_cost(&self, spec: &TrueCostSpec) -> Result<TrueCost> {
        true_cost_with(&self.env, &self.set, spec)
    }

    /// Demonstration features under the modeled feature set.
    ///
    /// A perfectly rational demonstrator returns the optimum of its true
    /// cost. A noisy one picks, Boltzmann-rationally, among smooth random
    /// variations of that optimum.
    pub fn demo_features(&self, spec: &TrueCostSpec, jitter: f64, rng: &mut ChaCha8Rng) -> Result<FeatureVector> {
        let mut tc = self.true_cost(spec)?;
        if jitter > 0.0 {
            let w: Vec<f64> = tc
                .theta
                .iter()
                .map(|t| t * (jitter * rng.sample::<f64, _>(StandardNormal)).exp())
                .collect();
            tc = TrueCost::new(tc.features.clone(), WeightVector(w), tc.beta_sim)?;
        }
        let best = optimize_trajectory(&tc.theta, &self.env, &tc.features, &self.optimizer)?.trajectory;
        let traj = match tc.beta_sim {
            None => best,
            Some(beta) => {
                let mut candidates =
                    perturbed_candidates(&best, &self.env, self.noise.candidates, self.noise.amplitude, rng)?;
                let pick = boltzmann_choice(&tc, beta, &self.env, &candidates, rng)?;
                candidates.swap_remove(pick)
            }
        };
        compute_features(&traj, &self.env, self.features())
    }
}

pub(crate) fn true_cost_with(env: &EnvironmentSpec, set: &TrajectorySet, spec: &TrueCostSpec) -> Result<TrueCost> {
    ensure_len(spec.features.len(), spec.theta.len(), "true weights")?;
    let cached = &set.feature_config;
    let normalizers = spec
        .features
        .iter()
        .map(|f| match cached.index_of(*f) {
            Some(i) => cached.normalizers[i],
            None => set.normalizers_for(env, &[*f])[0],
        })
        .collect();
    TrueCost::new(
        FeatureConfig::new(spec.features.clone(), normalizers)?,
        WeightVector(spec.theta.clone()),
        spec.beta_sim,
    )
}

/// Headline numbers of one posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub argmax_theta: Vec<f64>,
    pub argmax_beta: f64,
    pub max_probability: f64,
    pub theta_entropy: f64,
    /// Entropy of the θ-marginal over that of the uniform distribution.
    pub theta_entropy_ratio: f64,
    /// Largest per-θ mode of `b(β | θ)`.
    pub beta_mode: f64,
}

impl PosteriorSummary {
    pub fn of(belief: &JointBelief) -> Self {
        let (ti, bi) = belief.argmax();
        let uniform = (belief.thetas().len() as f64).ln();
        let entropy = belief.theta_entropy();
        Self {
            argmax_theta: belief.thetas().get(ti).0.clone(),
            argmax_beta: belief.betas().values()[bi],
            max_probability: belief.max_probability(),
            theta_entropy: entropy,
            theta_entropy_ratio: if uniform > 0.0 { entropy / uniform } else { 1.0 },
            beta_mode: beta_mode(belief),
        }
    }
}

/// Largest β at which some θ-row of the belief peaks.
pub fn beta_mode(belief: &JointBelief) -> f64 {
    let betas = belief.betas().values();
    let mut best = f64::NEG_INFINITY;
    for ti in 0..belief.thetas().len() {
        let mut arg = None;
        let mut top = f64::NEG_INFINITY;
        for (bi, beta) in betas.iter().enumerate() {
            let l = belief.log_prob(ti, bi);
            if l > top {
                top = l;
                arg = Some(*beta);
            }
        }
        if let Some(b) = arg {
            best = best.max(b);
        }
    }
    best
}

/// Threshold halfway, in log space, between the largest β-mode of the
/// misspecified references and the smallest of the well-specified ones.
pub fn calibrate_epsilon(well_specified: &[f64], misspecified: &[f64]) -> Result<f64> {
    let lo = misspecified.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = well_specified.iter().copied().fold(f64::INFINITY, f64::min);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Empty("reference demonstrations"));
    }
    if lo >= hi {
        return Err(Error::Degenerate(format!(
            "misspecified β-mode {lo} is not below well-specified β-mode {hi}"
        )));
    }
    Ok((lo * hi).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDemo {
    pub name: String,
    pub well_specified: bool,
    pub features: Vec<f64>,
    pub posterior: PosteriorSummary,
    pub misspecified_flag: bool,
}

/// Outcome of inference on the three reference demonstrations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub feature_names: Vec<String>,
    pub set_size: usize,
    pub set_mean_features: Vec<f64>,
    pub epsilon: f64,
    pub epsilon_calibrated: bool,
    pub demos: Vec<ReferenceDemo>,
    #[serde(skip)]
    pub beliefs: Vec<(String, JointBelief)>,
}

impl ReferenceReport {
    pub fn demo(&self, name: &str) -> Option<&ReferenceDemo> {
        self.demos.iter().find(|d| d.name == name)
    }
}

/// Perfect, noisy and misspecified single-demonstration inference.
pub fn run_reference_demos(cfg: &ExperimentConfig, ctx: &DemoContext) -> Result<ReferenceReport> {
    let reference = cfg
        .demos
        .reference
        .as_ref()
        .ok_or_else(|| invalid("demos.reference", "the config has no reference demonstrations"))?;
    let prior = ctx.uniform_belief()?;
    let cases = [
        ("perfect", true, &reference.perfect),
        ("noisy", true, &reference.noisy),
        ("misspecified", false, &reference.misspecified),
    ];
    let mut beliefs = Vec::new();
    let mut demos = Vec::new();
    for (k, (name, well, spec)) in cases.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.seed, &[1, k as u64]));
        let phi = ctx.demo_features(spec, 0.0, &mut rng)?;
        let belief = prior.update(&phi, &ctx.set)?;
        demos.push(ReferenceDemo {
            name: name.to_string(),
            well_specified: *well,
            features: phi.0.clone(),
            posterior: PosteriorSummary::of(&belief),
            misspecified_flag: false,
        });
        beliefs.push((name.to_string(), belief));
    }
    let (epsilon, calibrated) = match cfg.demos.epsilon {
        Some(e) => (e, false),
        None => {
            let modes = |well: bool| -> Vec<f64> {
                demos
                    .iter()
                    .filter(|d| d.well_specified == well)
                    .map(|d| d.posterior.beta_mode)
                    .collect()
            };
            (calibrate_epsilon(&modes(true), &modes(false))?, true)
        }
    };
    let policy = MisspecificationPolicy::new(epsilon)?;
    for (d, (_, b)) in demos.iter_mut().zip(&beliefs) {
        d.misspecified_flag = misspecification_flag(b, &policy);
    }
    Ok(ReferenceReport {
        feature_names: ctx.feature_names().iter().map(|s| s.to_string()).collect(),
        set_size: ctx.set.len(),
        set_mean_features: set_mean(&ctx.set),
        epsilon,
        epsilon_calibrated: calibrated,
        demos,
        beliefs,
    })
}

fn set_mean(set: &TrajectorySet) -> Vec<f64> {
    let d = set.feature_config.dim();
    let mut m = vec![0.0; d];
    for phi in set.features() {
        m.iter_mut().zip(phi.iter()).for_each(|(a, b)| *a += b);
    }
    m.iter().map(|v| v / set.len() as f64).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub modeled: Vec<Feature>,
    pub demos: Vec<Vec<f64>>,
    pub single: Vec<PosteriorSummary>,
    pub single_flags: Vec<bool>,
    pub pooled: PosteriorSummary,
    pub pooled_flag: bool,
    /// Pooled peak probability minus the largest single-demonstration peak.
    pub pooling_gain: f64,
    #[serde(skip)]
    pub pooled_belief: Option<JointBelief>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub epsilon: f64,
    pub scenarios: Vec<ScenarioReport>,
}

impl CaseStudyReport {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

/// Runs every configured scenario with the shared threshold `epsilon`.
pub fn run_case_study(cfg: &ExperimentConfig, ctx: &DemoContext, epsilon: f64) -> Result<CaseStudyReport> {
    let policy = MisspecificationPolicy::new(epsilon)?;
    let scenarios = cfg
        .demos
        .scenarios
        .par_iter()
        .enumerate()
        .map(|(k, sc)| run_scenario(cfg, ctx, sc, k, &policy))
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseStudyReport { epsilon, scenarios })
}

fn run_scenario(
    cfg: &ExperimentConfig,
    ctx: &DemoContext,
    sc: &DemoScenario,
    k: usize,
    policy: &MisspecificationPolicy,
) -> Result<ScenarioReport> {
    // A scenario may reason over a different feature set than the study.
    let owned;
    let ctx = match &sc.modeled {
        Some(m) if m != &ctx.features().features => {
            owned = DemoContext::with_features(cfg, ctx.env.clone(), m)?;
            &owned
        }
        _ => ctx,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.seed, &[2, k as u64]));
    let mut demos = Vec::new();
    for g in &sc.groups {
        let spec = TrueCostSpec {
            beta_sim: g.beta_sim,
            ..g.truth.as_ref().unwrap_or(&sc.truth).clone()
        };
        for _ in 0..g.count {
            demos.push(ctx.demo_features(&spec, g.jitter, &mut rng)?);
        }
    }
    if demos.is_empty() {
        return Err(Error::Empty("scenario demonstrations"));
    }
    let prior = ctx.uniform_belief()?;
    let mut single = Vec::new();
    let mut single_flags = Vec::new();
    for d in &demos {
        let b = prior.update(d, &ctx.set)?;
        single.push(PosteriorSummary::of(&b));
        single_flags.push(misspecification_flag(&b, policy));
    }
    let pooled_belief = prior.update_all(demos.iter(), &ctx.set)?;
    let pooled = PosteriorSummary::of(&pooled_belief);
    let best_single = single.iter().map(|s| s.max_probability).fold(0.0, f64::max);
    Ok(ScenarioReport {
        name: sc.name.clone(),
        modeled: ctx.features().features.clone(),
        demos: demos.into_iter().map(|d| d.0).collect(),
        pooling_gain: pooled.max_probability - best_single,
        pooled_flag: misspecification_flag(&pooled_belief, policy),
        single,
        single_flags,
        pooled,
        pooled_belief: Some(pooled_belief),
    })
}

/// Planned trajectory features for `theta`, handy for inspecting geometry.
pub fn planned_features(ctx: &DemoContext, theta: &WeightVector) -> Result<FeatureVector> {
    let traj = optimize_trajectory(theta, &ctx.env, ctx.features(), &ctx.optimizer)?.trajectory;
    compute_features(&traj, &ctx.env, ctx.features())
}
