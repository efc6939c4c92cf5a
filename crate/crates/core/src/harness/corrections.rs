use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrections::{
    adaptive_theta_update, build_deformation, explanation_posterior, ExplanationModel, FeatureEvidence,
    FeatureExplanation, LearningMode, OnlineLearner, OnlineLearnerState, ThetaUpdateConfig,
};
use crate::error::{ensure_len, invalid, Error, Result};
use crate::harness::config::{CorrectionTask, ExperimentConfig, TrueCostSpec};
use crate::harness::sub_seed;
use crate::model::{
    compute_features, EnvironmentSpec, Feature, FeatureConfig, FeatureVector, Trajectory, WeightVector,
};
use crate::optimizer::{anchor_normalizers, optimize_trajectory};
use crate::sim::{simulate_correction, CorrectionStyle, CorrectorConfig, TrueCost};

/// Attempts at drawing a timestep where the targeted feature responds to a push.
const TIMESTEP_TRIES: usize = 200;

/// Shared setup of the correction experiments.
#[derive(Debug, Clone)]
pub struct CorrectionContext {
    pub env: EnvironmentSpec,
    /// Divisors for every feature, taken from anchor trajectories.
    pub all_features: FeatureConfig,
    pub learner: OnlineLearner,
    pub corrector: CorrectorConfig,
    pub beta_sim: Option<f64>,
    pub seeds: usize,
    pub seed: u64,
}

impl CorrectionContext {
    pub fn new(cfg: &ExperimentConfig, env: EnvironmentSpec) -> Result<Self> {
        let study = &cfg.corrections;
        let all_features = anchor_normalizers(&env, &Feature::ALL, &cfg.optimizer)?;
        let features = all_features.restricted_to(&study.modeled)?;
        let operator = build_deformation(&env, study.mu)?;
        let learner = OnlineLearner {
            env: env.clone(),
            features,
            learned: study.learned.clone(),
            operator,
            optimizer: cfg.optimizer.clone(),
            beta: study.beta,
            update: study.update,
            model: None,
            mode: LearningMode::Fixed,
        };
        learner.validate()?;
        Ok(Self {
            env,
            all_features,
            learner,
            corrector: CorrectorConfig {
                magnitude: study.corrector.magnitude,
                lambda: study.beta.lambda,
                leak_feature: None,
                leak_angle_deg: study.corrector.leak_angle_deg,
            },
            beta_sim: study.corrector.beta_sim,
            seeds: study.seeds,
            seed: cfg.seed,
        })
    }

    pub fn modeled(&self) -> &FeatureConfig {
        &self.learner.features
    }

    pub fn feature_names(&self) -> Vec<&'static str> {
        self.modeled().features.iter().map(|f| f.name()).collect()
    }

    /// A learner in `mode`. Adaptive mode uses the model's `ν` when it has one.
    pub fn learner(&self, mode: LearningMode, model: Option<&ExplanationModel>) -> Result<OnlineLearner> {
        let mut l = self.learner.clone();
        l.mode = mode;
        l.model = model.cloned();
        if let Some(nu) = model.and_then(|m| m.nu) {
            l.update.nu = nu;
        }
        l.validate()?;
        Ok(l)
    }

    /// True cost with the corrector's rationality.
    pub fn true_cost(&self, spec: &TrueCostSpec) -> Result<TrueCost> {
        ensure_len(spec.features.len(), spec.theta.len(), "true weights")?;
        TrueCost::new(
            self.all_features.restricted_to(&spec.features)?,
            WeightVector(spec.theta.clone()),
            self.beta_sim,
        )
    }

    fn plan(&self, theta: &WeightVector) -> Result<Trajectory> {
        ensure_len(self.modeled().dim(), theta.len(), "planner weights")?;
        Ok(optimize_trajectory(theta, &self.env, self.modeled(), &self.learner.optimizer)?.trajectory)
    }

    fn exact_features(&self, traj: &Trajectory) -> Result<FeatureVector> {
        compute_features(traj, &self.env, self.modeled())
    }
}

/// One labeled calibration correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledEvidence {
    pub explained: bool,
    pub evidence: FeatureEvidence,
    /// Weight of the feature on the corrected trajectory.
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureCalibration {
    pub feature: Feature,
    pub explained_samples: usize,
    pub unexplained_samples: usize,
    pub mean_beta_explained: f64,
    pub mean_beta_unexplained: f64,
    /// Fraction of labeled samples whose posterior sides with the label.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuCandidate {
    pub nu: f64,
    pub mean_step_explained: f64,
    pub mean_step_unexplained: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub events_per_style: usize,
    pub mean_beta_explained: f64,
    pub mean_beta_unexplained: f64,
    pub features: Vec<FeatureCalibration>,
    pub nu: f64,
    pub nu_candidates: Vec<NuCandidate>,
    pub model: ExplanationModel,
    pub samples: Vec<LabeledEvidence>,
}

/// Simulates labeled corrections, fits `P(β̂ | E)` per learned feature and
/// picks `ν`.
pub fn calibrate_beta_model(cfg: &ExperimentConfig, ctx: &CorrectionContext) -> Result<CalibrationReport> {
    let cal = cfg
        .corrections
        .calibration
        .as_ref()
        .ok_or_else(|| invalid("corrections.calibration", "the config has no calibration section"))?;
    if cal.events_per_style == 0 {
        return Err(Error::Empty("calibration events"));
    }
    if cal.base_thetas.is_empty() {
        return Err(Error::Empty("calibration base weights"));
    }
    let bases = cal
        .base_thetas
        .iter()
        .map(|t| {
            let theta = WeightVector(t.clone());
            Ok((theta.clone(), ctx.plan(&theta)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let hidden = ctx.true_cost(&cal.hidden)?;

    let jobs: Vec<(bool, usize)> = (0..cal.events_per_style)
        .flat_map(|i| [(true, i), (false, i)])
        .collect();
    let per_event = jobs
        .par_iter()
        .map(|&(explained, i)| calibration_event(ctx, &bases, &hidden, explained, i))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<LabeledEvidence> = per_event.into_iter().flatten().collect();

    let mut fits = Vec::new();
    for f in &ctx.learner.learned {
        let pick = |e: bool| -> Vec<f64> {
            samples
                .iter()
                .filter(|s| s.explained == e && s.evidence.feature == *f)
                .map(|s| s.evidence.beta_hat)
                .collect()
        };
        fits.push(FeatureExplanation::fit(*f, &pick(false), &pick(true))?);
    }
    let mut model = ExplanationModel::new(cal.prior, fits)?;

    let (nu, nu_candidates) = choose_nu(&samples, &model, &ctx.learner.update, &cal.nu_grid)?;
    model.nu = Some(nu);
    model.validate()?;

    let mut features = Vec::new();
    for f in &ctx.learner.learned {
        let of = |e: bool| {
            samples
                .iter()
                .filter(move |s| s.explained == e && s.evidence.feature == *f)
        };
        let correct = samples
            .iter()
            .filter(|s| s.evidence.feature == *f)
            .map(|s| {
                let p = explanation_posterior(s.evidence.beta_hat, &model, *f)?;
                Ok(((p > 0.5) == s.explained) as usize)
            })
            .sum::<Result<usize>>()?;
        let n1 = of(true).count();
        let n0 = of(false).count();
        features.push(FeatureCalibration {
            feature: *f,
            explained_samples: n1,
            unexplained_samples: n0,
            mean_beta_explained: mean(of(true).map(|s| s.evidence.beta_hat)),
            mean_beta_unexplained: mean(of(false).map(|s| s.evidence.beta_hat)),
            accuracy: correct as f64 / (n0 + n1) as f64,
        });
    }
    let pooled = |e: bool| mean(samples.iter().filter(|s| s.explained == e).map(|s| s.evidence.beta_hat));
    Ok(CalibrationReport {
        events_per_style: cal.events_per_style,
        mean_beta_explained: pooled(true),
        mean_beta_unexplained: pooled(false),
        features,
        nu,
        nu_candidates,
        model,
        samples,
    })
}

/// Labeled evidence from one simulated correction.
///
/// An efficient push targets a single learned feature and labels only that
/// feature explained; an inefficient push labels every learned feature
/// unexplained.
fn calibration_event(
    ctx: &CorrectionContext,
    bases: &[(WeightVector, Trajectory)],
    hidden: &TrueCost,
    explained: bool,
    i: usize,
) -> Result<Vec<LabeledEvidence>> {
    let learned = &ctx.learner.learned;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.seed, &[3, explained as u64, i as u64]));
    // Every base sees every target.
    let (theta, base) = &bases[(i / learned.len()) % bases.len()];
    let target = learned[i % learned.len()];
    let (tc, style, corrector) = if explained {
        let spec = TrueCostSpec {
            features: vec![target],
            theta: vec![1.0],
            beta_sim: None,
        };
        (ctx.true_cost(&spec)?, CorrectionStyle::Efficient, ctx.corrector)
    } else {
        let corrector = CorrectorConfig {
            leak_feature: Some(target),
            ..ctx.corrector
        };
        (hidden.clone(), CorrectionStyle::Inefficient, corrector)
    };
    let mut last_err = None;
    for _ in 0..TIMESTEP_TRIES {
        let t = rng.random_range(1..ctx.env.horizon);
        let event = match simulate_correction(
            &tc,
            &ctx.env,
            ctx.modeled(),
            &ctx.learner.operator,
            base,
            t,
            style,
            &corrector,
            &mut rng,
        ) {
            Ok(e) => e,
            Err(e @ Error::Degenerate(_)) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        if explained && !responds(ctx, base, t, target)? {
            continue;
        }
        let evidence = ctx.learner.analyze(base, &event)?;
        return Ok(evidence
            .into_iter()
            .filter(|ev| !explained || ev.feature == target)
            .map(|ev| LabeledEvidence {
                explained,
                evidence: ev,
                theta: theta[ctx.modeled().index_of(ev.feature).expect("learned is modeled")],
            })
            .collect());
    }
    Err(last_err.unwrap_or_else(|| Error::Degenerate(format!("`{target}` never responds to a push"))))
}

/// Whether a push at `t` can change `feature` at all.
fn responds(ctx: &CorrectionContext, base: &Trajectory, t: usize, feature: Feature) -> Result<bool> {
    let single = ctx.modeled().restricted_to(&[feature])?;
    let (_, grads) = crate::model::feature_jacobian(base, &ctx.env, &single, crate::model::Hinge::Smoothed)?;
    let shape = ctx.learner.operator.shape(t);
    let n = ctx.env.n;
    let mut g = vec![0.0; n];
    for (i, s) in shape.iter().enumerate() {
        for k in 0..n {
            g[k] += s * grads[0][i * n + k];
        }
    }
    Ok(g.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-6)
}

/// Picks the `ν` that moves weights most on explained corrections while
/// keeping unexplained ones under 5% of that motion; falls back to the best
/// ratio.
fn choose_nu(
    samples: &[LabeledEvidence],
    model: &ExplanationModel,
    update: &ThetaUpdateConfig,
    grid: &[f64],
) -> Result<(f64, Vec<NuCandidate>)> {
    if grid.is_empty() {
        return Err(Error::Empty("nu grid"));
    }
    let mut candidates = Vec::new();
    for &nu in grid {
        let cfg = ThetaUpdateConfig { nu, ..*update };
        let mut steps = [Vec::new(), Vec::new()];
        for s in samples {
            let p = explanation_posterior(s.evidence.beta_hat, model, s.evidence.feature)?;
            let u = adaptive_theta_update(
                &WeightVector(vec![s.theta]),
                &FeatureVector(vec![s.evidence.delta_phi]),
                p,
                &cfg,
                1,
            )?;
            steps[s.explained as usize].push((u.theta[0] - s.theta).abs());
        }
        candidates.push(NuCandidate {
            nu,
            mean_step_explained: mean(steps[1].iter().copied()),
            mean_step_unexplained: mean(steps[0].iter().copied()),
        });
    }
    let ratio = |c: &NuCandidate| {
        if c.mean_step_explained > 0.0 {
            c.mean_step_unexplained / c.mean_step_explained
        } else {
            f64::INFINITY
        }
    };
    let admissible = candidates
        .iter()
        .filter(|c| ratio(c) < 0.05)
        .max_by(|a, b| a.mean_step_explained.total_cmp(&b.mean_step_explained));
    let chosen = match admissible {
        Some(c) => c.nu,
        None => {
            candidates
                .iter()
                .min_by(|a, b| ratio(a).total_cmp(&ratio(b)))
                .expect("grid is not empty")
                .nu
        }
    };
    Ok((chosen, candidates))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values.iter().copied());
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// One learner run against one simulated human.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: usize,
    /// `|Φ_i(ξ_final) − Φ_i(ξ*)|` per modeled feature.
    pub regret: Vec<f64>,
    pub path_length: f64,
    pub final_theta: Vec<f64>,
    pub mean_p_explained: f64,
    #[serde(skip)]
    pub state: Option<OnlineLearnerState>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: LearningMode,
    pub mean_regret: Vec<f64>,
    pub sd_regret: Vec<f64>,
    pub mean_path_length: f64,
    pub sd_path_length: f64,
    pub mean_final_theta: Vec<f64>,
    pub mean_p_explained: f64,
    pub trials: Vec<TrialOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskReport {
    pub name: String,
    pub explained: bool,
    /// Weights over the modeled features whose plan is the regret reference.
    pub reference_theta: Vec<f64>,
    pub modes: Vec<ModeSummary>,
}

impl TaskReport {
    pub fn mode(&self, mode: LearningMode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionStudyReport {
    pub feature_names: Vec<String>,
    pub seeds: usize,
    /// `ν` used by adaptive runs, if any ran.
    pub nu: Option<f64>,
    pub tasks: Vec<TaskReport>,
}

impl CorrectionStudyReport {
    pub fn task(&self, name: &str) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.name == name)
    }
}

/// Runs one task against one seeded human in `mode`.
pub fn run_trial(
    ctx: &CorrectionContext,
    task: &CorrectionTask,
    task_index: usize,
    learner: &OnlineLearner,
    seed: usize,
    reference: &FeatureVector,
) -> Result<TrialOutcome> {
    let tc = ctx.true_cost(&task.truth)?;
    let corrector = CorrectorConfig {
        leak_feature: task.leak_feature,
        ..ctx.corrector
    };
    // Both modes face the same human.
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.seed, &[4, task_index as u64, seed as u64]));
    let mut state = learner.initial_state(WeightVector(task.initial_theta.clone()))?;
    for &t in &task.timesteps {
        while state.timestep + 1 < t {
            state = learner.step(&state, None)?;
        }
        let event = match simulate_correction(
            &tc,
            &ctx.env,
            ctx.modeled(),
            &learner.operator,
            &state.trajectory,
            t,
            task.style,
            &corrector,
            &mut rng,
        ) {
            Ok(e) => Some(e),
            // Nothing left to fix at `t`: the human lets the robot pass.
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        state = learner.step(&state, event.as_ref())?;
    }
    let phi = ctx.exact_features(&state.trajectory)?;
    let regret = phi.iter().zip(reference.iter()).map(|(a, b)| (a - b).abs()).collect();
    Ok(TrialOutcome {
        seed,
        regret,
        path_length: state.path_length(),
        final_theta: state.theta.0.clone(),
        mean_p_explained: mean(state.history.iter().map(|r| r.p_explained)),
        state: Some(state),
    })
}

fn summarize(mode: LearningMode, trials: Vec<TrialOutcome>, d: usize) -> ModeSummary {
    let column = |f: &dyn Fn(&TrialOutcome) -> f64| -> Vec<f64> { trials.iter().map(f).collect() };
    let mean_regret = (0..d).map(|i| mean(trials.iter().map(|t| t.regret[i]))).collect();
    let sd_regret = (0..d).map(|i| sd(&column(&|t| t.regret[i]))).collect();
    let lengths = column(&|t| t.path_length);
    let theta_dim = trials.first().map_or(0, |t| t.final_theta.len());
    ModeSummary {
        mode,
        mean_regret,
        sd_regret,
        mean_path_length: mean(lengths.iter().copied()),
        sd_path_length: sd(&lengths),
        mean_final_theta: (0..theta_dim)
            .map(|i| mean(trials.iter().map(|t| t.final_theta[i])))
            .collect(),
        mean_p_explained: mean(trials.iter().map(|t| t.mean_p_explained)),
        trials,
    }
}

/// Every task in each of `modes` over `ctx.seeds` simulated humans.
///
/// `model` is required when `modes` includes adaptive learning.
pub fn run_correction_study(
    cfg: &ExperimentConfig,
    ctx: &CorrectionContext,
    model: Option<&ExplanationModel>,
    modes: &[LearningMode],
) -> Result<CorrectionStudyReport> {
    let tasks = &cfg.corrections.tasks;
    if ctx.seeds == 0 {
        return Err(Error::Empty("seeds"));
    }
    if modes.is_empty() {
        return Err(Error::Empty("learning modes"));
    }
    let learners = modes
        .iter()
        .map(|m| match m {
            LearningMode::Fixed => ctx.learner(*m, None),
            LearningMode::Adaptive => {
                let model = model.ok_or_else(|| invalid("model", "adaptive runs need an explanation model"))?;
                ctx.learner(*m, Some(model))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let references = tasks
        .iter()
        .map(|task| {
            ensure_len(ctx.modeled().dim(), task.initial_theta.len(), "initial weights")?;
            let tc = ctx.true_cost(&task.truth)?;
            let theta = tc.projected_onto(ctx.modeled());
            let phi = ctx.exact_features(&ctx.plan(&theta)?)?;
            Ok((theta, phi))
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize, usize)> = (0..tasks.len())
        .flat_map(|k| (0..learners.len()).flat_map(move |m| (0..ctx.seeds).map(move |s| (k, m, s))))
        .collect();
    let mut outcomes = jobs
        .par_iter()
        .map(|&(k, m, s)| run_trial(ctx, &tasks[k], k, &learners[m], s, &references[k].1))
        .collect::<Result<Vec<_>>>()?
        .into_iter();

    let d = ctx.modeled().dim();
    let mut reports = Vec::new();
    for (task, (theta, _)) in tasks.iter().zip(references) {
        let summaries = learners
            .iter()
            .map(|l| summarize(l.mode, outcomes.by_ref().take(ctx.seeds).collect(), d))
            .collect();
        reports.push(TaskReport {
            name: task.name.clone(),
            explained: task.explained,
            reference_theta: theta.0,
            modes: summaries,
        });
    }
    Ok(CorrectionStudyReport {
        feature_names: ctx.feature_names().iter().map(|s| s.to_string()).collect(),
        seeds: ctx.seeds,
        nu: learners
            .iter()
            .find(|l| l.mode == LearningMode::Adaptive)
            .map(|l| l.update.nu),
        tasks: reports,
    })
}
