use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demo::grids::{BetaGrid, ThetaGrid};
use crate::error::{ensure_len, invalid, Error, Result};
use crate::model::{dot, FeatureVector, WeightVector};
use crate::optimizer::TrajectorySet;

/// `A + ln Σ e^{v − A}` with `A = max(v)`.
pub fn logsumexp(values: &[f64]) -> Result<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Err(Error::Empty("logsumexp input"));
    }
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Ok(max);
    }
    if max == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok(max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Boltzmann log-likelihood of a demonstration with features `demo`, with the
/// partition function approximated by the trajectory set:
/// `−βθᵀΦ(x) − ln Σ_{x̄∈S} e^{−βθᵀΦ(x̄)}`.
pub fn demo_loglik(demo: &FeatureVector, theta: &WeightVector, beta: f64, set: &TrajectorySet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("trajectory set"));
    }
    ensure_len(theta.len(), demo.len(), "demonstration features")?;
    let mut scores = Vec::with_capacity(set.len());
    for phi in set.features() {
        ensure_len(theta.len(), phi.len(), "trajectory-set features")?;
        scores.push(-beta * dot(theta, phi));
    }
    Ok(-beta * dot(theta, demo) - logsumexp(&scores)?)
}

/// Normalized belief over `Θ_D × 𝓑_D`, kept in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBelief {
    thetas: ThetaGrid,
    betas: BetaGrid,
    /// Row-major `[theta][beta]` log-probabilities.
    log_prob: Vec<f64>,
}

impl JointBelief {
    pub fn uniform(thetas: ThetaGrid, betas: BetaGrid) -> Self {
        let cells = thetas.len() * betas.len();
        let lp = -(cells as f64).ln();
        Self {
            thetas,
            betas,
            log_prob: vec![lp; cells],
        }
    }

    /// Belief from arbitrary nonnegative prior weights (normalized here).
    pub fn from_weights(thetas: ThetaGrid, betas: BetaGrid, weights: &[f64]) -> Result<Self> {
        ensure_len(thetas.len() * betas.len(), weights.len(), "prior weights")?;
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("prior", "weights must be finite and nonnegative"));
        }
        let logs: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        Self::from_log_weights(thetas, betas, logs)
    }

    fn from_log_weights(thetas: ThetaGrid, betas: BetaGrid, mut logs: Vec<f64>) -> Result<Self> {
        let z = logsumexp(&logs)?;
        if !z.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        logs.iter_mut().for_each(|l| *l -= z);
        Ok(Self {
            thetas,
            betas,
            log_prob: logs,
        })
    }

    pub fn thetas(&self) -> &ThetaGrid {
        &self.thetas
    }

    pub fn betas(&self) -> &BetaGrid {
        &self.betas
    }

    pub fn prob(&self, theta: usize, beta: usize) -> f64 {
        self.log_prob[theta * self.betas.len() + beta].exp()
    }

    pub fn log_prob(&self, theta: usize, beta: usize) -> f64 {
        self.log_prob[theta * self.betas.len() + beta]
    }

    /// All probabilities, row-major `[theta][beta]`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_prob.iter().map(|l| l.exp()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.log_prob.iter().map(|l| l.exp()).sum()
    }

    /// `b(θ)`, summed over β.
    pub fn theta_marginal(&self) -> Vec<f64> {
        self.probabilities()
            .chunks_exact(self.betas.len())
            .map(|row| row.iter().sum())
            .collect()
    }

    /// `b(β)`, summed over θ.
    pub fn beta_marginal(&self) -> Vec<f64> {
        let nb = self.betas.len();
        let mut out = vec![0.0; nb];
        for (i, p) in self.probabilities().into_iter().enumerate() {
            out[i % nb] += p;
        }
        out
    }

    /// Most probable cell `(theta index, beta index)`.
    pub fn argmax(&self) -> (usize, usize) {
        let (i, _) =
            self.log_prob.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, l)| if *l > acc.1 { (i, *l) } else { acc },
            );
        (i / self.betas.len(), i % self.betas.len())
    }

    pub fn max_probability(&self) -> f64 {
        let (t, b) = self.argmax();
        self.prob(t, b)
    }

    /// Shannon entropy (nats) of the θ-marginal.
    pub fn theta_entropy(&self) -> f64 {
        self.theta_marginal()
            .into_iter()
            .filter(|p| *p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    /// Posterior after observing one demonstration with features `demo`.
    pub fn update(&self, demo: &FeatureVector, set: &TrajectorySet) -> Result<Self> {
        let nb = self.betas.len();
        let mut logs = self.log_prob.clone();
        for (ti, theta) in self.thetas.iter().enumerate() {
            for (bi, beta) in self.betas.values().iter().enumerate() {
                logs[ti * nb + bi] += demo_loglik(demo, theta, *beta, set)?;
            }
        }
        Self::from_log_weights(self.thetas.clone(), self.betas.clone(), logs)
    }

    /// Sequential updates over several demonstrations.
    pub fn update_all<'a>(
        &self,
        demos: impl IntoIterator<Item = &'a FeatureVector>,
        set: &TrajectorySet,
    ) -> Result<Self> {
        demos.into_iter().try_fold(self.clone(), |b, d| b.update(d, set))
    }

    /// Writes `theta_index, theta_components…, beta, probability` rows.
    pub fn write_csv<W: Write>(&self, out: W, feature_names: &[&str]) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["theta_index".to_string()];
        header.extend(feature_names.iter().map(|n| format!("theta_{n}")));
        header.push("beta".into());
        header.push("probability".into());
        w.write_record(&header)?;
        for (ti, theta) in self.thetas.iter().enumerate() {
            for (bi, beta) in self.betas.values().iter().enumerate() {
                let mut row = vec![ti.to_string()];
                row.extend(theta.iter().map(|v| format!("{v:.12}")));
                row.push(format!("{beta}"));
                row.push(format!("{:.12e}", self.prob(ti, bi)));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, feature_names: &[&str]) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(file, feature_names).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Posterior update `b'(θ,β) ∝ P(x | θ,β) b(θ,β)`.
pub fn update_belief(belief: &JointBelief, demo: &FeatureVector, set: &TrajectorySet) -> Result<JointBelief> {
    belief.update(demo, set)
}

/// Threshold rule on the per-hypothesis confidence mode.
///
/// `epsilon` is a confidence value: the flag is raised when, for every θ with
/// posterior mass, the β maximizing `b(β | θ)` lies below `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisspecificationPolicy {
    pub epsilon: f64,
}

impl MisspecificationPolicy {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(invalid(
                "epsilon",
                format!("must be finite and nonnegative, got {epsilon}"),
            ));
        }
        Ok(Self { epsilon })
    }
}

pub fn misspecification_flag(belief: &JointBelief, policy: &MisspecificationPolicy) -> bool {
    let nb = belief.betas.len();
    let mut any_row = false;
    for ti in 0..belief.thetas.len() {
        let row = &belief.log_prob[ti * nb..(ti + 1) * nb];
        if row.iter().all(|l| *l == f64::NEG_INFINITY) {
            continue;
        }
        any_row = true;
        let (mode, _) = row.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, l)| if *l > acc.1 { (i, *l) } else { acc },
        );
        if belief.betas.values()[mode] >= policy.epsilon {
            return false;
        }
    }
    any_row
}

/// How posterior hypotheses are combined into planning weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `E_{θ∼b}[θ]`.
    Marginal,
    /// `E_{θ,β∼b}[βθ]`.
    ConfidenceWeighted,
}

pub fn posterior_weights(belief: &JointBelief, mode: WeightMode) -> WeightVector {
    let d = belief.thetas.dim();
    let mut out = vec![0.0; d];
    for (ti, theta) in belief.thetas.iter().enumerate() {
        for (bi, beta) in belief.betas.values().iter().enumerate() {
            let p = belief.prob(ti, bi);
            let scale = match mode {
                WeightMode::Marginal => p,
                WeightMode::ConfidenceWeighted => p * beta,
            };
            out.iter_mut().zip(theta.iter()).for_each(|(o, t)| *o += scale * t);
        }
    }
    WeightVector(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::grids::build_default_grids;
    use crate::model::{Feature, FeatureConfig, Trajectory};
    use crate::optimizer::TrajectoryMember;

    fn set_with(features: &[Vec<f64>]) -> TrajectorySet {
        let d = features[0].len();
        TrajectorySet {
            seed: 0,
            feature_config: FeatureConfig::unnormalized(
                [Feature::Efficiency, Feature::Table, Feature::Laptop][..d].to_vec(),
            ),
            members: features
                .iter()
                .map(|f| TrajectoryMember {
                    waypoints: Trajectory::straight_line(&[0.0], &[1.0], 2),
                    features: FeatureVector(f.clone()),
                    theta: WeightVector(vec![0.0; d]),
                })
                .collect(),
        }
    }

    #[test]
    fn logsumexp_cases() {
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((logsumexp(&[1000.0, 1000.0]).unwrap() - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(&[-5.0]).unwrap(), -5.0);
        assert!(logsumexp(&[]).is_err());
        assert!(logsumexp(&[-1000.0, -1000.0]).unwrap().is_finite());
    }

    #[test]
    fn loglik_cases() {
        let set = set_with(&[vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let demo = FeatureVector(vec![0.0, 0.0, 0.0]);
        let theta = WeightVector(vec![0.0, 1.0, 0.0]);
        let ll = demo_loglik(&demo, &theta, 1.0, &set).unwrap();
        assert!((ll + (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        assert!((ll + 0.3133).abs() < 1e-4);
        let zero = demo_loglik(&FeatureVector(vec![3.0, 1.0, 2.0]), &theta, 0.0, &set).unwrap();
        assert!((zero + 2f64.ln()).abs() < 1e-15);
        let single = set_with(&[vec![0.2, 0.4, 0.1]]);
        let s = demo_loglik(&FeatureVector(vec![0.2, 0.4, 0.1]), &theta, 5.0, &single).unwrap();
        assert!(s.abs() < 1e-15);
    }

    #[test]
    fn empty_set_is_an_error() {
        let mut set = set_with(&[vec![0.0]]);
        set.members.clear();
        assert!(demo_loglik(&FeatureVector(vec![0.0]), &WeightVector(vec![1.0]), 1.0, &set).is_err());
    }

    #[test]
    fn flat_likelihood_leaves_prior_unchanged() {
        let (thetas, betas) = build_default_grids(3).unwrap();
        let weights: Vec<f64> = (0..thetas.len() * betas.len()).map(|i| 1.0 + (i % 7) as f64).collect();
        let prior = JointBelief::from_weights(thetas, betas, &weights).unwrap();
        // One-member set: every cell's likelihood is exactly 1.
        let set = set_with(&[vec![0.3, 0.1, 0.5]]);
        let post = prior.update(&FeatureVector(vec![0.3, 0.1, 0.5]), &set).unwrap();
        for (a, b) in prior.probabilities().iter().zip(post.probabilities()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn three_to_one_likelihood_ratio() {
        // Two θ hypotheses and one β; likelihoods differ by ln 3.
        let thetas = ThetaGrid::new(vec![WeightVector(vec![1.0, 0.0]), WeightVector(vec![0.0, 1.0])]).unwrap();
        let betas = BetaGrid::new(vec![1.0]).unwrap();
        let prior = JointBelief::uniform(thetas, betas);
        let set = set_with(&[vec![0.0, 0.0], vec![3f64.ln(), 0.0]]);
        // Under θ₁ the demo ties with the cheaper member; under θ₂ all cost 0.
        let demo = FeatureVector(vec![0.0, 0.0]);
        let post = prior.update(&demo, &set).unwrap();
        let l1 = demo_loglik(&demo, prior.thetas().get(0), 1.0, &set).unwrap();
        let l2 = demo_loglik(&demo, prior.thetas().get(1), 1.0, &set).unwrap();
        let ratio = (l1 - l2).exp();
        let expected = ratio / (1.0 + ratio);
        assert!((post.prob(0, 0) - expected).abs() < 1e-12);

        let lik = [0.75f64.ln(), 0.25f64.ln()];
        let direct =
            JointBelief::from_log_weights(prior.thetas().clone(), prior.betas().clone(), lik.to_vec()).unwrap();
        assert!((direct.prob(0, 0) - 0.75).abs() < 1e-12);
        assert!((direct.prob(1, 0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_rows_keep_theta_prior() {
        let (thetas, _) = build_default_grids(3).unwrap();
        let betas = BetaGrid::with_zero(vec![]);
        let prior = JointBelief::uniform(thetas, betas);
        let set = set_with(&[vec![0.0, 0.2, 0.9], vec![0.7, 0.1, 0.0], vec![0.3, 0.3, 0.3]]);
        let post = prior.update(&FeatureVector(vec![0.5, 0.5, 0.5]), &set).unwrap();
        for (a, b) in prior.theta_marginal().iter().zip(post.theta_marginal()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn flag_cases() {
        let (thetas, betas) = build_default_grids(3).unwrap();
        let nb = betas.len();
        let cells = thetas.len() * nb;
        let mut top = vec![0.0; cells];
        top[nb - 1] = 1.0;
        let confident = JointBelief::from_weights(thetas.clone(), betas.clone(), &top).unwrap();
        let pol = MisspecificationPolicy::new(0.1).unwrap();
        assert!(!misspecification_flag(&confident, &pol));

        let mut low = vec![0.0; cells];
        for ti in 0..thetas.len() {
            low[ti * nb] = 1.0;
        }
        let unsure = JointBelief::from_weights(thetas, betas, &low).unwrap();
        assert!(misspecification_flag(&unsure, &pol));
        let never = MisspecificationPolicy::new(0.0).unwrap();
        assert!(!misspecification_flag(&unsure, &never));
        assert!(!misspecification_flag(&confident, &never));
        assert!(MisspecificationPolicy::new(-1.0).is_err());
    }

    #[test]
    fn weight_modes() {
        let (thetas, betas) = build_default_grids(3).unwrap();
        let nb = betas.len();
        let cells = thetas.len() * nb;
        let mut delta = vec![0.0; cells];
        delta[4 * nb + 3] = 1.0;
        let b = JointBelief::from_weights(thetas.clone(), betas.clone(), &delta).unwrap();
        let w = posterior_weights(&b, WeightMode::Marginal);
        for (a, e) in w.iter().zip(thetas.get(4).iter()) {
            assert!((a - e).abs() < 1e-12);
        }

        let mut two = vec![0.0; cells];
        two[nb + 2] = 1.0;
        two[5 * nb + 2] = 1.0;
        let b = JointBelief::from_weights(thetas.clone(), betas.clone(), &two).unwrap();
        let w = posterior_weights(&b, WeightMode::Marginal);
        for k in 0..3 {
            let e = 0.5 * (thetas.get(1)[k] + thetas.get(5)[k]);
            assert!((w[k] - e).abs() < 1e-12);
        }

        let mut low = vec![0.0; cells];
        for ti in 0..thetas.len() {
            low[ti * nb] = 1.0;
        }
        let b = JointBelief::from_weights(thetas, betas, &low).unwrap();
        assert!(posterior_weights(&b, WeightMode::ConfidenceWeighted).norm() <= 0.01 + 1e-12);
    }

    #[test]
    fn csv_layout() {
        let (thetas, betas) = build_default_grids(2).unwrap();
        let b = JointBelief::uniform(thetas, betas);
        let mut buf = Vec::new();
        b.write_csv(&mut buf, &["efficiency", "table"]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "theta_index,theta_efficiency,theta_table,beta,probability"
        );
        assert_eq!(text.lines().count(), 1 + b.thetas().len() * 9);
    }
}
