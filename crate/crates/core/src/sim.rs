//! Simulated humans: demonstrations and physical corrections driven by a true
//! cost that may use features the robot does not model.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::corrections::{CorrectionEvent, DeformationOperator};
use crate::demo::logsumexp;
use crate::error::{ensure_len, invalid, Error, Result};
use crate::model::{
    compute_features, dot, feature_jacobian, l2_norm, EnvironmentSpec, Feature, FeatureConfig, Hinge, Trajectory,
    WeightVector,
};
use crate::optimizer::{optimize_trajectory, OptimizerConfig, TrajectorySet};

/// Norm below which a direction is treated as zero.
const DIRECTION_EPS: f64 = 1e-10;

/// The simulated human's objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueCost {
    /// Feature set of the true cost, possibly wider than the robot's.
    pub features: FeatureConfig,
    pub theta: WeightVector,
    /// Rationality `β_sim`; `None` means perfectly rational.
    #[serde(default)]
    pub beta_sim: Option<f64>,
}

impl TrueCost {
    pub fn new(features: FeatureConfig, theta: WeightVector, beta_sim: Option<f64>) -> Result<Self> {
        let tc = Self {
            features,
            theta: theta.normalized(),
            beta_sim,
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        ensure_len(self.features.dim(), self.theta.len(), "true weights")?;
        if !self.theta.is_nonnegative() || (self.theta.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid("theta", "true weights must be nonnegative with unit norm"));
        }
        if let Some(b) = self.beta_sim {
            if !(b > 0.0) {
                return Err(invalid("beta_sim", format!("must be positive, got {b}")));
            }
        }
        Ok(())
    }

    /// `θ*` restricted to `modeled` (zero for features the true cost lacks).
    pub fn projected_onto(&self, modeled: &FeatureConfig) -> WeightVector {
        WeightVector(
            modeled
                .features
                .iter()
                .map(|f| self.features.index_of(*f).map_or(0.0, |i| self.theta[i]))
                .collect(),
        )
    }
}

/// A demonstration: the optimum of the true cost when perfectly rational,
/// otherwise a Boltzmann draw from the trajectory set.
pub fn simulate_demonstration(
    tc: &TrueCost,
    env: &EnvironmentSpec,
    set: &TrajectorySet,
    rng: &mut impl Rng,
    opt: &OptimizerConfig,
) -> Result<Trajectory> {
    tc.validate()?;
    if set.is_empty() {
        return Err(Error::Empty("trajectory set"));
    }
    let Some(beta) = tc.beta_sim else {
        return Ok(optimize_trajectory(&tc.theta, env, &tc.features, opt)?.trajectory);
    };
    let pick = boltzmann_choice(tc, beta, env, set.trajectories(), rng)?;
    Ok(set.members[pick].waypoints.clone())
}

/// Index drawn with probability `∝ e^{−β θ*ᵀΦ*(x)}` over `candidates`.
pub fn boltzmann_choice<'a>(
    tc: &TrueCost,
    beta: f64,
    env: &EnvironmentSpec,
    candidates: impl IntoIterator<Item = &'a Trajectory>,
    rng: &mut impl Rng,
) -> Result<usize> {
    let mut scores = Vec::new();
    for traj in candidates {
        scores.push(-beta * dot(&tc.theta, &compute_features(traj, env, &tc.features)?));
    }
    let z = logsumexp(&scores)?;
    let weights: Vec<f64> = scores.iter().map(|s| (s - z).exp()).collect();
    Ok(WeightedIndex::new(&weights)
        .map_err(|e| invalid("candidates", format!("cannot sample demonstration: {e}")))?
        .sample(rng))
}

/// Smooth random variations of `base`: each axis gets a sum of three sine
/// modes with standard deviation `amplitude / k` on mode `k`. Endpoints stay
/// fixed; excursions past the workspace box are reflected back inside.
pub fn perturbed_candidates(
    base: &Trajectory,
    env: &EnvironmentSpec,
    count: usize,
    amplitude: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Trajectory>> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(invalid("amplitude", "must be finite and nonnegative"));
    }
    ensure_len(env.n, base.dim(), "trajectory dimension")?;
    let (lo, hi) = env.bounds();
    let n = env.n;
    let last = base.len() - 1;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let coeffs: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                let mut c = [0.0; 3];
                for (k, v) in c.iter_mut().enumerate() {
                    *v = amplitude / (k + 1) as f64 * rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
                c
            })
            .collect();
        let mut flat = base.as_flat().to_vec();
        for i in 1..last {
            let s = i as f64 / last as f64;
            for a in 0..n {
                let d: f64 = coeffs[a]
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * s).sin())
                    .sum();
                flat[i * n + a] = reflect(flat[i * n + a] + d, lo[a], hi[a]);
            }
        }
        out.push(Trajectory::from_flat(n, flat)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionStyle {
    /// Steepest descent of the true cost through the deformation.
    Efficient,
    /// Orthogonal to every modeled feature gradient.
    Inefficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectorConfig {
    /// Push norm before noise.
    pub magnitude: f64,
    /// Effort weight of the human model; noise has per-axis standard
    /// deviation `1/√(2λβ_sim)`.
    pub lambda: f64,
    /// Modeled feature an inefficient push partly improves by accident.
    pub leak_feature: Option<Feature>,
    /// Angle (degrees) between an inefficient push and the modeled-feature
    /// null space.
    pub leak_angle_deg: f64,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        Self {
            magnitude: 2.0,
            lambda: 1.0,
            leak_feature: None,
            leak_angle_deg: 0.0,
        }
    }
}

/// Per-axis gradient of `Σ_j w_j Φ_j(ξ + s u)` at `u = 0` for a deformation
/// with per-waypoint shape `s`.
fn push_gradient(
    traj: &Trajectory,
    env: &EnvironmentSpec,
    cfg: &FeatureConfig,
    weights: &[f64],
    shape: &[f64],
) -> Result<Vec<f64>> {
    let n = env.n;
    let (_, grads) = feature_jacobian(traj, env, cfg, Hinge::Smoothed)?;
    let mut out = vec![0.0; n];
    for (w, g) in weights.iter().zip(&grads) {
        for (i, s) in shape.iter().enumerate() {
            for k in 0..n {
                out[k] += w * s * g[i * n + k];
            }
        }
    }
    Ok(out)
}

/// A correction at waypoint `t` of the robot's plan `base`.
///
/// `modeled` is the robot's feature set; only the inefficient style uses it.
#[allow(clippy::too_many_arguments)]
pub fn simulate_correction(
    tc: &TrueCost,
    env: &EnvironmentSpec,
    modeled: &FeatureConfig,
    operator: &DeformationOperator,
    base: &Trajectory,
    t: usize,
    style: CorrectionStyle,
    cfg: &CorrectorConfig,
    rng: &mut impl Rng,
) -> Result<CorrectionEvent> {
    tc.validate()?;
    let n = env.n;
    if t == 0 || t >= env.horizon {
        return Err(invalid("t", format!("correction timestep {t} is not interior")));
    }
    if !(cfg.magnitude >= 0.0) || !cfg.magnitude.is_finite() {
        return Err(invalid("magnitude", "must be finite and nonnegative"));
    }
    if cfg.magnitude == 0.0 {
        return Ok(CorrectionEvent { t, u_h: vec![0.0; n] });
    }
    let shape = operator.shape(t);
    let true_grad = push_gradient(base, env, &tc.features, &tc.theta, &shape)?;

    let direction = match style {
        CorrectionStyle::Efficient => {
            let norm = l2_norm(&true_grad);
            if norm < DIRECTION_EPS {
                return Err(Error::Degenerate(format!("true cost is flat at timestep {t}")));
            }
            true_grad.iter().map(|g| -g / norm).collect::<Vec<_>>()
        }
        CorrectionStyle::Inefficient => {
            let mut basis: Vec<Vec<f64>> = Vec::new();
            let mut leak = None;
            for (j, f) in modeled.features.iter().enumerate() {
                let mut unit = vec![0.0; modeled.dim()];
                unit[j] = 1.0;
                let g = push_gradient(base, env, modeled, &unit, &shape)?;
                if Some(*f) == cfg.leak_feature {
                    leak = Some(g.clone());
                }
                if let Some(o) = orthogonal_residual(&g, &basis) {
                    basis.push(o);
                }
            }
            let neg_true: Vec<f64> = true_grad.iter().map(|g| -g).collect();
            let mut ortho = orthogonal_residual(&neg_true, &basis);
            for axis in 0..n {
                if ortho.is_some() {
                    break;
                }
                let mut e = vec![0.0; n];
                e[axis] = 1.0;
                ortho = orthogonal_residual(&e, &basis);
            }
            let ortho = ortho.ok_or_else(|| Error::Degenerate("modeled gradients span every push direction".into()))?;
            match (cfg.leak_feature, leak) {
                (Some(_), Some(g)) if l2_norm(&g) > DIRECTION_EPS => {
                    let gn = l2_norm(&g);
                    let angle = cfg.leak_angle_deg.to_radians();
                    let mixed: Vec<f64> = ortho
                        .iter()
                        .zip(&g)
                        .map(|(o, l)| angle.cos() * o - angle.sin() * l / gn)
                        .collect();
                    let m = l2_norm(&mixed);
                    mixed.into_iter().map(|v| v / m).collect()
                }
                (Some(f), None) => {
                    return Err(invalid("leak_feature", format!("`{f}` is not a modeled feature")));
                }
                _ => ortho,
            }
        }
    };

    let mut u_h: Vec<f64> = direction.iter().map(|d| cfg.magnitude * d).collect();
    if let Some(beta) = tc.beta_sim {
        let sd = 1.0 / (2.0 * cfg.lambda * beta).sqrt();
        let noise = Normal::new(0.0, sd).map_err(|e| invalid("beta_sim", e.to_string()))?;
        u_h.iter_mut().for_each(|v| *v += noise.sample(rng));
    }
    Ok(CorrectionEvent { t, u_h })
}

fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    let v = if v < lo { 2.0 * lo - v } else { v };
    let v = if v > hi { 2.0 * hi - v } else { v };
    v.clamp(lo, hi)
}

/// Unit component of `v` orthogonal to the orthonormal `basis`, if any.
fn orthogonal_residual(v: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let scale = l2_norm(v);
    if scale < DIRECTION_EPS {
        return None;
    }
    let mut r = v.to_vec();
    for b in basis {
        let c = dot(&r, b);
        r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
    let norm = l2_norm(&r);
    (norm > 1e-6 * scale).then(|| r.into_iter().map(|x| x / norm).collect())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corrections::build_deformation;

    fn env3() -> EnvironmentSpec {
        EnvironmentSpec {
            n: 3,
            horizon: 10,
            dt: 1.0,
            table_offset: 0.0,
            laptop_center: vec![5.0, 5.0, 0.0],
            laptop_radius: 0.2,
            human_center: vec![0.5, 0.6, 0.5],
            human_radius: 0.8,
            start: vec![0.0, 0.0, 0.5],
            goal: vec![1.0, 0.0, 0.5],
            workspace_min: None,
            workspace_max: None,
        }
    }

    #[test]
    fn efficient_table_push_points_down() {
        let env = env3();
        let op = build_deformation(&env, 0.1).unwrap();
        let base = Trajectory::straight_line(&env.start, &env.goal, env.horizon);
        let cfg = FeatureConfig::unnormalized(vec![Feature::Table]);
        let tc = TrueCost::new(cfg.clone(), WeightVector(vec![1.0]), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ev = simulate_correction(
            &tc,
            &env,
            &cfg,
            &op,
            &base,
            5,
            CorrectionStyle::Efficient,
            &CorrectorConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!(ev.u_h[0].abs() < 1e-12 && ev.u_h[1].abs() < 1e-12);
        assert!((ev.u_h[2] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn inefficient_push_avoids_modeled_gradients() {
        let env = env3();
        let op = build_deformation(&env, 0.1).unwrap();
        let base = Trajectory::straight_line(&env.start, &env.goal, env.horizon);
        let modeled = FeatureConfig::unnormalized(vec![Feature::Table]);
        let truth = FeatureConfig::unnormalized(vec![Feature::Table, Feature::Human]);
        let tc = TrueCost::new(truth, WeightVector(vec![0.2, 1.0]), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ev = simulate_correction(
            &tc,
            &env,
            &modeled,
            &op,
            &base,
            5,
            CorrectionStyle::Inefficient,
            &CorrectorConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!(ev.u_h[2].abs() < 1e-9);
        // Away from the human, who stands at +y.
        assert!(ev.u_h[1] < -1.0);
        assert!((l2_norm(&ev.u_h) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn leak_tilts_toward_the_feature() {
        let env = env3();
        let op = build_deformation(&env, 0.1).unwrap();
        let base = Trajectory::straight_line(&env.start, &env.goal, env.horizon);
        let modeled = FeatureConfig::unnormalized(vec![Feature::Table]);
        let truth = FeatureConfig::unnormalized(vec![Feature::Table, Feature::Human]);
        let tc = TrueCost::new(truth, WeightVector(vec![0.2, 1.0]), None).unwrap();
        let cfg = CorrectorConfig {
            leak_feature: Some(Feature::Table),
            leak_angle_deg: 30.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ev = simulate_correction(
            &tc,
            &env,
            &modeled,
            &op,
            &base,
            5,
            CorrectionStyle::Inefficient,
            &cfg,
            &mut rng,
        )
        .unwrap();
        assert!((ev.u_h[2] + 2.0 * 0.5).abs() < 1e-9, "{:?}", ev.u_h);
    }

    #[test]
    fn zero_magnitude_is_a_zero_event() {
        let env = env3();
        let op = build_deformation(&env, 0.1).unwrap();
        let base = Trajectory::straight_line(&env.start, &env.goal, env.horizon);
        let cfg = FeatureConfig::unnormalized(vec![Feature::Table]);
        let tc = TrueCost::new(cfg.clone(), WeightVector(vec![1.0]), Some(3.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = CorrectorConfig {
            magnitude: 0.0,
            ..Default::default()
        };
        let ev = simulate_correction(&tc, &env, &cfg, &op, &base, 3, CorrectionStyle::Efficient, &c, &mut rng).unwrap();
        assert_eq!(ev.u_h, vec![0.0; 3]);
    }
}
