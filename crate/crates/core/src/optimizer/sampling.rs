//! Trajectory sets used to approximate Boltzmann partition functions.
//!
//! Members are produced by optimizing costs with random weights: a direction
//! drawn uniformly on the nonnegative unit sphere, scaled by a log-uniform
//! magnitude in `[0.01, 100]`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    compute_features, raw_feature, EnvironmentSpec, Feature, FeatureConfig, FeatureVector, Hinge, Trajectory,
    WeightVector,
};
use crate::optimizer::{optimize_trajectory, OptimizerConfig};

const MAGNITUDE_RANGE: (f64, f64) = (0.01, 100.0);

/// One sampled trajectory with its cached features and the weights it was
/// optimized for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMember {
    pub waypoints: Trajectory,
    pub features: FeatureVector,
    pub theta: WeightVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub seed: u64,
    pub feature_config: FeatureConfig,
    pub members: Vec<TrajectoryMember>,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn features(&self) -> impl Iterator<Item = &FeatureVector> {
        self.members.iter().map(|m| &m.features)
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.members.iter().map(|m| &m.waypoints)
    }

    /// Recomputes the feature cache under `cfg`.
    pub fn with_feature_config(&self, env: &EnvironmentSpec, cfg: FeatureConfig) -> Result<Self> {
        let members = self
            .members
            .iter()
            .map(|m| {
                Ok(TrajectoryMember {
                    features: compute_features(&m.waypoints, env, &cfg)?,
                    waypoints: m.waypoints.clone(),
                    theta: m.theta.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seed: self.seed,
            feature_config: cfg,
            members,
        })
    }

    /// Per-feature divisors: the largest raw value of each feature over the
    /// members (1 for features that never activate).
    pub fn normalizers_for(&self, env: &EnvironmentSpec, features: &[Feature]) -> Vec<f64> {
        max_raw_features(env, features, self.trajectories())
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
        let set: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if set.members.is_empty() {
            return Err(Error::Empty("trajectory set"));
        }
        Ok(set)
    }
}

/// Samples `count` optimized trajectories with features cached under `cfg`.
pub fn sample_trajectory_set(
    env: &EnvironmentSpec,
    cfg: &FeatureConfig,
    count: usize,
    seed: u64,
    opt: &OptimizerConfig,
) -> Result<TrajectorySet> {
    if count == 0 {
        return Err(Error::Empty("trajectory set (count must be >= 1)"));
    }
    env.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas: Vec<WeightVector> = (0..count).map(|_| random_weights(&mut rng, cfg.dim())).collect();
    let members = thetas
        .into_par_iter()
        .map(|theta| {
            let planned = optimize_trajectory(&theta, env, cfg, opt)?;
            Ok(TrajectoryMember {
                features: compute_features(&planned.trajectory, env, cfg)?,
                waypoints: planned.trajectory,
                theta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectorySet {
        seed,
        feature_config: cfg.clone(),
        members,
    })
}

/// Samples a set and normalizes its features by their maximum over the set.
///
/// Optimization happens under provisional divisors taken from a handful of
/// anchor trajectories (the straight line and the optimum of each single
/// feature); the returned cache uses the set's own maxima.
pub fn sample_normalized_trajectory_set(
    env: &EnvironmentSpec,
    features: &[Feature],
    count: usize,
    seed: u64,
    opt: &OptimizerConfig,
) -> Result<TrajectorySet> {
    let provisional = anchor_normalizers(env, features, opt)?;
    let set = sample_trajectory_set(env, &provisional, count, seed, opt)?;
    let divisors = set.normalizers_for(env, features);
    set.with_feature_config(env, FeatureConfig::new(features.to_vec(), divisors)?)
}

/// Divisors from the straight line and each single-feature optimum.
pub fn anchor_normalizers(env: &EnvironmentSpec, features: &[Feature], opt: &OptimizerConfig) -> Result<FeatureConfig> {
    let unit = FeatureConfig::unnormalized(features.to_vec());
    unit.validate()?;
    let mut anchors = vec![Trajectory::straight_line(&env.start, &env.goal, env.horizon)];
    for i in 0..features.len() {
        let theta = WeightVector::unit(features.len(), i);
        anchors.push(optimize_trajectory(&theta, env, &unit, opt)?.trajectory);
    }
    FeatureConfig::new(features.to_vec(), max_raw_features(env, features, anchors.iter()))
}

fn max_raw_features<'a>(
    env: &EnvironmentSpec,
    features: &[Feature],
    trajs: impl Iterator<Item = &'a Trajectory>,
) -> Vec<f64> {
    let mut best = vec![0.0f64; features.len()];
    for t in trajs {
        for (b, f) in best.iter_mut().zip(features) {
            *b = b.max(raw_feature(*f, t, env, Hinge::Exact));
        }
    }
    best.into_iter().map(|v| if v > 1e-12 { v } else { 1.0 }).collect()
}

/// Uniform direction on the nonnegative unit sphere times a log-uniform
/// magnitude.
fn random_weights(rng: &mut impl Rng, d: usize) -> WeightVector {
    let dir = loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect();
        let w = WeightVector(v);
        if w.norm() > 1e-12 {
            break w.normalized();
        }
    };
    let (lo, hi) = MAGNITUDE_RANGE;
    let magnitude = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
    dir.scaled(magnitude)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_weights_are_nonnegative_with_bounded_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let w = random_weights(&mut rng, 3);
            assert!(w.is_nonnegative());
            let m = w.norm();
            assert!((0.01 - 1e-12..=100.0 + 1e-9).contains(&m), "{m}");
        }
    }
}
