//! Trajectory features and their gradients with respect to the waypoints.
//!
//! Every feature is a sum over waypoints (or waypoint pairs):
//!
//! | feature      | raw value                                   |
//! |--------------|---------------------------------------------|
//! | `efficiency` | `Σ_{i≥1} ‖(x^i − x^{i−1}) / Δt‖²`            |
//! | `table`      | `Σ_i |x^i_h − table_offset|`                 |
//! | `laptop`     | `Σ_i max{0, L − ‖x^i − x_laptop‖}`           |
//! | `human`      | `Σ_i max{0, R_h − ‖x^i − x_human‖}`          |
//!
//! and is divided by its normalizer from [`FeatureConfig`]. The two
//! sphere-penalty features have a kink at the sphere surface; optimizers work
//! with a C¹ version ([`Hinge::Smoothed`]) that blends the kink quadratically
//! over a band of width `0.05·radius`. Reported features use the exact hinge.

use crate::error::{ensure_len, Result};
use crate::model::env::{EnvironmentSpec, Feature, FeatureConfig};
use crate::model::trajectory::{FeatureVector, Trajectory};

/// Width of the quadratic blend, as a fraction of the sphere radius.
pub const HINGE_BAND_FRACTION: f64 = 0.05;

/// How the sphere-penalty kink is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hinge {
    /// `max{0, r − d}`, used for reporting and inference.
    Exact,
    /// C¹ quadratic blend, used inside optimizers.
    Smoothed,
}

/// Exact (reporting) features of `traj`.
pub fn compute_features(traj: &Trajectory, env: &EnvironmentSpec, cfg: &FeatureConfig) -> Result<FeatureVector> {
    check_shape(traj, env)?;
    Ok(FeatureVector(
        cfg.features
            .iter()
            .zip(&cfg.normalizers)
            .map(|(f, d)| raw_feature(*f, traj, env, Hinge::Exact) / d)
            .collect(),
    ))
}

/// Features as seen by the optimizers (smoothed hinge).
pub fn smoothed_features(traj: &Trajectory, env: &EnvironmentSpec, cfg: &FeatureConfig) -> Result<FeatureVector> {
    check_shape(traj, env)?;
    Ok(FeatureVector(
        cfg.features
            .iter()
            .zip(&cfg.normalizers)
            .map(|(f, d)| raw_feature(*f, traj, env, Hinge::Smoothed) / d)
            .collect(),
    ))
}

/// Normalized feature values together with one gradient per feature, each
/// the length of `traj.as_flat()`.
pub fn feature_jacobian(
    traj: &Trajectory,
    env: &EnvironmentSpec,
    cfg: &FeatureConfig,
    hinge: Hinge,
) -> Result<(FeatureVector, Vec<Vec<f64>>)> {
    check_shape(traj, env)?;
    let mut values = Vec::with_capacity(cfg.dim());
    let mut grads = Vec::with_capacity(cfg.dim());
    for (f, d) in cfg.features.iter().zip(&cfg.normalizers) {
        let mut g = vec![0.0; traj.as_flat().len()];
        let v = raw_feature_with_grad(*f, traj, env, hinge, &mut g);
        g.iter_mut().for_each(|x| *x /= d);
        values.push(v / d);
        grads.push(g);
    }
    Ok((FeatureVector(values), grads))
}

/// Unnormalized value of a single feature.
pub fn raw_feature(feature: Feature, traj: &Trajectory, env: &EnvironmentSpec, hinge: Hinge) -> f64 {
    match feature {
        Feature::Efficiency => {
            let inv_dt2 = 1.0 / (env.dt * env.dt);
            (1..traj.len())
                .map(|i| sq_dist(traj.waypoint(i), traj.waypoint(i - 1)) * inv_dt2)
                .sum()
        }
        Feature::Table => {
            let h = env.height_axis();
            traj.waypoints().map(|p| (p[h] - env.table_offset).abs()).sum()
        }
        Feature::Laptop => sphere_penalty(traj, &env.laptop_center, env.laptop_radius, hinge),
        Feature::Human => sphere_penalty(traj, &env.human_center, env.human_radius, hinge),
    }
}

fn raw_feature_with_grad(
    feature: Feature,
    traj: &Trajectory,
    env: &EnvironmentSpec,
    hinge: Hinge,
    grad: &mut [f64],
) -> f64 {
    let n = traj.dim();
    match feature {
        Feature::Efficiency => {
            let inv_dt2 = 1.0 / (env.dt * env.dt);
            let mut total = 0.0;
            for i in 1..traj.len() {
                let (a, b) = (traj.waypoint(i - 1), traj.waypoint(i));
                for k in 0..n {
                    let diff = b[k] - a[k];
                    total += diff * diff * inv_dt2;
                    grad[i * n + k] += 2.0 * diff * inv_dt2;
                    grad[(i - 1) * n + k] -= 2.0 * diff * inv_dt2;
                }
            }
            total
        }
        Feature::Table => {
            let h = env.height_axis();
            let mut total = 0.0;
            for (i, p) in traj.waypoints().enumerate() {
                let above = p[h] - env.table_offset;
                total += above.abs();
                // The workspace keeps trajectories on or above the plane.
                grad[i * n + h] += if above < 0.0 { -1.0 } else { 1.0 };
            }
            total
        }
        Feature::Laptop => sphere_penalty_with_grad(traj, &env.laptop_center, env.laptop_radius, hinge, grad),
        Feature::Human => sphere_penalty_with_grad(traj, &env.human_center, env.human_radius, hinge, grad),
    }
}

fn sphere_penalty(traj: &Trajectory, center: &[f64], radius: f64, hinge: Hinge) -> f64 {
    traj.waypoints()
        .map(|p| hinge_value(radius - sq_dist(p, center).sqrt(), radius, hinge).0)
        .sum()
}

fn sphere_penalty_with_grad(traj: &Trajectory, center: &[f64], radius: f64, hinge: Hinge, grad: &mut [f64]) -> f64 {
    let n = traj.dim();
    let mut total = 0.0;
    for (i, p) in traj.waypoints().enumerate() {
        let dist = sq_dist(p, center).sqrt();
        let (v, slope) = hinge_value(radius - dist, radius, hinge);
        total += v;
        if slope != 0.0 && dist > 0.0 {
            for k in 0..n {
                grad[i * n + k] -= slope * (p[k] - center[k]) / dist;
            }
        }
    }
    total
}

/// Value and derivative of the hinge at penetration depth `s = r − d`.
fn hinge_value(s: f64, radius: f64, hinge: Hinge) -> (f64, f64) {
    match hinge {
        Hinge::Exact => {
            if s > 0.0 {
                (s, 1.0)
            } else {
                (0.0, 0.0)
            }
        }
        Hinge::Smoothed => {
            let w = HINGE_BAND_FRACTION * radius;
            if w <= 0.0 {
                return hinge_value(s, radius, Hinge::Exact);
            }
            if s >= 0.5 * w {
                (s, 1.0)
            } else if s <= -0.5 * w {
                (0.0, 0.0)
            } else {
                let t = s + 0.5 * w;
                (t * t / (2.0 * w), t / w)
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_shape(traj: &Trajectory, env: &EnvironmentSpec) -> Result<()> {
    ensure_len(env.n, traj.dim(), "trajectory waypoint dimension")?;
    ensure_len(env.waypoints(), traj.len(), "trajectory waypoint count")
}
