//! Fixed-endpoint trajectory optimization over the interior waypoints.
//!
//! Projected gradient descent inside the workspace box. Trial steps use the
//! Barzilai–Borwein length; an Armijo backtracking search along the
//! projection arc keeps every accepted iterate at or below the previous cost.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Result};
use crate::model::{dot, feature_jacobian, EnvironmentSpec, FeatureConfig, Hinge, Trajectory, WeightVector};
use crate::optimizer::OptimizerConfig;

const MAX_BACKTRACKS: usize = 60;
const MIN_STEP: f64 = 1e-12;
const MAX_STEP: f64 = 1e6;

/// Result of [`optimize_trajectory`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannedTrajectory {
    pub trajectory: Trajectory,
    /// `θᵀΦ` (smoothed features) at the returned trajectory.
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Projected-gradient norm at the returned trajectory.
    pub gradient_norm: f64,
    /// Cost after every accepted iteration, starting with the initial guess.
    pub cost_history: Vec<f64>,
}

/// Cost `θᵀΦ(x)` with smoothed features and its gradient over all waypoints.
pub fn trajectory_cost_and_gradient(
    theta: &WeightVector,
    traj: &Trajectory,
    env: &EnvironmentSpec,
    cfg: &FeatureConfig,
) -> Result<(f64, Vec<f64>)> {
    ensure_len(cfg.dim(), theta.len(), "weight vector")?;
    let (phi, grads) = feature_jacobian(traj, env, cfg, Hinge::Smoothed)?;
    let mut g = vec![0.0; traj.as_flat().len()];
    for (w, gi) in theta.iter().zip(&grads) {
        if *w != 0.0 {
            g.iter_mut().zip(gi).for_each(|(a, b)| *a += w * b);
        }
    }
    Ok((dot(theta, &phi), g))
}

/// Plans a start-to-goal trajectory that locally minimizes `θᵀΦ`.
///
/// Starts from the straight line between start and goal. When the iteration
/// budget runs out the best iterate is returned with `converged == false`.
pub fn optimize_trajectory(
    theta: &WeightVector,
    env: &EnvironmentSpec,
    features: &FeatureConfig,
    cfg: &OptimizerConfig,
) -> Result<PlannedTrajectory> {
    ensure_len(features.dim(), theta.len(), "weight vector")?;
    if theta.iter().any(|w| !w.is_finite()) {
        return Err(invalid("theta", "non-finite weight"));
    }
    let (lo, hi) = env.bounds();
    let n = env.n;
    let len = env.waypoints();
    let project = |x: &mut [f64]| {
        for i in 1..len - 1 {
            for k in 0..n {
                let v = &mut x[i * n + k];
                *v = v.clamp(lo[k], hi[k]);
            }
        }
    };
    let eval = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let traj = Trajectory::from_flat(n, x.to_vec())?;
        let (c, mut g) = trajectory_cost_and_gradient(theta, &traj, env, features)?;
        // Endpoints are fixed.
        g[..n].iter_mut().for_each(|v| *v = 0.0);
        g[(len - 1) * n..].iter_mut().for_each(|v| *v = 0.0);
        Ok((c, g))
    };
    let pg_norm = |x: &[f64], g: &[f64]| -> f64 {
        let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
        project(&mut y);
        x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };

    let mut x = Trajectory::straight_line(&env.start, &env.goal, env.horizon).into_flat();
    project(&mut x);
    let (mut f, mut g) = eval(&x)?;
    let mut history = vec![f];
    let mut step = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = pg_norm(&x, &g);

    while iterations < cfg.max_iters {
        if grad_norm <= cfg.gradient_tolerance {
            converged = true;
            break;
        }
        if let Some((px, pg)) = &prev {
            let s: Vec<f64> = x.iter().zip(px).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 0.0 {
                step = (dot(&s, &s) / sy).clamp(MIN_STEP, MAX_STEP);
            } else {
                step = (step * 2.0).min(MAX_STEP);
            }
        }
        let mut accepted = None;
        let mut trial_step = step;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - trial_step * b).collect();
            project(&mut trial);
            let decrease: f64 = g
                .iter()
                .zip(trial.iter().zip(&x))
                .map(|(gi, (t, xi))| gi * (t - xi))
                .sum();
            let (ft, gt) = eval(&trial)?;
            if ft <= f + cfg.sufficient_decrease * decrease && ft <= f {
                accepted = Some((trial, ft, gt));
                break;
            }
            trial_step *= cfg.shrink;
            if trial_step < MIN_STEP {
                break;
            }
        }
        iterations += 1;
        match accepted {
            Some((xt, ft, gt)) => {
                prev = Some((std::mem::replace(&mut x, xt), std::mem::replace(&mut g, gt)));
                f = ft;
                step = trial_step;
                history.push(f);
                grad_norm = pg_norm(&x, &g);
            }
            None => break,
        }
    }
    if grad_norm <= cfg.gradient_tolerance {
        converged = true;
    }
    Ok(PlannedTrajectory {
        trajectory: Trajectory::from_flat(n, x)?,
        cost: f,
        converged,
        iterations,
        gradient_norm: grad_norm,
        cost_history: history,
    })
}
