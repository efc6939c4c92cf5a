//! Minimal-effort correction: the smallest push that reproduces observed
//! deformed-trajectory features.
//!
//! Solves `min ‖u‖²  s.t.  Φ(ξ_R + μA⁻¹ũ) = Φ_D` with a penalty method,
//! minimizing `λ‖u‖² + κ‖Φ(ξ_R + μA⁻¹ũ) − Φ_D‖²` by BFGS while κ grows
//! geometrically, then projects onto the constraint. The first solve starts at
//! `u = 0`, which violates the constraint whenever `Φ_D ≠ Φ(ξ_R)`.

use nalgebra::DMatrix;

use crate::corrections::DeformationOperator;
use crate::error::{ensure_len, invalid, Result};
use crate::model::{dot, feature_jacobian, l2_norm, EnvironmentSpec, FeatureConfig, FeatureVector, Hinge, Trajectory};
use crate::optimizer::bfgs::{self, BfgsSettings};
use crate::optimizer::OptimizerConfig;

/// Smallest eigenvalue kept in the Hessian.
pub const HESSIAN_EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CorrectionSolution {
    pub u_star: Vec<f64>,
    /// Hessian of `λ‖u‖² + κ‖r(u)‖²` at `u_star` (symmetrized,
    /// eigenvalues clamped at [`HESSIAN_EIGEN_FLOOR`]).
    pub hessian: DMatrix<f64>,
    pub log_det_hessian: f64,
    /// `‖Φ(deform(u_star)) − Φ_D‖`.
    pub constraint_residual: f64,
    pub converged: bool,
    /// Penalty weight the Hessian was taken at.
    pub kappa: f64,
}

impl CorrectionSolution {
    pub fn effort(&self) -> f64 {
        dot(&self.u_star, &self.u_star)
    }
}

/// Everything that defines one minimal-effort problem.
#[derive(Debug, Clone, Copy)]
pub struct CorrectionProblem<'a> {
    pub env: &'a EnvironmentSpec,
    /// Features the constraint is imposed on.
    pub features: &'a FeatureConfig,
    pub operator: &'a DeformationOperator,
    pub base: &'a Trajectory,
    pub t: usize,
    pub target: &'a FeatureVector,
    /// Effort weight `λ` in the penalized exponent; it does not move the
    /// constrained minimizer, only the Hessian.
    pub effort_weight: f64,
}

impl CorrectionProblem<'_> {
    fn validate(&self) -> Result<()> {
        ensure_len(self.features.dim(), self.target.len(), "target features")?;
        ensure_len(self.env.n, self.operator.state_dim(), "deformation operator dimension")?;
        ensure_len(self.env.waypoints(), self.base.len(), "trajectory waypoint count")?;
        if !(self.effort_weight > 0.0) || !self.effort_weight.is_finite() {
            return Err(invalid("effort_weight", "must be positive and finite"));
        }
        if self.t >= self.base.len() {
            return Err(invalid("t", format!("timestep {} outside horizon", self.t)));
        }
        Ok(())
    }
}

/// Penalized objective of a [`CorrectionProblem`] at a fixed κ.
struct Penalized<'a> {
    problem: CorrectionProblem<'a>,
    shape: Vec<f64>,
}

impl<'a> Penalized<'a> {
    fn new(problem: CorrectionProblem<'a>) -> Self {
        let shape = problem.operator.shape(problem.t);
        Self { problem, shape }
    }

    /// Residual `Φ(u) − Φ_D` and its Jacobian (`features × k`, row-major).
    fn residual(&self, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = &self.problem;
        let n = p.env.n;
        let traj = p.operator.deform_with_shape(p.base, &self.shape, u);
        let (phi, grads) = feature_jacobian(&traj, p.env, p.features, Hinge::Smoothed)?;
        let r: Vec<f64> = phi.iter().zip(p.target.iter()).map(|(a, b)| a - b).collect();
        let mut jac = vec![0.0; r.len() * n];
        for (j, g) in grads.iter().enumerate() {
            for (i, s) in self.shape.iter().enumerate() {
                if *s != 0.0 {
                    for k in 0..n {
                        jac[j * n + k] += g[i * n + k] * s;
                    }
                }
            }
        }
        Ok((r, jac))
    }

    fn value_and_gradient(&self, u: &[f64], kappa: f64) -> (f64, Vec<f64>) {
        let n = u.len();
        match self.residual(u) {
            Ok((r, jac)) => {
                let lambda = self.problem.effort_weight;
                let value = lambda * dot(u, u) + kappa * dot(&r, &r);
                let mut g: Vec<f64> = u.iter().map(|v| 2.0 * lambda * v).collect();
                for (j, rj) in r.iter().enumerate() {
                    for k in 0..n {
                        g[k] += 2.0 * kappa * rj * jac[j * n + k];
                    }
                }
                (value, g)
            }
            Err(_) => (f64::INFINITY, vec![0.0; n]),
        }
    }

    /// Gauss-Newton minimum-norm steps onto the constraint surface. A finite
    /// κ leaves a residual of order `λ‖u‖ / (κ‖J‖²)`, which is large when the
    /// features barely respond to the push; these steps remove it.
    fn project(&self, mut u: Vec<f64>) -> Result<(f64, Vec<f64>)> {
        let n = u.len();
        let (mut r, mut jac) = self.residual(&u)?;
        let mut norm = l2_norm(&r);
        for _ in 0..PROJECTION_STEPS {
            if norm <= PROJECTION_TOLERANCE {
                break;
            }
            let m = r.len();
            let j = DMatrix::from_row_slice(m, n, &jac);
            let Some(inv) = (&j * j.transpose()).try_inverse() else {
                break;
            };
            let step = j.transpose() * inv * nalgebra::DVector::from_column_slice(&r);
            let mut scale = 1.0;
            let mut accepted = false;
            while scale > 1e-4 {
                let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, d)| a - scale * d).collect();
                let (tr, tj) = self.residual(&trial)?;
                let tn = l2_norm(&tr);
                if tn < norm {
                    (u, r, jac, norm) = (trial, tr, tj, tn);
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok((norm, u))
    }
}

const PROJECTION_STEPS: usize = 30;
const PROJECTION_TOLERANCE: f64 = 1e-12;

/// Solves the minimal-effort problem.
///
/// `witness`, when given, is a push known to satisfy the constraint (the
/// observed correction). A second local solve at the final penalty weight
/// starts from it, so the returned effort never exceeds the witness's.
pub fn minimal_effort_correction(
    problem: CorrectionProblem<'_>,
    opt: &OptimizerConfig,
    witness: Option<&[f64]>,
) -> Result<CorrectionSolution> {
    problem.validate()?;
    opt.validate()?;
    let k = problem.env.n;
    if let Some(w) = witness {
        ensure_len(k, w.len(), "witness push")?;
    }
    let pen = Penalized::new(problem);
    let settings = BfgsSettings {
        max_iters: opt.max_iters,
        gradient_tolerance: opt.gradient_tolerance,
        shrink: opt.shrink,
        sufficient_decrease: opt.sufficient_decrease,
    };

    let mut u = vec![0.0; k];
    let schedule = opt.kappa_schedule();
    for &kappa in &schedule {
        u = bfgs::minimize(|x| pen.value_and_gradient(x, kappa), u, &settings);
    }
    let kappa = opt.kappa_max;
    let mut best = pen.project(u)?;

    if let Some(w) = witness {
        let start = bfgs::minimize(|x| pen.value_and_gradient(x, kappa), w.to_vec(), &settings);
        // The witness itself is the last resort when both solves drift off
        // the constraint.
        for cand in [
            pen.project(start)?,
            (pen.residual(w).map(|(r, _)| l2_norm(&r))?, w.to_vec()),
        ] {
            let feasible_best = best.0 <= opt.feasibility_tolerance;
            let feasible_new = cand.0 <= opt.feasibility_tolerance;
            let better = match (feasible_best, feasible_new) {
                (false, true) => true,
                (true, true) => dot(&cand.1, &cand.1) < dot(&best.1, &best.1),
                (false, false) => cand.0 < best.0,
                (true, false) => false,
            };
            if better {
                best = cand;
            }
        }
    }

    let (residual, u_star) = best;
    let hessian = penalized_hessian(&pen, &u_star, kappa);
    let (hessian, log_det) = clamp_spd(hessian);
    Ok(CorrectionSolution {
        constraint_residual: residual,
        converged: residual <= opt.feasibility_tolerance,
        u_star,
        hessian,
        log_det_hessian: log_det,
        kappa,
    })
}

/// Central finite differences of the gradient, step `1e-4·(1 + ‖u‖)`.
fn penalized_hessian(pen: &Penalized<'_>, u: &[f64], kappa: f64) -> DMatrix<f64> {
    let k = u.len();
    let h = 1e-4 * (1.0 + l2_norm(u));
    let mut out = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut up = u.to_vec();
        let mut down = u.to_vec();
        up[j] += h;
        down[j] -= h;
        let gp = pen.value_and_gradient(&up, kappa).1;
        let gm = pen.value_and_gradient(&down, kappa).1;
        for i in 0..k {
            out[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    out
}

/// Symmetrizes and floors the eigenvalues; returns the matrix and `log|H|`.
pub(crate) fn clamp_spd(h: DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (&h + h.transpose()) * 0.5;
    let mut eig = sym.symmetric_eigen();
    let mut log_det = 0.0;
    for l in eig.eigenvalues.iter_mut() {
        if !(*l >= HESSIAN_EIGEN_FLOOR) {
            *l = HESSIAN_EIGEN_FLOOR;
        }
        log_det += l.ln();
    }
    (eig.recompose(), log_det)
}
