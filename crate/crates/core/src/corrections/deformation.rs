//! Trajectory deformation `ξ_D = ξ_R + μ A⁻¹ ũ_H`.
//!
//! `A = KᵀK` where `K` is the second-difference (acceleration) operator on
//! the waypoint displacements with identity rows at both endpoints. Interior
//! rows only reference interior displacements, i.e. endpoint displacements
//! are held at zero, so `A` is block diagonal and a push at an interior
//! timestep never moves `x^0` or `x^T`. `A` is scaled so that the largest
//! diagonal entry of its interior inverse is 1: a push `u` at timestep `t`
//! moves waypoint `t` by at most `μ‖u‖`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Result};
use crate::model::{EnvironmentSpec, Trajectory};

/// A physical correction: torque `u_H` applied at waypoint index `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEvent {
    pub t: usize,
    pub u_h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DeformationOperator {
    mu: f64,
    n: usize,
    /// Scalar (per-waypoint) norm matrix; the full operator is `A ⊗ I_n`.
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
}

impl DeformationOperator {
    pub fn new(env: &EnvironmentSpec, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(invalid("mu", format!("must be positive, got {mu}")));
        }
        let len = env.waypoints();
        let interior = len - 2;
        let mut a = DMatrix::<f64>::zeros(len, len);
        a[(0, 0)] = 1.0;
        a[(len - 1, len - 1)] = 1.0;
        let mut a_inv = a.clone();
        if interior > 0 {
            // Dirichlet second-difference operator on interior waypoints.
            let k = DMatrix::<f64>::from_fn(interior, interior, |i, j| {
                if i == j {
                    -2.0
                } else if i.abs_diff(j) == 1 {
                    1.0
                } else {
                    0.0
                }
            });
            let gram = k.transpose() * &k;
            let gram_inv = gram
                .clone()
                .cholesky()
                .ok_or_else(|| invalid("A", "second-difference Gram matrix is singular"))?
                .inverse();
            let scale = (0..interior).map(|i| gram_inv[(i, i)]).fold(0.0, f64::max);
            a.view_mut((1, 1), (interior, interior)).copy_from(&(gram * scale));
            a_inv
                .view_mut((1, 1), (interior, interior))
                .copy_from(&(gram_inv / scale));
            a[(0, 0)] = scale;
            a[(len - 1, len - 1)] = scale;
            a_inv[(0, 0)] = 1.0 / scale;
            a_inv[(len - 1, len - 1)] = 1.0 / scale;
        }
        Ok(Self { mu, n: env.n, a, a_inv })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn waypoints(&self) -> usize {
        self.a.nrows()
    }

    /// Full `n(T+1) × n(T+1)` norm matrix `A ⊗ I_n`.
    pub fn norm_matrix(&self) -> DMatrix<f64> {
        self.a.kronecker(&DMatrix::identity(self.n, self.n))
    }

    /// Per-waypoint displacement caused by a unit push at `t`: `μ (A⁻¹)_{·,t}`,
    /// zero at both endpoints.
    pub fn shape(&self, t: usize) -> Vec<f64> {
        let len = self.waypoints();
        let mut col: Vec<f64> = (0..len).map(|i| self.mu * self.a_inv[(i, t)]).collect();
        col[0] = 0.0;
        col[len - 1] = 0.0;
        col
    }

    /// `ξ_R + μ A⁻¹ ũ_H`.
    pub fn deform(&self, base: &Trajectory, event: &CorrectionEvent) -> Result<Trajectory> {
        ensure_len(self.n, base.dim(), "trajectory waypoint dimension")?;
        ensure_len(self.waypoints(), base.len(), "trajectory waypoint count")?;
        ensure_len(self.n, event.u_h.len(), "correction torque")?;
        if event.t >= self.waypoints() {
            return Err(invalid(
                "t",
                format!("timestep {} outside horizon {}", event.t, self.waypoints() - 1),
            ));
        }
        Ok(self.deform_with_shape(base, &self.shape(event.t), &event.u_h))
    }

    pub(crate) fn deform_with_shape(&self, base: &Trajectory, shape: &[f64], u: &[f64]) -> Trajectory {
        let mut out = base.clone();
        let flat = out.as_flat_mut();
        for (i, s) in shape.iter().enumerate() {
            if *s != 0.0 {
                for (x, uk) in flat[i * self.n..(i + 1) * self.n].iter_mut().zip(u) {
                    *x += s * uk;
                }
            }
        }
        out
    }
}

/// Builds the acceleration-norm deformation operator for `env`.
pub fn build_deformation(env: &EnvironmentSpec, mu: f64) -> Result<DeformationOperator> {
    DeformationOperator::new(env, mu)
}

/// Deforms `base` by the correction `event`.
pub fn deform(base: &Trajectory, event: &CorrectionEvent, op: &DeformationOperator) -> Result<Trajectory> {
    op.deform(base, event)
}
