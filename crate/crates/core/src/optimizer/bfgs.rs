//! Small dense BFGS minimizer for the low-dimensional correction problems.

use crate::model::dot;

pub(crate) struct BfgsSettings {
    pub max_iters: usize,
    pub gradient_tolerance: f64,
    pub shrink: f64,
    pub sufficient_decrease: f64,
}

/// Minimizes `f` from `x0`. `f` returns the value and gradient.
pub(crate) fn minimize<F>(mut f: F, x0: Vec<f64>, s: &BfgsSettings) -> Vec<f64>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let d = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    // Inverse Hessian approximation, row-major.
    let mut h = identity(d);
    let mut iterations = 0;
    while iterations < s.max_iters {
        if dot(&g, &g).sqrt() <= s.gradient_tolerance {
            break;
        }
        iterations += 1;
        let mut p: Vec<f64> = (0..d).map(|i| -dot(&h[i * d..(i + 1) * d], &g)).collect();
        let mut slope = dot(&p, &g);
        if slope >= 0.0 {
            // Lost descent; restart from steepest descent.
            h = identity(d);
            p = g.iter().map(|v| -v).collect();
            slope = dot(&p, &g);
        }
        let mut alpha = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            let (ft, gt) = f(&xt);
            if ft.is_finite() && ft <= fx + s.sufficient_decrease * alpha * slope {
                next = Some((xt, ft, gt));
                break;
            }
            alpha *= s.shrink;
        }
        let Some((xt, ft, gt)) = next else { break };
        let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &dg);
        if sy > 1e-300 {
            update_inverse(&mut h, &step, &dg, sy);
        }
        let improvement = fx - ft;
        x = xt;
        fx = ft;
        g = gt;
        if improvement <= 1e-16 * fx.abs().max(1e-300) && dot(&step, &step).sqrt() < 1e-15 {
            break;
        }
    }
    x
}

fn identity(d: usize) -> Vec<f64> {
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        h[i * d + i] = 1.0;
    }
    h
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`.
fn update_inverse(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| dot(&h[i * d..(i + 1) * d], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
