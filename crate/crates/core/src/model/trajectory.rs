use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Error, Result};

/// Sequence of `T + 1` waypoints, stored flat (waypoint-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Trajectory {
    dim: usize,
    points: Vec<f64>,
}

impl Trajectory {
    pub fn from_flat(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "waypoint dimension must be positive"));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(invalid(
                "points",
                format!("{} values do not split into {dim}-vectors", points.len()),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(invalid("points", "non-finite coordinate"));
        }
        Ok(Self { dim, points })
    }

    pub fn from_waypoints(waypoints: Vec<Vec<f64>>) -> Result<Self> {
        let dim = waypoints.first().map(Vec::len).ok_or(Error::Empty("waypoints"))?;
        for w in &waypoints {
            ensure_len(dim, w.len(), "waypoint")?;
        }
        Self::from_flat(dim, waypoints.concat())
    }

    /// Equally spaced waypoints from `start` to `goal`.
    pub fn straight_line(start: &[f64], goal: &[f64], horizon: usize) -> Self {
        let dim = start.len();
        let mut points = Vec::with_capacity(dim * (horizon + 1));
        for i in 0..=horizon {
            let s = i as f64 / horizon as f64;
            points.extend(start.iter().zip(goal).map(|(a, b)| a + s * (b - a)));
        }
        Self { dim, points }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of waypoints (`T + 1`).
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.len() - 1
    }

    pub fn waypoint(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn waypoints(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    pub(crate) fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.points
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.points
    }

    /// Waypoints in reverse order.
    pub fn reversed(&self) -> Self {
        let points = self.points.chunks_exact(self.dim).rev().flatten().copied().collect();
        Self { dim: self.dim, points }
    }

    /// Largest coordinate-wise distance to `other`.
    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<Vec<f64>>> for Trajectory {
    type Error = Error;

    fn try_from(waypoints: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_waypoints(waypoints)
    }
}

impl From<Trajectory> for Vec<Vec<f64>> {
    fn from(t: Trajectory) -> Self {
        t.points.chunks_exact(t.dim).map(<[f64]>::to_vec).collect()
    }
}

/// Per-feature totals `Φ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

/// Objective weights `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<f64>);

impl Deref for FeatureVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for WeightVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl FeatureVector {
    /// `self - other`, componentwise.
    pub fn minus(&self, other: &FeatureVector) -> FeatureVector {
        FeatureVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl WeightVector {
    /// Normalizes to unit Euclidean norm. A zero vector is returned unchanged.
    pub fn normalized(&self) -> WeightVector {
        let norm = l2_norm(&self.0);
        if norm == 0.0 {
            return self.clone();
        }
        WeightVector(self.0.iter().map(|v| v / norm).collect())
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|v| *v >= 0.0)
    }

    pub fn scaled(&self, s: f64) -> WeightVector {
        WeightVector(self.0.iter().map(|v| v * s).collect())
    }

    /// One-hot weight on component `i` of `d`.
    pub fn unit(d: usize, i: usize) -> WeightVector {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        WeightVector(v)
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
