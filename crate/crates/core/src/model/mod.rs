//! Environment, trajectories, features, and linear costs.

mod cost;
mod env;
mod features;
mod trajectory;

pub use cost::{linear_cost, phri_cost};
pub use env::{EnvironmentDocument, EnvironmentSpec, Feature, FeatureConfig};
pub use features::{compute_features, feature_jacobian, raw_feature, smoothed_features, Hinge, HINGE_BAND_FRACTION};
pub use trajectory::{FeatureVector, Trajectory, WeightVector};

pub(crate) use trajectory::{dot, l2_norm};
