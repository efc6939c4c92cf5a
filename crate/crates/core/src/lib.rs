//! Learning linear objectives from demonstrations and physical corrections
//! while estimating how well the modeled features explain each input.

// `!(x > 0.0)` is the idiom for rejecting NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrections;
pub mod demo;
pub mod error;
pub mod harness;
pub mod model;
pub mod optimizer;
pub mod sim;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/demonstrations.md")]
    mod demonstrations {}
    #[doc = include_str!("../../../book/src/corrections.md")]
    mod corrections {}
    #[doc = include_str!("../../../book/src/numerics.md")]
    mod numerics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
