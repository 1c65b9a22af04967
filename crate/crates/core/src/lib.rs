//! Generalized category discovery under unknown, long-tailed class
//! distributions: a contrastive branch that estimates the class
//! distribution and a pseudo-labeling branch that supplies debiased soft
//! supervision back to it.

pub mod data;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod losses;
pub mod nn;
pub mod rng;
pub mod train;
pub mod transfer;
pub mod util;

pub use error::{Error, Result};
