//! Estimation and rectification of model-form errors in linear structural
//! dynamics through Gaussian-process latent forces in a modal basis.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod gp;
pub mod inference;
pub mod linalg;
pub mod metrics;
pub mod modal;
pub mod pipeline;
pub mod rectify;
pub mod structural;
pub mod surrogate;
pub mod truth;

pub use error::{Error, Result};
