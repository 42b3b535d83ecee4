//! Continual spatiotemporal forecasting across sample groups: curriculum
//! ordering, an elastic common container, a contrastive personality extractor
//! and a gate that absorbs related groups or isolates unrelated ones.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Segment lists legitimately hold a single range.
#![allow(clippy::single_range_in_vec_init)]

pub mod backbone;
pub mod coupler;
pub mod curriculum;
pub mod datagen;
pub mod elastic;
pub mod error;
pub mod harness;
pub mod info_audit;
pub mod personality;
pub mod seed;

pub use error::{Error, Result};
