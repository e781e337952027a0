//! Allocation-only core of the depthkit toolkit.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//!
//! - [`map`]: dense depth maps and validity masks.
//! - [`alignment`]: least-squares and median/MAD scale-shift fits.
//! - [`losses`]: scale-and-shift-invariant loss, multi-scale gradient
//!   matching, and the feature alignment margin loss.
//! - [`curation`]: top-loss masking of pseudo labels.
//! - [`metrics`]: AbsRel / delta / RMSE family after alignment.
//! - [`benchmark`]: ordinal pair sampling, ratio-gated model voting and
//!   pair accuracy.
//! - [`annotation`]: the event-sourced triple-check annotation state machine.
//! - [`synth`]: analytic scenes and transformed "fake model" predictions.
//!
//! File formats, manifests, the HTTP service and the CLI live in the
//! `depthkit` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod alignment;
pub mod annotation;
pub mod benchmark;
pub mod curation;
mod error;
pub mod losses;
pub mod map;
pub mod metrics;
pub mod stats;
pub mod synth;

pub use alignment::{align, fit_scale_shift_lsq, fit_scale_shift_robust, AlignmentMethod, AlignmentParams};
pub use error::{Error, Result};
pub use map::{DepthKind, DepthMap, ValidMask};
