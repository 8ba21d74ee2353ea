//! # glmalign
//!
//! Min-norm generalized linear regression over random-feature (RF) and
//! neural-tangent (NTK) feature maps, together with the machinery needed to
//! study how much a trained interpolator leaks about its training labels:
//!
//! * [`linops`]: Gram matrices, row-space projectors and their exact
//!   update / leave-one-out identities.
//! * [`hermite`]: normalized probabilists' Hermite polynomials, Hermite
//!   coefficients of activations and the alignment constants derived from them.
//! * [`featuremaps`]: RF and NTK feature maps evaluated in kernel space.
//! * [`data`]: synthetic split-block datasets, masking, noise frames and file IO.
//! * [`trainer`]: min-norm interpolation, leave-one-out refits, stability and
//!   generalization error.
//! * [`alignment`]: feature alignment between a query and a training sample,
//!   Monte-Carlo estimates and the centering / linearization diagnostics.
//! * [`attack`]: the masked-query label reconstruction attack.
//! * [`harness`]: seeded sweeps, CSV output and the `verify` suite.
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! ```bash
//! cargo run --release --example stability_identity
//! cargo run --release --example masked_attack
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod attack;
pub mod data;
mod error;
pub mod featuremaps;
pub mod harness;
pub mod hermite;
pub mod linops;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
