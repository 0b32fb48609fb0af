//! Octic (D8) equivariant vision-transformer kernels.
//!
//! The crate is organised bottom-up:
//!
//! - [`group`]: D8, its irreps and the fast Fourier transform on D8.
//! - [`steerable`]: group actions on images, tokens and channels, and the
//!   Reynolds projectors used to build constrained parameters.
//! - [`layers`]: equivariant and standard transformer layers with VJPs.
//! - [`invariants`]: the six invariantization maps and the invariant head.
//! - [`model`]: D8 / I8 / H8 / standard model families, training.
//! - [`analysis`]: MAC counting, arithmetic intensity and microbenchmarks.
//! - [`check`]: the property suites run by `octic check`.
//! - [`config`]: the `key = value` run configuration and its hash.

pub mod analysis;
pub mod check;
pub mod config;
pub mod data;
pub mod error;
pub mod group;
pub mod invariants;
pub mod layers;
pub mod model;
pub mod steerable;
pub mod tensor;

pub use error::{OcticError, Result};
