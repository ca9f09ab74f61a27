//! Iterative latent trajectory planning against pluggable world generators
//! and value evaluators.
//!
//! The crate is organised bottom-up:
//!
//! - [`stream`] and [`gaussian`]: seeded random streams and the diagonal
//!   Gaussian search distributions the planner adapts.
//! - [`worldgen`]: trajectory spaces, a point-mass world with a renderer, and
//!   an affine-manifold generator used by the geometry experiments.
//! - [`valuation`]: dense rewards, discounted returns, value samples and SNR.
//! - [`flowmatch`]: a small flow-matching trainer with exact gradients.
//! - [`planner`]: elite-selection refinement of the latent distributions.
//! - [`geolab`]: Monte Carlo feasible-mass experiments.
//! - [`harness`]: configuration, experiment commands, CSV/JSON output.

pub mod episode;
pub mod flowmatch;
pub mod geolab;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod planner;
pub mod stream;
pub mod valuation;
pub mod worldgen;

pub use error::{Error, Result};
