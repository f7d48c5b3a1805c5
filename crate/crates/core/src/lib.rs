//! Desk-scale laboratory for direction-aware cumulative convolution networks.
//!
//! Everything is built on a small dense-tensor engine with a reverse-mode
//! differentiation tape ([`tensor`]). On top of it sit the two operators this
//! project exists for — the direction-aware block and the cumulative
//! convolution ([`daccn`]) — plus the machinery needed to exercise them inside
//! a complete self-supervised monocular depth pipeline: pinhole geometry and
//! differentiable view synthesis ([`geometry`]), the photometric / smoothness
//! objective ([`losses`]), a miniature encoder-decoder network ([`model`]), a
//! procedural scene generator with exact ground-truth depth ([`synthdata`]),
//! the standard seven-metric depth evaluation ([`metrics`]), and a
//! deterministic training loop ([`trainer`]).
//!
//! Gradients of every operator are validated against central finite
//! differences; see [`tensor::finite_diff_check`] and the [`suite`] module.

pub mod config;
pub mod daccn;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod suite;
pub mod synthdata;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor};
