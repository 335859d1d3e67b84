//! Autoencoder-based CSI feedback for massive MIMO, trained with an auxiliary
//! jigsaw-puzzle task.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: a small reverse-mode differentiation engine, the layers the
//!   reference autoencoder needs, an Adam optimizer and a checkpoint format.
//! * [`synth`]: synthetic sparse multipath channels, the angular-delay
//!   transform, normalization and dataset files.
//! * [`jigsaw`]: tile split/shuffle, permutation sampling and the
//!   permutation-prediction loss.
//! * [`model`]: encoder, decoder and permutation head.
//! * [`trainer`]: baseline, jigsaw-aided and alternative training objectives.
//! * [`eval`]: NMSE evaluation, sweeps, strategy comparison and SVG plots.

mod binio;
pub mod error;
pub mod eval;
pub mod jigsaw;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
