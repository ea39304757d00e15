//! Octave-convolution networks for univariate time series classification.
//!
//! The crate provides, bottom to top:
//!
//! * a small reverse-mode autodiff engine over dense tensors
//!   ([`tensor`], [`tape`], [`ops`]);
//! * 1D octave convolution blocks operating on high/low frequency pairs
//!   ([`octconv`]);
//! * builders for eight classifier architectures: FCN, ResNet, LSTM-FCN,
//!   ALSTM-FCN and their octave variants ([`model`]);
//! * dataset loading, preprocessing and synthesis ([`data`]);
//! * a multi-seed training and evaluation harness ([`train`], [`runs`]);
//! * Wilcoxon signed-rank comparison with Holm correction and critical
//!   difference diagrams ([`stats`], [`cd_diagram`]);
//! * feature-extraction ablation with a linear max-margin probe
//!   ([`ablation`]);
//! * finite-difference gradient verification ([`gradcheck`]) and the
//!   `oct1d` command line in [`cli`].

pub mod ablation;
pub mod cd_diagram;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod octconv;
pub mod ops;
pub mod runs;
pub mod snapshot;
pub mod stats;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tape::{Tape, Var};
pub use tensor::{Real, Tensor};
