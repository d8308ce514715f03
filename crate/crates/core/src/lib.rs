//! Quaternion convolutional networks trained with CTC for phoneme
//! recognition.
//!
//! The crate is organised bottom-up:
//!
//! - [`quaternion`]: scalar quaternion algebra and its real matrix form.
//! - [`tensor`] and [`autodiff`]: dense `f64` tensors and a define-by-run
//!   reverse-mode tape.
//! - [`layers`]: quaternion convolution, dense, activation, pooling, dropout
//!   and polar initialization.
//! - [`ctc`]: the CTC loss, collapse function and best-path decoding.
//! - [`features`]: log mel filterbank front end packed into quaternions.
//! - [`train`]: model assembly, optimizers, checkpoints, datasets and the
//!   training loop.
//! - [`oracle`]: slow independent reference implementations used by the
//!   self-test and the test suites.

pub mod autodiff;
pub mod ctc;
pub mod error;
pub mod features;
pub mod layers;
pub mod oracle;
pub mod params;
pub mod quaternion;
pub mod selftest;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use quaternion::{QuatMatrix4, Quaternion};
pub use tensor::Tensor;
