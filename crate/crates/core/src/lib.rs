//! Line/space SEM metrology: linescan SNR from histogram fits, sub-pixel
//! edge detection, mean CD and LER/LWR power spectral density analysis with
//! noise-floor removal, plus a synthetic image generator with known truth.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analysis;
pub mod batch;
pub mod config;
pub mod denoise;
pub mod edges;
pub mod error;
pub mod fit;
pub mod image;
pub mod psd;
pub mod snr;
pub mod synthetic;

pub use error::{Error, Result};
