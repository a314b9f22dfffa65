//! Sparse 3D imaging for near-field array SAR.
//!
//! The crate covers the stepped-frequency measurement model, proximal and
//! denoiser-driven ADMM/GAP reconstruction, image-quality metrics, the on-disk
//! formats and an experiment harness that sweeps sampling rate and SNR.

pub mod denoise;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod prox;
pub mod solvers;

pub use error::{Error, Result};
