//! Numerics for seam-free equirectangular (360°) video generation.
//!
//! The crate is model-agnostic: the noise predictor and the latent decoder
//! are plug-in traits, so every mechanism can be exercised with analytic
//! stand-ins.
//!
//! - [`sphere_geom`]: ERP pixel/sphere algebra, cubemap and perspective reprojection.
//! - [`noise_field`]: seeded Gaussian fields, latitude-aware remapping, spectral support.
//! - [`denoise`]: flow-matching arithmetic, rotated Euler sampling, seam-error simulation,
//!   long-video windowing and masked (in/outpainting) denoising.
//! - [`decode_pad`]: circular padding, center cropping and padded decoding.
//! - [`metrics`]: end-continuity and cubemap-weighted scores.
//! - [`curator`]: clip segmentation, motion scoring and the record filtering pipeline.
//! - [`io`]: raw tensor files, PNG frame sequences and JSONL record streams.

pub mod curator;
pub mod decode_pad;
pub mod denoise;
pub mod io;
pub mod metrics;
pub mod noise_field;
pub mod plugins;
pub mod rng;
pub mod sphere_geom;
pub mod tensor;

mod error;

pub use error::{Error, Result};
pub use tensor::LatentTensor;
