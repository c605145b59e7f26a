//! Reproducible Gaussian streams.
//!
//! Generator identifier: [`GENERATOR_ID`]. The root seed is expanded into a
//! ChaCha20 key with `SeedableRng::seed_from_u64`; every image row
//! `(channel, frame, row)` reads from its own ChaCha20 stream
//! (`stream = (channel * frames + frame) * height + row`) starting at word 0,
//! and draws standard normals with the `rand_distr` ziggurat sampler in
//! column order. Rows are therefore independent of how generation is
//! scheduled across threads.

use ndarray::{Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub const GENERATOR_ID: &str = "chacha20-row-streams/ziggurat-normal/v1";

/// The generator for a single stream of a root seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(0);
    rng
}

/// I.i.d. standard-normal tensor of shape `[c, f, h, w]`.
pub fn gaussian_array(shape: [usize; 4], seed: u64) -> Array4<f64> {
    let [_, f, h, w] = shape;
    let mut out = Array4::<f64>::zeros(shape);
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(ci, mut chan)| {
            for (fi, mut frame) in chan.axis_iter_mut(Axis(0)).enumerate() {
                for (yi, mut row) in frame.axis_iter_mut(Axis(0)).enumerate() {
                    let stream = ((ci * f + fi) * h + yi) as u64;
                    let mut rng = stream_rng(seed, stream);
                    for v in row.iter_mut().take(w) {
                        *v = rng.sample(StandardNormal);
                    }
                }
            }
        });
    out
}

/// Mixes a seed with a 64-bit tag (splitmix64 finaliser), for deriving
/// sub-seeds such as per-step predictor noise.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
