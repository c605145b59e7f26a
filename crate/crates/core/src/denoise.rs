//! Flow-matching sampling with rotated (longitude-rolled) denoising steps.
//!
//! Time runs from `t = 0` (pure noise `z0`) to `t = 1` (data `z1`) along
//! `z_t = t·z1 + (1−t)·z0`, whose velocity is the constant `z1 − z0`.
//! Sampling integrates a predicted velocity field with explicit Euler steps.
//!
//! A rotated step rolls the latent by `s_k = k mod W` columns, applies the
//! predictor update, and rolls back, so an error the predictor always makes
//! at the same physical column lands on a different longitude every step.

use ndarray::{s, Axis, Zip};
use rayon::prelude::*;
use thiserror::Error;

use crate::noise_field::{self, NoiseError};
use crate::rng;
use crate::tensor::{LatentTensor, ShapeError};

#[derive(Debug, Error, PartialEq)]
pub enum DenoiseError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("predictor `{name}` returned shape {actual:?} for input {expected:?}")]
    PredictorShape {
        name: String,
        expected: [usize; 4],
        actual: [usize; 4],
    },
    #[error("predictor `{name}` failed: {reason}")]
    Predictor { name: String, reason: String },
    #[error("denoising schedule has no steps")]
    EmptySchedule,
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("interpolation time {0} outside [0, 1]")]
    Time(f64),
    #[error("invalid chunking: {0}")]
    Chunking(String),
    #[error("mask must be binary; found {0}")]
    Mask(f64),
    #[error("seam error model: {0}")]
    SeamModel(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Opaque conditioning token handed through to predictors.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Conditioning(pub Option<String>);

/// Velocity predictor `u(z_t, c, t)`.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;

    /// Must return a tensor of the same shape as `latent`.
    fn predict(
        &self,
        latent: &LatentTensor,
        t: f64,
        cond: &Conditioning,
    ) -> Result<LatentTensor, DenoiseError>;
}

/// Ascending timesteps in `[0, 1]` and the column shift used at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseSchedule {
    timesteps: Vec<f64>,
    shifts: Vec<usize>,
}

impl DenoiseSchedule {
    /// `timesteps` are the step boundaries; step `k` integrates from
    /// `timesteps[k]` to `timesteps[k + 1]`.
    pub fn new(timesteps: Vec<f64>) -> Result<Self, DenoiseError> {
        if timesteps.len() < 2 {
            return Err(DenoiseError::EmptySchedule);
        }
        if timesteps.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(DenoiseError::Schedule(
                "timesteps must lie in [0, 1]".into(),
            ));
        }
        if timesteps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DenoiseError::Schedule(
                "timesteps must be strictly ascending".into(),
            ));
        }
        let steps = timesteps.len() - 1;
        Ok(Self {
            timesteps,
            shifts: vec![0; steps],
        })
    }

    /// `steps` uniform Euler steps from 0 to 1.
    pub fn uniform(steps: usize) -> Result<Self, DenoiseError> {
        if steps == 0 {
            return Err(DenoiseError::EmptySchedule);
        }
        Self::new((0..=steps).map(|k| k as f64 / steps as f64).collect())
    }

    /// Same timesteps with `s_k = k mod width` (or all zero when `width` is `None`).
    pub fn with_rotation(&self, width: Option<usize>) -> Self {
        let shifts = (0..self.steps())
            .map(|k| width.map_or(0, |w| k % w.max(1)))
            .collect();
        Self {
            timesteps: self.timesteps.clone(),
            shifts,
        }
    }

    pub fn steps(&self) -> usize {
        self.shifts.len()
    }

    pub fn timesteps(&self) -> &[f64] {
        &self.timesteps
    }

    pub fn shifts(&self) -> &[usize] {
        &self.shifts
    }

    pub fn time(&self, k: usize) -> f64 {
        self.timesteps[k]
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.timesteps[k + 1] - self.timesteps[k]
    }

    pub fn shift(&self, k: usize) -> usize {
        self.shifts[k]
    }

    pub fn is_rotated(&self) -> bool {
        self.shifts.iter().any(|&s| s != 0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DenoiseOptions {
    pub rotated: bool,
    pub latitude_aware_init: bool,
}

/// `t·z1 + (1−t)·z0`.
pub fn flow_interpolate(
    z0: &LatentTensor,
    z1: &LatentTensor,
    t: f64,
) -> Result<LatentTensor, DenoiseError> {
    z0.ensure_same_shape(z1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(DenoiseError::Time(t));
    }
    let data = Zip::from(z0.data())
        .and(z1.data())
        .map_collect(|&a, &b| t * b + (1.0 - t) * a);
    Ok(LatentTensor::new(data)?)
}

/// `z1 − z0`.
pub fn flow_velocity(z0: &LatentTensor, z1: &LatentTensor) -> Result<LatentTensor, DenoiseError> {
    z0.ensure_same_shape(z1)?;
    Ok(LatentTensor::new(z1.data() - z0.data())?)
}

/// Mean squared error over all elements.
pub fn flow_loss(pred_v: &LatentTensor, true_v: &LatentTensor) -> Result<f64, DenoiseError> {
    pred_v.ensure_same_shape(true_v)?;
    let sum: f64 = pred_v
        .data()
        .iter()
        .zip(true_v.data().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / pred_v.len() as f64)
}

/// Rolls the width axis: output column `x` is input column `(x − s) mod W`.
pub fn circular_shift(z: &LatentTensor, s: i64) -> LatentTensor {
    let w = z.width();
    let s = s.rem_euclid(w as i64) as usize;
    if s == 0 {
        return z.clone();
    }
    let src = z.data();
    let mut out = src.clone();
    out.slice_mut(s![.., .., .., s..])
        .assign(&src.slice(s![.., .., .., ..w - s]));
    out.slice_mut(s![.., .., .., ..s])
        .assign(&src.slice(s![.., .., .., w - s..]));
    LatentTensor::new(out).expect("shape unchanged")
}

fn checked_predict(
    predictor: &dyn Predictor,
    z: &LatentTensor,
    t: f64,
    cond: &Conditioning,
) -> Result<LatentTensor, DenoiseError> {
    let v = predictor.predict(z, t, cond)?;
    if v.shape() != z.shape() {
        return Err(DenoiseError::PredictorShape {
            name: predictor.name().to_string(),
            expected: z.shape(),
            actual: v.shape(),
        });
    }
    Ok(v)
}

/// One Euler step `Z + dt·u(Z, t)` sandwiched between a roll by the step's
/// shift and the inverse roll.
pub fn rotated_denoise_step(
    z: &LatentTensor,
    step: usize,
    schedule: &DenoiseSchedule,
    predictor: &dyn Predictor,
    cond: &Conditioning,
) -> Result<LatentTensor, DenoiseError> {
    if step >= schedule.steps() {
        return Err(DenoiseError::Schedule(format!(
            "step {step} outside schedule of {} steps",
            schedule.steps()
        )));
    }
    let shift = schedule.shift(step) as i64;
    let t = schedule.time(step);
    let dt = schedule.dt(step);
    let mut rolled = circular_shift(z, shift);
    let v = checked_predict(predictor, &rolled, t, cond)?;
    rolled.data_mut().scaled_add(dt, v.data());
    Ok(circular_shift(&rolled, -shift))
}

/// Full Euler integration over the schedule.
pub fn run_denoise(
    z_init: &LatentTensor,
    schedule: &DenoiseSchedule,
    predictor: &dyn Predictor,
    cond: &Conditioning,
    options: DenoiseOptions,
) -> Result<LatentTensor, DenoiseError> {
    let schedule = schedule.with_rotation(options.rotated.then_some(z_init.width()));
    let mut z = if options.latitude_aware_init {
        noise_field::remap_latent(z_init)?
    } else {
        z_init.clone()
    };
    for k in 0..schedule.steps() {
        z = rotated_denoise_step(&z, k, &schedule, predictor, cond)?;
    }
    Ok(z)
}

/// Per-step prediction error profile `ε_t(x)` over logical columns.
#[derive(Debug, Clone, PartialEq)]
pub enum SeamErrorModel {
    /// All mass `magnitude` on one logical column at every step.
    Impulse { column: usize, magnitude: f64 },
    /// The same error everywhere.
    Uniform { level: f64 },
    /// Explicit profiles, cycled if there are fewer than `T`.
    Profiles(Vec<Vec<f64>>),
}

impl SeamErrorModel {
    pub fn seam_impulse() -> Self {
        SeamErrorModel::Impulse {
            column: 0,
            magnitude: 1.0,
        }
    }

    /// `ε_t` for step `t ≥ 1` on a width-`w` latent.
    pub fn profile(&self, t: usize, w: usize) -> Result<Vec<f64>, DenoiseError> {
        let p = match self {
            SeamErrorModel::Impulse { column, magnitude } => {
                let mut p = vec![0.0; w];
                p[column % w] = *magnitude;
                p
            }
            SeamErrorModel::Uniform { level } => vec![*level; w],
            SeamErrorModel::Profiles(ps) => {
                if ps.is_empty() {
                    return Err(DenoiseError::SeamModel("no profiles".into()));
                }
                let p = &ps[(t - 1) % ps.len()];
                if p.len() != w {
                    return Err(DenoiseError::SeamModel(format!(
                        "profile has {} columns, latent has {w}",
                        p.len()
                    )));
                }
                p.clone()
            }
        };
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DenoiseError::SeamModel(
                "errors must be finite and non-negative".into(),
            ));
        }
        Ok(p)
    }
}

/// `E_T(x) = Σ_{t=1..T} ε_t((x + s_t) mod W)` with `s_t = t mod W` when
/// rotated and `0` otherwise.
pub fn accumulate_seam_error(
    model: &SeamErrorModel,
    steps: usize,
    width: usize,
    rotated: bool,
) -> Result<Vec<f64>, DenoiseError> {
    if steps == 0 {
        return Err(DenoiseError::EmptySchedule);
    }
    if width == 0 {
        return Err(DenoiseError::SeamModel("width must be at least 1".into()));
    }
    let mut acc = vec![0.0; width];
    for t in 1..=steps {
        let eps = model.profile(t, width)?;
        let shift = if rotated { t % width } else { 0 };
        for (x, e) in acc.iter_mut().enumerate() {
            *e += eps[(x + shift) % width];
        }
    }
    Ok(acc)
}

/// Blend weights of one temporal chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkWeights {
    pub start: usize,
    /// One weight per frame of the chunk, already normalised across chunks.
    pub weights: Vec<f64>,
}

/// Overlapping chunk layout with linear cross-fade weights.
///
/// Chunks start every `chunk_len − overlap` frames; the last one is aligned
/// to the end of the video. Inside an overlap the later chunk's weight rises
/// linearly and the earlier one's falls, and the weights of every frame sum
/// to one.
pub fn blend_weights(
    frames: usize,
    chunk_len: usize,
    overlap: usize,
) -> Result<Vec<ChunkWeights>, DenoiseError> {
    if chunk_len == 0 || chunk_len > frames {
        return Err(DenoiseError::Chunking(format!(
            "chunk length {chunk_len} must lie in 1..={frames}"
        )));
    }
    if chunk_len < frames && (overlap == 0 || overlap >= chunk_len) {
        return Err(DenoiseError::Chunking(format!(
            "overlap {overlap} must lie in 1..{chunk_len}"
        )));
    }
    let stride = chunk_len - overlap.min(chunk_len - 1);
    let mut starts = vec![0];
    while starts.last().unwrap() + chunk_len < frames {
        let next = (starts.last().unwrap() + stride).min(frames - chunk_len);
        starts.push(next);
    }

    let mut raw: Vec<Vec<f64>> = starts
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let ov_prev = if i > 0 {
                (starts[i - 1] + chunk_len).saturating_sub(start)
            } else {
                0
            };
            let ov_next = if i + 1 < starts.len() {
                (start + chunk_len).saturating_sub(starts[i + 1])
            } else {
                0
            };
            (0..chunk_len)
                .map(|j| {
                    let rise = if j < ov_prev {
                        (j + 1) as f64 / (ov_prev + 1) as f64
                    } else {
                        1.0
                    };
                    let fall = if j + ov_next >= chunk_len {
                        (chunk_len - j) as f64 / (ov_next + 1) as f64
                    } else {
                        1.0
                    };
                    rise.min(fall)
                })
                .collect()
        })
        .collect();

    let mut totals = vec![0.0; frames];
    for (w, &start) in raw.iter().zip(&starts) {
        for (j, v) in w.iter().enumerate() {
            totals[start + j] += v;
        }
    }
    for (w, &start) in raw.iter_mut().zip(&starts) {
        for (j, v) in w.iter_mut().enumerate() {
            *v /= totals[start + j];
        }
    }
    Ok(starts
        .into_iter()
        .zip(raw)
        .map(|(start, weights)| ChunkWeights { start, weights })
        .collect())
}

/// Long-video sampling: at every step each temporal chunk is updated on its
/// own and overlapping frames are cross-faded.
pub fn windowed_long_denoise(
    z_long: &LatentTensor,
    chunk_len: usize,
    overlap: usize,
    schedule: &DenoiseSchedule,
    predictor: &dyn Predictor,
    cond: &Conditioning,
    options: DenoiseOptions,
) -> Result<LatentTensor, DenoiseError> {
    let frames = z_long.frames();
    let layout = blend_weights(frames, chunk_len, overlap)?;
    let schedule = schedule.with_rotation(options.rotated.then_some(z_long.width()));
    let mut z = if options.latitude_aware_init {
        noise_field::remap_latent(z_long)?
    } else {
        z_long.clone()
    };
    for k in 0..schedule.steps() {
        let updated: Vec<LatentTensor> = layout
            .par_iter()
            .map(|chunk| {
                let part = z.frame_range(chunk.start, chunk.start + chunk_len)?;
                rotated_denoise_step(&part, k, &schedule, predictor, cond)
            })
            .collect::<Result<_, _>>()?;
        z = blend_chunks(&z, &layout, &updated);
    }
    Ok(z)
}

/// Running weighted mean over the chunks covering each frame; equal chunk
/// values blend to exactly that value.
fn blend_chunks(
    template: &LatentTensor,
    layout: &[ChunkWeights],
    chunks: &[LatentTensor],
) -> LatentTensor {
    let mut out = template.clone();
    let mut seen = vec![0.0f64; template.frames()];
    for (chunk, values) in layout.iter().zip(chunks) {
        for (j, &w) in chunk.weights.iter().enumerate() {
            let f = chunk.start + j;
            let src = values.data().index_axis(Axis(1), j);
            let mut dst = out.data_mut().index_axis_mut(Axis(1), f);
            if seen[f] == 0.0 {
                dst.assign(&src);
                seen[f] = w;
            } else {
                seen[f] += w;
                let alpha = w / seen[f];
                Zip::from(&mut dst)
                    .and(&src)
                    .for_each(|d, &s| *d += alpha * (s - *d));
            }
        }
    }
    out
}

/// Masked (in/outpainting) sampling. Elements where `mask == 1` are generated;
/// everywhere else the state is reset to `flow_interpolate(noise, reference, t)`
/// before each step, and the result equals `reference` there exactly.
#[allow(clippy::too_many_arguments)]
pub fn masked_denoise(
    z: &LatentTensor,
    mask: &LatentTensor,
    reference: &LatentTensor,
    schedule: &DenoiseSchedule,
    predictor: &dyn Predictor,
    cond: &Conditioning,
    noise_seed: u64,
    options: DenoiseOptions,
) -> Result<LatentTensor, DenoiseError> {
    z.ensure_same_shape(mask)?;
    z.ensure_same_shape(reference)?;
    if let Some(&bad) = mask.data().iter().find(|&&m| m != 0.0 && m != 1.0) {
        return Err(DenoiseError::Mask(bad));
    }
    let schedule = schedule.with_rotation(options.rotated.then_some(z.width()));
    let noise = LatentTensor::new(rng::gaussian_array(z.shape(), noise_seed))?;
    let known = mask.data().iter().any(|&m| m == 0.0);
    let mut state = if options.latitude_aware_init {
        noise_field::remap_latent(z)?
    } else {
        z.clone()
    };
    for k in 0..schedule.steps() {
        if known {
            let t = schedule.time(k);
            Zip::from(state.data_mut())
                .and(mask.data())
                .and(noise.data())
                .and(reference.data())
                .for_each(|s, &m, &n, &r| {
                    if m == 0.0 {
                        *s = t * r + (1.0 - t) * n;
                    }
                });
        }
        state = rotated_denoise_step(&state, k, &schedule, predictor, cond)?;
    }
    Zip::from(state.data_mut())
        .and(mask.data())
        .and(reference.data())
        .for_each(|s, &m, &r| {
            if m == 0.0 {
                *s = r;
            }
        });
    Ok(state)
}
