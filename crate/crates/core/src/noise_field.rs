//! Gaussian noise fields on the ERP grid and latitude-aware remapping.
//!
//! A fresh field is i.i.d. standard normal per pixel. Remapping squeezes each
//! row horizontally about the grid center by `cos θ`, so that the number of
//! independent source samples feeding a row is about `2R cos θ`, matching
//! the circumference of that latitude circle. Values between lattice points
//! use the variance-preserving interpolant `sgn(BI(P)) · sqrt(BI(P²))`, which
//! keeps every output marginally zero-mean with unit variance.

use std::sync::Arc;

use ndarray::{s, Array3, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

use crate::rng;
use crate::sphere_geom::ErpGrid;
use crate::tensor::LatentTensor;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("channel count must be at least 1")]
    NoChannels,
    #[error("field data is {actual:?} but the grid expects (C, {height}, {width})")]
    Shape {
        actual: Vec<usize>,
        height: usize,
        width: usize,
    },
    #[error("energy threshold {0} must lie strictly between 0 and 1")]
    Threshold(f64),
    #[error("row has zero spectral energy")]
    ZeroEnergy,
    #[error("row is empty")]
    EmptyRow,
    #[error("latent width {width} is not twice its height {height}")]
    NotErp { height: usize, width: usize },
}

/// A `(C, R, 2R)` noise field with the seed it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    data: Array3<f64>,
    grid: ErpGrid,
    seed: u64,
}

impl NoiseField {
    pub fn new(data: Array3<f64>, grid: ErpGrid, seed: u64) -> Result<Self, NoiseError> {
        let shape = data.shape();
        if shape[0] == 0 {
            return Err(NoiseError::NoChannels);
        }
        if shape[1] != grid.height() || shape[2] != grid.width() {
            return Err(NoiseError::Shape {
                actual: shape.to_vec(),
                height: grid.height(),
                width: grid.width(),
            });
        }
        Ok(Self { data, grid, seed })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn grid(&self) -> ErpGrid {
        self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    /// The field as a single-frame latent `(C, 1, R, 2R)`.
    pub fn to_latent(&self) -> LatentTensor {
        LatentTensor::new(self.data.clone().insert_axis(Axis(1)))
            .expect("noise fields are never empty")
    }
}

/// I.i.d. standard-normal field, deterministic in `seed`.
pub fn sample_iid_gaussian(
    grid: ErpGrid,
    channels: usize,
    seed: u64,
) -> Result<NoiseField, NoiseError> {
    if channels == 0 {
        return Err(NoiseError::NoChannels);
    }
    let data = rng::gaussian_array([channels, 1, grid.height(), grid.width()], seed)
        .index_axis_move(Axis(1), 0);
    NoiseField::new(data, grid, seed)
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `sgn(BI(P)) · sqrt(BI(P²))` on one `(H, W)` plane; `x` wraps, `y` is clamped.
pub fn variance_preserving_sample(plane: ArrayView2<f64>, x: f64, y: f64) -> f64 {
    let (h, w) = (plane.shape()[0], plane.shape()[1]);
    let x = x.rem_euclid(w as f64);
    let x0f = x.floor();
    let fx = x - x0f;
    let x0 = (x0f as usize) % w;
    let x1 = (x0 + 1) % w;
    let y = y.clamp(0.0, (h - 1) as f64);
    let y0 = y.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let fy = y - y0 as f64;
    let weights = [
        ((1.0 - fx) * (1.0 - fy), plane[[y0, x0]]),
        (fx * (1.0 - fy), plane[[y0, x1]]),
        ((1.0 - fx) * fy, plane[[y1, x0]]),
        (fx * fy, plane[[y1, x1]]),
    ];
    let mut lin = 0.0;
    let mut sq = 0.0;
    for (wgt, p) in weights {
        lin += wgt * p;
        sq += wgt * p * p;
    }
    sgn(lin) * sq.sqrt()
}

/// Per-channel variance-preserving interpolation at `(x, y)`.
pub fn variance_preserving_interp(field: &NoiseField, x: f64, y: f64) -> Vec<f64> {
    field
        .data
        .axis_iter(Axis(0))
        .map(|plane| variance_preserving_sample(plane, x, y))
        .collect()
}

/// Source column sampled by output column `x` of row `y`.
pub fn remap_source_x(grid: &ErpGrid, x: usize, y: usize) -> f64 {
    let r = grid.radius() as f64;
    r + (x as f64 - r) * grid.row_latitude(y).cos()
}

fn remap_row(src: ArrayView1<f64>, grid: &ErpGrid, y: usize, out: &mut [f64]) {
    let w = src.len();
    let cos = grid.row_latitude(y).cos();
    let r = grid.radius() as f64;
    for (x, o) in out.iter_mut().enumerate() {
        let xs = (r + (x as f64 - r) * cos).rem_euclid(w as f64);
        let x0f = xs.floor();
        let fx = xs - x0f;
        let x0 = (x0f as usize) % w;
        let x1 = (x0 + 1) % w;
        let (a, b) = (src[x0], src[x1]);
        let lin = (1.0 - fx) * a + fx * b;
        let sq = (1.0 - fx) * a * a + fx * b * b;
        *o = sgn(lin) * sq.sqrt();
    }
}

/// Latitude-aware remap of every channel of an `(C, R, 2R)` array.
fn remap_planes(data: &Array3<f64>, grid: &ErpGrid) -> Array3<f64> {
    let mut out = Array3::zeros(data.raw_dim());
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(data.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut dst, src)| {
            for y in 0..grid.height() {
                let mut row = vec![0.0; grid.width()];
                remap_row(src.row(y), grid, y, &mut row);
                dst.row_mut(y).assign(&ArrayView1::from(&row));
            }
        });
    out
}

/// `P'(x, y) = Interp_P(R + (x − R) cos θ_y, y)` for every channel.
pub fn latitude_aware_remap(field: &NoiseField) -> NoiseField {
    NoiseField {
        data: remap_planes(&field.data, &field.grid),
        grid: field.grid,
        seed: field.seed,
    }
}

/// Applies the remap to every `(channel, frame)` plane of an ERP latent.
pub fn remap_latent(latent: &LatentTensor) -> Result<LatentTensor, NoiseError> {
    let (h, w) = (latent.height(), latent.width());
    let grid = ErpGrid::new(h).map_err(|_| NoiseError::NotErp {
        height: h,
        width: w,
    })?;
    if w != grid.width() {
        return Err(NoiseError::NotErp {
            height: h,
            width: w,
        });
    }
    let mut out = latent.clone();
    for f in 0..latent.frames() {
        let planes = latent.data().slice(s![.., f, .., ..]).to_owned();
        let remapped = remap_planes(&planes, &grid);
        out.data_mut()
            .slice_mut(s![.., f, .., ..])
            .assign(&remapped);
    }
    Ok(out)
}

/// Spectral support of one row: the smallest number of lowest-|frequency|
/// DFT bins (DC, then each ±k pair) holding at least `energy_threshold` of
/// the total energy.
pub fn row_spectrum_support(row: &[f64], energy_threshold: f64) -> Result<usize, NoiseError> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(row.len().max(1));
    row_support_with(&fft, row, energy_threshold)
}

fn row_support_with(
    fft: &Arc<dyn rustfft::Fft<f64>>,
    row: &[f64],
    energy_threshold: f64,
) -> Result<usize, NoiseError> {
    if !(energy_threshold > 0.0 && energy_threshold < 1.0) {
        return Err(NoiseError::Threshold(energy_threshold));
    }
    if row.is_empty() {
        return Err(NoiseError::EmptyRow);
    }
    let n = row.len();
    let mut buf: Vec<Complex<f64>> = row.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let energy: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = energy.iter().sum();
    if total <= 0.0 {
        return Err(NoiseError::ZeroEnergy);
    }
    let target = energy_threshold * total;
    let mut acc = energy[0];
    let mut count = 1;
    let mut k = 1;
    while acc < target && k <= n / 2 {
        acc += energy[k];
        count += 1;
        if n - k != k {
            acc += energy[n - k];
            count += 1;
        }
        k += 1;
    }
    Ok(count)
}

/// Measured vs. predicted horizontal bandwidth of one row.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectrumReport {
    pub row_index: usize,
    pub latitude: f64,
    /// Support averaged over channels (and fields, for ensembles).
    pub measured_support: f64,
    /// `2R cos θ`.
    pub predicted_support: f64,
}

/// Row-wise spectral support of a `(C, R, 2R)` array, averaged over channels.
pub fn spectrum_reports(
    data: &Array3<f64>,
    grid: &ErpGrid,
    energy_threshold: f64,
) -> Result<Vec<SpectrumReport>, NoiseError> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(grid.width());
    let channels = data.shape()[0];
    (0..grid.height())
        .map(|y| {
            let mut total = 0usize;
            for c in 0..channels {
                let row: Vec<f64> = data.slice(s![c, y, ..]).to_vec();
                total += row_support_with(&fft, &row, energy_threshold)?;
            }
            let lat = grid.row_latitude(y);
            Ok(SpectrumReport {
                row_index: y,
                latitude: lat,
                measured_support: total as f64 / channels as f64,
                predicted_support: 2.0 * grid.radius() as f64 * lat.cos(),
            })
        })
        .collect()
}

/// Sample mean and unbiased sample variance.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

impl Moments {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        // Welford
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for v in values {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        let variance = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        Self {
            mean,
            variance,
            count: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FieldStatistics {
    pub rows: Vec<Moments>,
    pub global: Moments,
}

/// Per-row (over channels and columns) and global moments.
pub fn field_statistics(field: &NoiseField) -> FieldStatistics {
    let data = &field.data;
    let rows = (0..data.shape()[1])
        .map(|y| Moments::of(data.slice(s![.., y, ..]).iter().copied()))
        .collect();
    FieldStatistics {
        rows,
        global: Moments::of(data.iter().copied()),
    }
}
