//! Panoramic video metrics.
//!
//! End continuity is the mean absolute difference between the first and
//! last pixel columns, which are neighbours on the sphere; 0 means seamless.
//! The cubemap-weighted score applies any per-image metric to the six cube
//! faces of a video and averages with per-face weights (poles and sides
//! weighted differently, summing to one).

use ndarray::{Array2, Array4, ArrayView3, ArrayView4, Axis};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::sphere_geom::{self, ErpGrid, Face, GeomError};
use crate::tensor::LatentTensor;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("video axis `{axis}` has invalid length {len}")]
    Shape { axis: &'static str, len: usize },
    #[error("video contains a non-finite value")]
    NonFinite,
    #[error("face weights must be finite, non-negative and sum to 1 (sum = {0})")]
    Weights(f64),
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("metric `{metric}` failed on face {face}: {reason}")]
    Face {
        metric: String,
        face: &'static str,
        reason: String,
    },
}

/// Video frames `(F, H, W, C)` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFrames {
    data: Array4<f64>,
}

impl VideoFrames {
    /// Clamps values into `[0, 1]`. Rejects empty axes, `W < 2` and
    /// non-finite values.
    pub fn new(mut data: Array4<f64>) -> Result<Self, MetricError> {
        let names = ["frames", "height", "width", "channels"];
        for (i, &len) in data.shape().iter().enumerate() {
            if len == 0 || (i == 2 && len < 2) {
                return Err(MetricError::Shape {
                    axis: names[i],
                    len,
                });
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        data.mapv_inplace(|v| v.clamp(0.0, 1.0));
        Ok(Self { data })
    }

    /// Reorders a `(C, F, H, W)` latent into frames.
    pub fn from_latent(latent: &LatentTensor) -> Result<Self, MetricError> {
        Self::new(latent.view().permuted_axes([1, 2, 3, 0]).to_owned())
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[3]
    }

    /// Frame `f` as `(H, W, C)`.
    pub fn frame(&self, f: usize) -> ArrayView3<'_, f64> {
        self.data.index_axis(Axis(0), f)
    }

    /// Luma of frame `f`: Rec. 601 weights for 3+ channels (alpha ignored),
    /// the channel mean otherwise.
    pub fn luminance(&self, f: usize) -> Array2<f64> {
        let frame = self.frame(f);
        let c = self.channels();
        Array2::from_shape_fn((self.height(), self.width()), |(y, x)| {
            if c >= 3 {
                0.299 * frame[[y, x, 0]] + 0.587 * frame[[y, x, 1]] + 0.114 * frame[[y, x, 2]]
            } else {
                (0..c).map(|k| frame[[y, x, k]]).sum::<f64>() / c as f64
            }
        })
    }
}

/// Seam discontinuity of a video.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeamReport {
    /// Mean over rows and channels for each frame.
    pub per_frame: Vec<f64>,
    /// Mean over frames, rows and channels jointly.
    pub mean: f64,
    /// Mean over frames and channels for each row.
    pub row_profile: Vec<f64>,
}

/// `|frame[y, 0] − frame[y, W−1]|` per row, averaged over channels.
/// `frame` is `(H, W, C)`.
pub fn seam_profile(frame: ArrayView3<f64>) -> Vec<f64> {
    let (h, w, c) = frame.dim();
    (0..h)
        .map(|y| {
            (0..c)
                .map(|k| (frame[[y, 0, k]] - frame[[y, w - 1, k]]).abs())
                .sum::<f64>()
                / c as f64
        })
        .collect()
}

pub fn end_continuity(v: &VideoFrames) -> SeamReport {
    let profiles: Vec<Vec<f64>> = (0..v.frames())
        .into_par_iter()
        .map(|f| seam_profile(v.frame(f)))
        .collect();
    let h = v.height();
    let per_frame: Vec<f64> = profiles
        .iter()
        .map(|p| p.iter().sum::<f64>() / h as f64)
        .collect();
    let row_profile: Vec<f64> = (0..h)
        .map(|y| profiles.iter().map(|p| p[y]).sum::<f64>() / profiles.len() as f64)
        .collect();
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    SeamReport {
        per_frame,
        mean,
        row_profile,
    }
}

/// Per-face weights, indexed by [`Face::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FaceWeights {
    weights: [f64; 6],
}

impl FaceWeights {
    pub fn new(weights: [f64; 6]) -> Result<Self, MetricError> {
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(MetricError::Weights(sum));
        }
        Ok(Self { weights })
    }

    /// Equal weight on every face.
    pub fn uniform() -> Self {
        Self {
            weights: [1.0 / 6.0; 6],
        }
    }

    pub fn get(&self, face: Face) -> f64 {
        self.weights[face.index()]
    }
}

impl Default for FaceWeights {
    /// Top and bottom `1/3` each, the four sides `1/12` each.
    fn default() -> Self {
        let mut weights = [1.0 / 12.0; 6];
        weights[Face::Top.index()] = 1.0 / 3.0;
        weights[Face::Bottom.index()] = 1.0 / 3.0;
        Self { weights }
    }
}

/// Per-face metric `Φ`. `face` is `(F, C, n, n)`: all frames of one face.
pub trait FaceMetric: Send + Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, face: ArrayView4<f64>) -> Result<f64, String>;
}

/// Mean pixel value.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanValue;

impl FaceMetric for MeanValue {
    fn name(&self) -> &str {
        "mean"
    }

    fn evaluate(&self, face: ArrayView4<f64>) -> Result<f64, String> {
        face.mean().ok_or_else(|| "empty face".to_string())
    }
}

/// Mean absolute difference between horizontally and vertically adjacent pixels.
#[derive(Debug, Clone, Copy, Default)]
pub struct TotalVariation;

impl FaceMetric for TotalVariation {
    fn name(&self) -> &str {
        "total-variation"
    }

    fn evaluate(&self, face: ArrayView4<f64>) -> Result<f64, String> {
        let n = face.shape()[2];
        if n < 2 {
            return Err("face smaller than 2×2".into());
        }
        let (mut sum, mut count) = (0.0, 0usize);
        for frame in face.outer_iter() {
            for img in frame.outer_iter() {
                for j in 0..n {
                    for i in 0..n {
                        if i + 1 < n {
                            sum += (img[[j, i + 1]] - img[[j, i]]).abs();
                            count += 1;
                        }
                        if j + 1 < n {
                            sum += (img[[j + 1, i]] - img[[j, i]]).abs();
                            count += 1;
                        }
                    }
                }
            }
        }
        Ok(sum / count as f64)
    }
}

/// Ignores its input.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMetric(pub f64);

impl FaceMetric for ConstantMetric {
    fn name(&self) -> &str {
        "constant"
    }

    fn evaluate(&self, _face: ArrayView4<f64>) -> Result<f64, String> {
        Ok(self.0)
    }
}

/// Looks up a built-in face metric by name.
pub fn face_metric(name: &str) -> Option<Box<dyn FaceMetric>> {
    match name {
        "mean" => Some(Box::new(MeanValue)),
        "total-variation" => Some(Box::new(TotalVariation)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceScore {
    pub face: &'static str,
    pub weight: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CubemapScore {
    pub score: f64,
    pub faces: Vec<FaceScore>,
}

/// Projects every frame of an ERP video (`W = 2H`) onto the cube, evaluates
/// `metric` on each face video and returns `Σ_f α_f Φ_f`.
pub fn cubemap_weighted_score(
    v: &VideoFrames,
    metric: &dyn FaceMetric,
    weights: &FaceWeights,
    face_size: usize,
) -> Result<CubemapScore, MetricError> {
    let grid = ErpGrid::from_dims(v.height(), v.width())?;
    let cubes: Vec<_> = (0..v.frames())
        .into_par_iter()
        .map(|f| sphere_geom::erp_to_cubemap(sphere_geom::frame_chw(v.data(), f), face_size, &grid))
        .collect::<Result<_, _>>()?;
    let c = v.channels();

    let values: Vec<f64> = Face::ALL
        .par_iter()
        .map(|&face| {
            let mut video = Array4::zeros((cubes.len(), c, face_size, face_size));
            for (mut dst, cube) in video.outer_iter_mut().zip(&cubes) {
                dst.assign(cube.face(face));
            }
            metric
                .evaluate(video.view())
                .map_err(|reason| MetricError::Face {
                    metric: metric.name().to_string(),
                    face: face.name(),
                    reason,
                })
        })
        .collect::<Result<_, _>>()?;

    // base + Σ α(Φ − base) reproduces a constant Φ exactly
    let base = values[0];
    let score = base
        + Face::ALL
            .iter()
            .zip(&values)
            .map(|(&f, &val)| weights.get(f) * (val - base))
            .sum::<f64>();
    let faces = Face::ALL
        .iter()
        .zip(values)
        .map(|(&f, value)| FaceScore {
            face: f.name(),
            weight: weights.get(f),
            value,
        })
        .collect();
    Ok(CubemapScore { score, faces })
}
