//! Circular padding around a pluggable decoder.
//!
//! A decoder that pads its input with zeros sees a hard edge at both ends of
//! the longitude axis, so the two borders of its output disagree. Padding the
//! latent with `r` wrapped columns per side before decoding and cropping
//! `u·r` output columns afterwards gives every output pixel the same context
//! it would have on the infinitely repeated signal, provided `r` covers the
//! decoder's horizontal receptive half-width.

use ndarray::{s, Array2, Array4, ArrayView2, ArrayViewMut2, Axis};
use rayon::prelude::*;
use thiserror::Error;

use crate::tensor::{LatentTensor, ShapeError};

/// Default padding radius in latent columns; covers the 5×5 reference kernel.
pub const DEFAULT_PAD: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("padding radius {r} exceeds latent width {width}")]
    PadTooWide { r: usize, width: usize },
    #[error("cannot crop width {width} to {target}")]
    CropTooWide { width: usize, target: usize },
    #[error("crop from {width} to {target} leaves unequal margins")]
    OddMargin { width: usize, target: usize },
    #[error("kernel extents must be odd and non-zero, got {rows}×{cols}")]
    EvenKernel { rows: usize, cols: usize },
    #[error("kernel contains non-finite values")]
    NonFiniteKernel,
    #[error("upsample factor must be at least 1")]
    ZeroUpsample,
    #[error("decoder `{name}` produced width {actual}, expected {expected}")]
    DecoderWidth {
        name: String,
        expected: usize,
        actual: usize,
    },
    #[error("decoder `{name}` failed: {reason}")]
    Decoder { name: String, reason: String },
}

/// Latent-to-pixel decoder. The output width must be `upsample() ·` the input
/// width, and decoding must be deterministic.
pub trait Decoder: Send + Sync {
    fn name(&self) -> &str;
    fn upsample(&self) -> usize;
    fn decode(&self, latent: &LatentTensor) -> Result<LatentTensor, DecodeError>;
}

/// Output column `x` holds input column `(x − r) mod W`; width becomes `W + 2r`.
pub fn circular_pad(z: &LatentTensor, r: usize) -> Result<LatentTensor, DecodeError> {
    let w = z.width();
    if r > w {
        return Err(DecodeError::PadTooWide { r, width: w });
    }
    if r == 0 {
        return Ok(z.clone());
    }
    let [c, f, h, _] = z.shape();
    let src = z.data();
    let mut out = Array4::zeros([c, f, h, w + 2 * r]);
    out.slice_mut(s![.., .., .., ..r])
        .assign(&src.slice(s![.., .., .., w - r..]));
    out.slice_mut(s![.., .., .., r..r + w]).assign(src);
    out.slice_mut(s![.., .., .., r + w..])
        .assign(&src.slice(s![.., .., .., ..r]));
    Ok(LatentTensor::new(out)?)
}

/// Removes equal margins from both ends of the width axis.
pub fn center_crop(
    frames: &LatentTensor,
    target_width: usize,
) -> Result<LatentTensor, DecodeError> {
    let w = frames.width();
    if target_width == 0 || target_width > w {
        return Err(DecodeError::CropTooWide {
            width: w,
            target: target_width,
        });
    }
    if !(w - target_width).is_multiple_of(2) {
        return Err(DecodeError::OddMargin {
            width: w,
            target: target_width,
        });
    }
    let m = (w - target_width) / 2;
    Ok(LatentTensor::new(
        frames
            .data()
            .slice(s![.., .., .., m..m + target_width])
            .to_owned(),
    )?)
}

/// `center_crop(decoder(circular_pad(z, r)), u·W)`.
pub fn padded_decode(
    z: &LatentTensor,
    decoder: &dyn Decoder,
    r: usize,
) -> Result<LatentTensor, DecodeError> {
    let padded = circular_pad(z, r)?;
    let decoded = decoder.decode(&padded)?;
    let u = decoder.upsample();
    let expected = u * padded.width();
    if decoded.width() != expected {
        return Err(DecodeError::DecoderWidth {
            name: decoder.name().to_string(),
            expected,
            actual: decoded.width(),
        });
    }
    center_crop(&decoded, u * z.width())
}

/// Passes the latent through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDecoder;

impl Decoder for IdentityDecoder {
    fn name(&self) -> &str {
        "identity"
    }

    fn upsample(&self) -> usize {
        1
    }

    fn decode(&self, latent: &LatentTensor) -> Result<LatentTensor, DecodeError> {
        Ok(latent.clone())
    }
}

/// How the convolution treats columns beyond the width axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizontalBoundary {
    /// Zeros beyond the edge, like an ordinary image decoder.
    Zero,
    /// The width axis wraps; decoding the infinitely repeated signal.
    Wrap,
}

/// 2-D correlation with an odd kernel followed by nearest-neighbour
/// upsampling by `u` along height and width. Rows are always zero padded.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConvDecoder {
    kernel: Array2<f64>,
    upsample: usize,
    boundary: HorizontalBoundary,
}

impl ReferenceConvDecoder {
    pub fn new(kernel: Array2<f64>, upsample: usize) -> Result<Self, DecodeError> {
        Self::with_boundary(kernel, upsample, HorizontalBoundary::Zero)
    }

    /// The same decoder on the wrapped signal; the reference that padded
    /// decoding must reproduce.
    pub fn circular(kernel: Array2<f64>, upsample: usize) -> Result<Self, DecodeError> {
        Self::with_boundary(kernel, upsample, HorizontalBoundary::Wrap)
    }

    pub fn with_boundary(
        kernel: Array2<f64>,
        upsample: usize,
        boundary: HorizontalBoundary,
    ) -> Result<Self, DecodeError> {
        let (rows, cols) = kernel.dim();
        if rows % 2 == 0 || cols % 2 == 0 {
            return Err(DecodeError::EvenKernel { rows, cols });
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(DecodeError::NonFiniteKernel);
        }
        if upsample == 0 {
            return Err(DecodeError::ZeroUpsample);
        }
        Ok(Self {
            kernel,
            upsample,
            boundary,
        })
    }

    /// Normalised 5×5 binomial smoothing kernel (half-width 2).
    pub fn binomial5() -> Array2<f64> {
        let b = [1.0, 4.0, 6.0, 4.0, 1.0];
        Array2::from_shape_fn((5, 5), |(i, j)| b[i] * b[j] / 256.0)
    }

    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    pub fn boundary(&self) -> HorizontalBoundary {
        self.boundary
    }

    /// Horizontal receptive half-width `k` in latent columns.
    pub fn half_width(&self) -> usize {
        self.kernel.ncols() / 2
    }

    fn correlate(&self, src: ArrayView2<f64>, mut dst: ArrayViewMut2<f64>) {
        let (h, w) = src.dim();
        let (kr, kc) = self.kernel.dim();
        let (hy, hx) = ((kr / 2) as isize, (kc / 2) as isize);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for ky in 0..kr {
                    let sy = y as isize + ky as isize - hy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..kc {
                        let sx = x as isize + kx as isize - hx;
                        let sx = match self.boundary {
                            HorizontalBoundary::Zero if sx < 0 || sx >= w as isize => continue,
                            HorizontalBoundary::Zero => sx as usize,
                            HorizontalBoundary::Wrap => sx.rem_euclid(w as isize) as usize,
                        };
                        acc += self.kernel[[ky, kx]] * src[[sy as usize, sx]];
                    }
                }
                let u = self.upsample;
                dst.slice_mut(s![y * u..(y + 1) * u, x * u..(x + 1) * u])
                    .fill(acc);
            }
        }
    }
}

impl Decoder for ReferenceConvDecoder {
    fn name(&self) -> &str {
        match self.boundary {
            HorizontalBoundary::Zero => "reference-conv",
            HorizontalBoundary::Wrap => "reference-conv-circular",
        }
    }

    fn upsample(&self) -> usize {
        self.upsample
    }

    fn decode(&self, latent: &LatentTensor) -> Result<LatentTensor, DecodeError> {
        let [c, f, h, w] = latent.shape();
        let u = self.upsample;
        let mut out = Array4::zeros([c, f, h * u, w * u]);
        let src = latent.data();
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(src.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut oc, ic)| {
                for (of, inf) in oc.axis_iter_mut(Axis(0)).zip(ic.axis_iter(Axis(0))) {
                    self.correlate(inf, of);
                }
            });
        Ok(LatentTensor::new(out)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn random(shape: [usize; 4], seed: u64) -> LatentTensor {
        LatentTensor::new(rng::gaussian_array(shape, seed)).unwrap()
    }

    fn row(values: &[f64]) -> LatentTensor {
        LatentTensor::from_fn([1, 1, 1, values.len()], |(_, _, _, x)| values[x]).unwrap()
    }

    fn flat(t: &LatentTensor) -> Vec<f64> {
        t.data().iter().copied().collect()
    }

    #[test]
    fn pad_examples() {
        let z = row(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(circular_pad(&z, 0).unwrap(), z);
        assert_eq!(
            flat(&circular_pad(&z, 2).unwrap()),
            vec![3.0, 4.0, 1.0, 2.0, 3.0, 4.0, 1.0, 2.0]
        );
        assert_eq!(
            flat(&circular_pad(&z, 4).unwrap()),
            vec![1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0]
        );
        assert_eq!(
            circular_pad(&z, 5).unwrap_err(),
            DecodeError::PadTooWide { r: 5, width: 4 }
        );
    }

    #[test]
    fn crop_examples() {
        let z = random([2, 2, 3, 6], 1);
        assert_eq!(center_crop(&z, 6).unwrap(), z);
        assert_eq!(center_crop(&circular_pad(&z, 3).unwrap(), 6).unwrap(), z);
        assert!(matches!(
            center_crop(&z, 3),
            Err(DecodeError::OddMargin { .. })
        ));
        assert!(matches!(
            center_crop(&z, 7),
            Err(DecodeError::CropTooWide { .. })
        ));
        assert!(matches!(
            center_crop(&z, 0),
            Err(DecodeError::CropTooWide { .. })
        ));
    }

    #[test]
    fn identity_decoder_passes_through() {
        let z = random([1, 2, 4, 8], 2);
        for r in 0..=8 {
            assert!(padded_decode(&z, &IdentityDecoder, r).unwrap().bit_eq(&z));
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut k = Array2::zeros((3, 5));
        k[[1, 2]] = 1.0;
        let dec = ReferenceConvDecoder::new(k, 1).unwrap();
        let z = random([2, 1, 4, 8], 3);
        assert!(dec.decode(&z).unwrap().bit_eq(&z));
    }

    #[test]
    fn kernel_validation() {
        assert_eq!(
            ReferenceConvDecoder::new(Array2::zeros((2, 3)), 1).unwrap_err(),
            DecodeError::EvenKernel { rows: 2, cols: 3 }
        );
        assert_eq!(
            ReferenceConvDecoder::new(Array2::zeros((3, 3)), 0).unwrap_err(),
            DecodeError::ZeroUpsample
        );
        let mut k = Array2::zeros((3, 3));
        k[[0, 0]] = f64::NAN;
        assert_eq!(
            ReferenceConvDecoder::new(k, 1).unwrap_err(),
            DecodeError::NonFiniteKernel
        );
    }

    #[test]
    fn box_kernel_attenuates_boundaries() {
        // 3×3 box on a constant 1: interior sums 9/9, edges 6/9, corners 4/9
        let dec = ReferenceConvDecoder::new(Array2::from_elem((3, 3), 1.0 / 9.0), 1).unwrap();
        let out = dec
            .decode(&LatentTensor::from_elem([1, 1, 5, 6], 1.0).unwrap())
            .unwrap();
        let d = out.data();
        assert!((d[[0, 0, 2, 3]] - 1.0).abs() < 1e-15);
        assert!((d[[0, 0, 2, 0]] - 6.0 / 9.0).abs() < 1e-15);
        assert!((d[[0, 0, 2, 5]] - 6.0 / 9.0).abs() < 1e-15);
        assert!((d[[0, 0, 0, 0]] - 4.0 / 9.0).abs() < 1e-15);

        // one column of wrapped context removes the left/right attenuation
        let padded = padded_decode(
            &LatentTensor::from_elem([1, 1, 5, 6], 1.0).unwrap(),
            &dec,
            1,
        )
        .unwrap();
        for y in 1..4 {
            for x in 0..6 {
                assert!((padded.data()[[0, 0, y, x]] - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn upsampling_is_nearest_neighbour() {
        let mut k = Array2::zeros((1, 1));
        k[[0, 0]] = 1.0;
        let dec = ReferenceConvDecoder::new(k, 3).unwrap();
        let z = random([1, 1, 2, 4], 4);
        let out = dec.decode(&z).unwrap();
        assert_eq!(out.shape(), [1, 1, 6, 12]);
        for y in 0..6 {
            for x in 0..12 {
                assert_eq!(out.data()[[0, 0, y, x]], z.data()[[0, 0, y / 3, x / 3]]);
            }
        }
    }

    #[test]
    fn padded_decode_matches_circular_oracle() {
        let k = ReferenceConvDecoder::binomial5();
        for u in [1, 2] {
            let dec = ReferenceConvDecoder::new(k.clone(), u).unwrap();
            let oracle = ReferenceConvDecoder::circular(k.clone(), u).unwrap();
            let z = random([3, 2, 6, 12], 5);
            let want = oracle.decode(&z).unwrap();
            for r in 2..=6 {
                assert!(
                    padded_decode(&z, &dec, r).unwrap().bit_eq(&want),
                    "u={u} r={r}"
                );
            }
            assert!(
                padded_decode(&z, &dec, 1)
                    .unwrap()
                    .max_abs_diff(&want)
                    .unwrap()
                    > 1e-6
            );
        }
    }

    #[test]
    fn misbehaving_decoder_is_reported() {
        struct Narrow;
        impl Decoder for Narrow {
            fn name(&self) -> &str {
                "narrow"
            }
            fn upsample(&self) -> usize {
                1
            }
            fn decode(&self, l: &LatentTensor) -> Result<LatentTensor, DecodeError> {
                center_crop(l, l.width() - 2)
            }
        }
        let z = random([1, 1, 2, 6], 6);
        assert!(matches!(
            padded_decode(&z, &Narrow, 2),
            Err(DecodeError::DecoderWidth { .. })
        ));
    }

    proptest! {
        #[test]
        fn pad_then_crop_is_identity(seed in 0u64..1000, w in 1usize..12, r in 0usize..12) {
            prop_assume!(r <= w);
            let z = random([1, 2, 3, w], seed);
            prop_assert!(center_crop(&circular_pad(&z, r).unwrap(), w).unwrap().bit_eq(&z));
        }

        #[test]
        fn padded_decode_is_shift_equivariant(seed in 0u64..500, shift in 0i64..10, u in 1usize..3) {
            let dec = ReferenceConvDecoder::new(ReferenceConvDecoder::binomial5(), u).unwrap();
            let z = random([1, 1, 4, 10], seed);
            let a = padded_decode(&crate::denoise::circular_shift(&z, shift), &dec, 2).unwrap();
            let b = crate::denoise::circular_shift(&padded_decode(&z, &dec, 2).unwrap(), shift * u as i64);
            prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        }
    }
}
