//! File formats: raw tensors, PNG frame sequences and JSON-lines records.
//!
//! Raw tensor layout (all integers little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 4     | magic `PWTN` |
//! | 2     | version, `u16` = 1 |
//! | 1     | dtype tag, `0` = `f32` LE |
//! | 1     | rank `n` |
//! | 4·n   | dims, `u32` each |
//! | …     | payload, row-major, `4·Π dims` bytes |
//!
//! Every writer goes through a temporary file in the destination directory
//! and a rename, so a failed run never leaves a half-written output.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array4, IxDyn};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::metrics::{MetricError, VideoFrames};
use crate::tensor::{LatentTensor, ShapeError};

pub const MAGIC: [u8; 4] = *b"PWTN";
pub const VERSION: u16 = 1;
pub const DTYPE_F32_LE: u8 = 0;
const HEADER_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("unsupported dtype tag {0}")]
    Dtype(u8),
    #[error("corrupt tensor file: {0}")]
    Corrupt(String),
    #[error("dimensions overflow: {0:?}")]
    DimensionOverflow(Vec<u64>),
    #[error("tensor of rank {0} cannot be used as a latent")]
    Rank(usize),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Frames(#[from] MetricError),
    #[error("no frame_NNNNNN.png files in {0}")]
    EmptySequence(PathBuf),
    #[error("frame sequence is missing frame {0}")]
    MissingFrame(usize),
    #[error("frame {index}: {reason}")]
    Frame { index: usize, reason: String },
    #[error("unsupported channel count {0}; PNG frames need 1, 3 or 4")]
    Channels(usize),
    #[error("{path}:{line}: {reason}")]
    Json {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
}

/// In-memory raw tensor: dims plus `f32` payload.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, IoError> {
        let n = checked_len(&dims)?;
        if n != data.len() {
            return Err(IoError::Corrupt(format!(
                "{} values for dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_latent(latent: &LatentTensor) -> Self {
        Self {
            dims: latent.shape().to_vec(),
            data: latent.data().iter().map(|&v| v as f32).collect(),
        }
    }

    /// Rank 4 is `(C, F, H, W)`; rank 3 `(C, H, W)` and rank 2 `(H, W)` gain
    /// unit axes.
    pub fn to_latent(&self) -> Result<LatentTensor, IoError> {
        let shape = match *self.dims.as_slice() {
            [c, f, h, w] => [c, f, h, w],
            [c, h, w] => [c, 1, h, w],
            [h, w] => [1, 1, h, w],
            _ => return Err(IoError::Rank(self.dims.len())),
        };
        let data = Array4::from_shape_vec(shape, self.data.iter().map(|&v| f64::from(v)).collect())
            .map_err(|e| IoError::Corrupt(e.to_string()))?;
        Ok(LatentTensor::new(data)?)
    }

    pub fn to_array(&self) -> ndarray::ArrayD<f32> {
        ndarray::ArrayD::from_shape_vec(IxDyn(&self.dims), self.data.clone())
            .expect("length checked on construction")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F32_LE);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IoError> {
        if bytes.len() < HEADER_LEN {
            return Err(IoError::Corrupt(format!(
                "header needs {HEADER_LEN} bytes, file has {}",
                bytes.len()
            )));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(IoError::BadMagic(magic));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(IoError::Version(version));
        }
        if bytes[6] != DTYPE_F32_LE {
            return Err(IoError::Dtype(bytes[6]));
        }
        let rank = bytes[7] as usize;
        let dims_end = HEADER_LEN + 4 * rank;
        if bytes.len() < dims_end {
            return Err(IoError::Corrupt(format!(
                "truncated dimension list (rank {rank})"
            )));
        }
        let dims: Vec<usize> = bytes[HEADER_LEN..dims_end]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let n = checked_len(&dims)?;
        let payload = &bytes[dims_end..];
        let want = n.checked_mul(4).ok_or_else(|| overflow(&dims))?;
        if payload.len() != want {
            return Err(IoError::Corrupt(format!(
                "payload has {} bytes, dims {dims:?} need {want}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::from_bytes(&fs::read(path).map_err(fs_err(path))?)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        atomic_write(path, &self.to_bytes())
    }
}

fn overflow(dims: &[usize]) -> IoError {
    IoError::DimensionOverflow(dims.iter().map(|&d| d as u64).collect())
}

fn checked_len(dims: &[usize]) -> Result<usize, IoError> {
    if dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(overflow(dims));
    }
    // cap the element count so the byte size fits in addressable memory
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= isize::MAX as usize / 4)
        .ok_or_else(|| overflow(dims))
}

pub fn read_latent(path: &Path) -> Result<LatentTensor, IoError> {
    RawTensor::read(path)?.to_latent()
}

pub fn write_latent(path: &Path, latent: &LatentTensor) -> Result<(), IoError> {
    RawTensor::from_latent(latent).write(path)
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Writes `bytes` to a temporary sibling file, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fs_err(dir))?;
    }
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        IoError::Fs {
            path: path.to_path_buf(),
            source: e,
        }
    })
}

/// Pretty-printed JSON document.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    })?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        serde_json::to_writer(&mut out, item).map_err(|e| IoError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(b'\n');
    }
    atomic_write(path, &out)
}

/// Reads one JSON document per line; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = fs::File::open(path).map_err(fs_err(path))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(fs_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| IoError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(items)
}

/// `frame_000042.png`.
pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

fn parse_frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    (digits.len() == 6 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

fn encode_png(frames: &VideoFrames, f: usize) -> Result<Vec<u8>, IoError> {
    let (h, w, c) = (frames.height(), frames.width(), frames.channels());
    let color = match c {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        4 => image::ExtendedColorType::Rgba8,
        _ => return Err(IoError::Channels(c)),
    };
    let raw: Vec<u8> = frames
        .frame(f)
        .iter()
        .map(|&v| (v * 255.0).round() as u8)
        .collect();
    let mut png = Vec::new();
    image::codecs::png::PngEncoder::new(&mut png)
        .write_image(&raw, w as u32, h as u32, color)
        .map_err(|e| IoError::Frame {
            index: f,
            reason: e.to_string(),
        })?;
    Ok(png)
}

use image::ImageEncoder;

/// Writes `frame_000000.png`, `frame_000001.png`, … into `dir`. Values are
/// quantised to 8 bits. All frames are encoded before anything is written.
pub fn write_png_sequence(dir: &Path, frames: &VideoFrames) -> Result<(), IoError> {
    let encoded: Vec<Vec<u8>> = (0..frames.frames())
        .map(|f| encode_png(frames, f))
        .collect::<Result<_, _>>()?;
    fs::create_dir_all(dir).map_err(fs_err(dir))?;
    for (f, png) in encoded.iter().enumerate() {
        atomic_write(&dir.join(frame_file_name(f)), png)?;
    }
    Ok(())
}

/// Reads a contiguous `frame_NNNNNN.png` sequence starting at 0.
pub fn read_png_sequence(dir: &Path) -> Result<VideoFrames, IoError> {
    let mut indices: Vec<usize> = fs::read_dir(dir)
        .map_err(fs_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| parse_frame_index(&e.file_name().to_string_lossy()))
        .collect();
    indices.sort_unstable();
    if indices.is_empty() {
        return Err(IoError::EmptySequence(dir.to_path_buf()));
    }
    if let Some(missing) = indices
        .iter()
        .enumerate()
        .find(|(i, &v)| *i != v)
        .map(|(i, _)| i)
    {
        return Err(IoError::MissingFrame(missing));
    }

    let mut shape: Option<(usize, usize, usize)> = None;
    let mut values = Vec::new();
    for &index in &indices {
        let path = dir.join(frame_file_name(index));
        let img = image::open(&path).map_err(|e| IoError::Frame {
            index,
            reason: e.to_string(),
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (c, raw): (usize, Vec<u8>) = match img {
            image::DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
            image::DynamicImage::ImageRgba8(b) => (4, b.into_raw()),
            other if other.color().has_alpha() => (4, other.into_rgba8().into_raw()),
            other if other.color().channel_count() <= 2 => (1, other.into_luma8().into_raw()),
            other => (3, other.into_rgb8().into_raw()),
        };
        match shape {
            None => shape = Some((h, w, c)),
            Some(s) if s != (h, w, c) => {
                return Err(IoError::Frame {
                    index,
                    reason: format!("shape {:?} differs from first frame {s:?}", (h, w, c)),
                })
            }
            Some(_) => {}
        }
        values.extend(raw.into_iter().map(|b| f64::from(b) / 255.0));
    }
    let (h, w, c) = shape.expect("non-empty");
    let data = Array4::from_shape_vec((indices.len(), h, w, c), values)
        .map_err(|e| IoError::Corrupt(e.to_string()))?;
    Ok(VideoFrames::new(data)?)
}
