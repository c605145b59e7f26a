use thiserror::Error;

use crate::{curator, decode_pad, denoise, io, metrics, noise_field, sphere_geom, tensor};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Umbrella error for callers that drive several modules at once (the CLI).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] sphere_geom::GeomError),
    #[error(transparent)]
    Noise(#[from] noise_field::NoiseError),
    #[error(transparent)]
    Tensor(#[from] tensor::ShapeError),
    #[error(transparent)]
    Denoise(#[from] denoise::DenoiseError),
    #[error(transparent)]
    Decode(#[from] decode_pad::DecodeError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error(transparent)]
    Curator(#[from] curator::CuratorError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error("unknown plugin `{0}`")]
    UnknownPlugin(String),
    #[error("plugin `{name}`: {reason}")]
    PluginArgs { name: String, reason: String },
}

impl Error {
    /// Stable machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geometry(_) => "geometry",
            Error::Noise(_) => "noise",
            Error::Tensor(_) => "shape",
            Error::Denoise(_) => "denoise",
            Error::Decode(_) => "decode",
            Error::Metric(_) => "metric",
            Error::Curator(_) => "curator",
            Error::Io(_) => "io",
            Error::UnknownPlugin(_) => "unknown_plugin",
            Error::PluginArgs { .. } => "plugin_args",
        }
    }
}
