//! Flat TOML run configuration. Every key is optional; command-line flags
//! take precedence over file values, which take precedence over defaults.

use std::path::Path;

use panokit_core::curator::CuratorConfig;
use panokit_core::metrics::face_metric;
use panokit_core::plugins::{PluginKind, PluginRegistry};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every random draw in a run derives from it.
    pub seed: Option<u64>,
    pub radius: Option<usize>,
    pub channels: Option<usize>,
    pub latitude_aware: Option<bool>,
    /// Remap the initial noise of `simulate-denoise`.
    pub latitude_aware_init: Option<bool>,
    pub threshold: Option<f64>,
    pub steps: Option<usize>,
    pub rotated: Option<bool>,
    pub predictor: Option<String>,
    pub window: Option<usize>,
    pub overlap: Option<usize>,
    pub decoder: Option<String>,
    pub pad_r: Option<usize>,
    pub upsample: Option<usize>,
    pub metric: Option<String>,
    pub face_size: Option<usize>,
    pub min_views: Option<u64>,
    pub require_panorama: Option<bool>,
    pub min_motion: Option<f64>,
    pub min_aesthetic: Option<f64>,
    pub dedup_threshold: Option<f64>,
    pub category_cap: Option<usize>,
    /// Reference training hyperparameters of the full-size backbone. Recorded
    /// for documentation only; nothing in this toolkit reads them.
    pub backbone: Option<BackboneReference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneReference {
    pub lora_rank: u32,
    pub learning_rate: f64,
    pub frames: u32,
    pub height: u32,
    pub width: u32,
    pub batch_size: u32,
    pub iterations: u64,
}

/// Which score the `score` command computes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricChoice {
    EndContinuity,
    Cubemap(String),
}

impl MetricChoice {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        if s == "end-continuity" {
            return Ok(Self::EndContinuity);
        }
        match s.strip_prefix("cubemap:") {
            Some(name) if face_metric(name).is_some() => Ok(Self::Cubemap(name.to_string())),
            Some(name) => Err(CliError::Usage(format!("unknown face metric `{name}`"))),
            None => Err(CliError::Usage(format!(
                "unknown metric `{s}`; expected end-continuity or cubemap:<face-metric>"
            ))),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        cfg.validate(&PluginRegistry::builtin())
            .map_err(|e| CliError::Config {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        Ok(cfg)
    }

    /// Checks plugin names and value ranges.
    pub fn validate(&self, registry: &PluginRegistry) -> Result<(), CliError> {
        check_plugin(registry, self.predictor.as_deref(), PluginKind::Predictor)?;
        check_plugin(registry, self.decoder.as_deref(), PluginKind::Decoder)?;
        if let Some(m) = &self.metric {
            MetricChoice::parse(m)?;
        }
        if let Some(t) = self.threshold {
            check_threshold(t)?;
        }
        for (key, v) in [
            ("radius", self.radius),
            ("channels", self.channels),
            ("steps", self.steps),
            ("upsample", self.upsample),
            ("window", self.window),
        ] {
            if v == Some(0) {
                return Err(CliError::Usage(format!("{key} must be at least 1")));
            }
        }
        self.curator(&CuratorOverrides::default()).validate()?;
        Ok(())
    }

    /// Curator thresholds: flags, then file, then library defaults.
    pub fn curator(&self, flags: &CuratorOverrides) -> CuratorConfig {
        let d = CuratorConfig::default();
        CuratorConfig {
            min_views: flags.min_views.or(self.min_views).or(d.min_views),
            require_panorama: flags
                .require_panorama
                .or(self.require_panorama)
                .unwrap_or(d.require_panorama),
            min_motion: flags.min_motion.or(self.min_motion).or(d.min_motion),
            min_aesthetic: flags
                .min_aesthetic
                .or(self.min_aesthetic)
                .or(d.min_aesthetic),
            dedup_threshold: flags
                .dedup_threshold
                .or(self.dedup_threshold)
                .or(d.dedup_threshold),
            category_cap: flags.category_cap.or(self.category_cap).or(d.category_cap),
        }
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct CuratorOverrides {
    #[arg(long)]
    pub min_views: Option<u64>,
    #[arg(long)]
    pub require_panorama: Option<bool>,
    #[arg(long)]
    pub min_motion: Option<f64>,
    #[arg(long)]
    pub min_aesthetic: Option<f64>,
    #[arg(long)]
    pub dedup_threshold: Option<f64>,
    #[arg(long)]
    pub category_cap: Option<usize>,
}

pub fn check_threshold(t: f64) -> Result<(), CliError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("threshold {t} must lie in (0, 1]")))
    }
}

fn check_plugin(
    registry: &PluginRegistry,
    name: Option<&str>,
    want: PluginKind,
) -> Result<(), CliError> {
    let Some(name) = name else { return Ok(()) };
    match registry.kind(name) {
        Some(k) if k == want => Ok(()),
        Some(k) => Err(CliError::Usage(format!(
            "`{name}` is a {} plugin, expected a {}",
            k.as_str(),
            want.as_str()
        ))),
        None => Err(CliError::Usage(format!(
            "unknown {} plugin `{name}`",
            want.as_str()
        ))),
    }
}
