//! Subcommand implementations. Every command computes all of its results
//! before writing anything, and every file is written atomically.

use std::fs;
use std::path::{Path, PathBuf};

use panokit_core::curator::{filter_pipeline, ClipRecord};
use panokit_core::decode_pad::{padded_decode, DEFAULT_PAD};
use panokit_core::denoise::{
    accumulate_seam_error, masked_denoise, run_denoise, windowed_long_denoise, Conditioning,
    DenoiseOptions, DenoiseSchedule, SeamErrorModel,
};
use panokit_core::io::{self, read_latent, write_json, write_jsonl, write_latent};
use panokit_core::metrics::{
    cubemap_weighted_score, end_continuity, face_metric, FaceWeights, VideoFrames,
};
use panokit_core::noise_field::{latitude_aware_remap, sample_iid_gaussian, spectrum_reports};
use panokit_core::plugins::{PluginContext, PluginRegistry};
use panokit_core::rng::mix_seed;
use panokit_core::sphere_geom::ErpGrid;
use panokit_core::LatentTensor;
use serde_json::{json, Value};

use crate::config::{check_threshold, MetricChoice, RunConfig};
use crate::{CliError, Command};

// sub-seed tags derived from the root seed
const SEED_TAG_PREDICTOR: u64 = 1;
const SEED_TAG_MASK_NOISE: u64 = 2;

const DEFAULT_RADIUS: usize = 64;
const DEFAULT_CHANNELS: usize = 4;
const DEFAULT_THRESHOLD: f64 = 0.99;
const DEFAULT_STEPS: usize = 50;
const DEFAULT_PREDICTOR: &str = "zero";
const DEFAULT_DECODER: &str = "reference-conv";
const DEFAULT_METRIC: &str = "end-continuity";
/// Rows with |latitude| above this are left out of the bandwidth summary.
const SPECTRUM_SUMMARY_MAX_LAT_DEG: f64 = 75.0;

/// Schema-tagged report carrying the root seed.
fn document(kind: &str, seed: u64, body: Value) -> Value {
    let mut doc = json!({ "schema": format!("panokit.{kind}.v1"), "seed": seed });
    if let (Some(map), Value::Object(extra)) = (doc.as_object_mut(), body) {
        map.extend(extra);
    }
    doc
}

/// Writes the report to `path`, or prints it when no path is given.
fn emit(doc: &Value, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => Ok(write_json(p, doc)?),
        None => {
            use std::io::Write;
            let text = serde_json::to_string_pretty(doc).expect("json value");
            // a closed pipe (e.g. `| head`) is not an error
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(fs_error(Path::new("<stdout>"), e))
                }
                _ => Ok(()),
            }
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

pub fn dispatch(command: Command, file: &RunConfig, seed: u64) -> Result<(), CliError> {
    let registry = PluginRegistry::builtin();
    match command {
        Command::SampleNoise {
            radius,
            channels,
            latitude_aware,
            output,
        } => {
            let radius = radius.or(file.radius).unwrap_or(DEFAULT_RADIUS);
            let channels = channels.or(file.channels).unwrap_or(DEFAULT_CHANNELS);
            let latitude_aware = latitude_aware || file.latitude_aware.unwrap_or(false);
            let grid = ErpGrid::new(radius)?;
            let mut field = sample_iid_gaussian(grid, channels, seed)?;
            if latitude_aware {
                field = latitude_aware_remap(&field);
            }
            write_latent(&output, &field.to_latent())?;
            emit(
                &document(
                    "sample-noise",
                    seed,
                    json!({
                        "radius": radius,
                        "channels": channels,
                        "latitude_aware": latitude_aware,
                        "output": display(&output),
                    }),
                ),
                None,
            )
        }
        Command::AnalyzeSpectrum {
            input,
            threshold,
            report,
        } => {
            let threshold = threshold.or(file.threshold).unwrap_or(DEFAULT_THRESHOLD);
            check_threshold(threshold)?;
            let doc = analyze_spectrum(&read_latent(&input)?, threshold, seed)?;
            emit(&doc, report.as_deref())
        }
        Command::SimulateDenoise {
            predictor,
            steps,
            rotated,
            latitude_aware_init,
            window,
            overlap,
            mask,
            reference,
            target,
            prompt,
            input,
            output,
        } => {
            let name = predictor
                .or_else(|| file.predictor.clone())
                .unwrap_or_else(|| DEFAULT_PREDICTOR.into());
            let steps = steps.or(file.steps).unwrap_or(DEFAULT_STEPS);
            let options = DenoiseOptions {
                rotated: rotated || file.rotated.unwrap_or(false),
                latitude_aware_init: latitude_aware_init
                    || file.latitude_aware_init.unwrap_or(false),
            };
            let window = window.or(file.window);
            let overlap = overlap.or(file.overlap).unwrap_or(0);
            if mask.is_some() && window.is_some() {
                return Err(CliError::Usage(
                    "masked sampling cannot be combined with windowed sampling".into(),
                ));
            }

            let z = read_latent(&input)?;
            let ctx = PluginContext {
                seed: mix_seed(seed, SEED_TAG_PREDICTOR),
                target: target.as_deref().map(read_latent).transpose()?,
                ..Default::default()
            };
            let model = registry.predictor(&name, &ctx)?;
            let schedule = DenoiseSchedule::uniform(steps)?;
            let cond = Conditioning(prompt);
            let out = match (&mask, &reference, window) {
                (Some(m), Some(r), _) => masked_denoise(
                    &z,
                    &read_latent(m)?,
                    &read_latent(r)?,
                    &schedule,
                    model.as_ref(),
                    &cond,
                    mix_seed(seed, SEED_TAG_MASK_NOISE),
                    options,
                )?,
                (_, _, Some(len)) => windowed_long_denoise(
                    &z,
                    len,
                    overlap,
                    &schedule,
                    model.as_ref(),
                    &cond,
                    options,
                )?,
                _ => run_denoise(&z, &schedule, model.as_ref(), &cond, options)?,
            };
            write_latent(&output, &out)?;
            emit(
                &document(
                    "simulate-denoise",
                    seed,
                    json!({
                        "predictor": name,
                        "steps": steps,
                        "rotated": options.rotated,
                        "latitude_aware_init": options.latitude_aware_init,
                        "window": window,
                        "overlap": window.map(|_| overlap),
                        "masked": mask.is_some(),
                        "shape": out.shape(),
                        "output": display(&output),
                    }),
                ),
                None,
            )
        }
        Command::Decode {
            decoder,
            pad_r,
            upsample,
            input,
            output,
        } => {
            let name = decoder
                .or_else(|| file.decoder.clone())
                .unwrap_or_else(|| DEFAULT_DECODER.into());
            let pad_r = pad_r.or(file.pad_r).unwrap_or(DEFAULT_PAD);
            let upsample = upsample.or(file.upsample).unwrap_or(1);
            let ctx = PluginContext {
                seed,
                upsample,
                ..Default::default()
            };
            let dec = registry.decoder(&name, &ctx)?;
            let z = read_latent(&input)?;
            let decoded = padded_decode(&z, dec.as_ref(), pad_r)?;
            // latent range [-1, 1] onto pixel range [0, 1]; VideoFrames clamps
            let pixels = LatentTensor::new(decoded.data().mapv(|v| 0.5 * (v + 1.0)))?;
            let frames = VideoFrames::from_latent(&pixels)?;
            write_frame_dir(&output, &frames)?;
            emit(
                &document(
                    "decode",
                    seed,
                    json!({
                        "decoder": name,
                        "pad_r": pad_r,
                        "upsample": upsample,
                        "frames": frames.frames(),
                        "height": frames.height(),
                        "width": frames.width(),
                        "channels": frames.channels(),
                        "output": display(&output),
                    }),
                ),
                None,
            )
        }
        Command::Score {
            metric,
            face_size,
            input,
            report,
        } => {
            let metric = metric
                .or_else(|| file.metric.clone())
                .unwrap_or_else(|| DEFAULT_METRIC.into());
            let choice = MetricChoice::parse(&metric)?;
            let v = io::read_png_sequence(&input)?;
            let body = match choice {
                MetricChoice::EndContinuity => {
                    let r = end_continuity(&v);
                    json!({ "metric": metric, "value": r.mean, "frames": v.frames(), "details": r })
                }
                MetricChoice::Cubemap(face) => {
                    let face_size = face_size
                        .or(file.face_size)
                        .unwrap_or((v.height() / 2).max(2));
                    let m = face_metric(&face).expect("validated metric name");
                    let s =
                        cubemap_weighted_score(&v, m.as_ref(), &FaceWeights::default(), face_size)?;
                    json!({
                        "metric": metric,
                        "value": s.score,
                        "frames": v.frames(),
                        "face_size": face_size,
                        "details": s,
                    })
                }
            };
            emit(&document("score", seed, body), report.as_deref())
        }
        Command::Curate {
            thresholds,
            input,
            output,
            rejects,
            audit,
        } => {
            let config = file.curator(&thresholds);
            let records: Vec<ClipRecord> = io::read_jsonl(&input)?;
            let out = filter_pipeline(records, &config)?;
            let audit_doc = document(
                "curate-audit",
                seed,
                json!({ "config": config, "audit": out.audit }),
            );
            write_jsonl(&output, &out.kept)?;
            write_jsonl(&rejects, &out.rejects)?;
            write_json(&audit, &audit_doc)?;
            emit(
                &document(
                    "curate",
                    seed,
                    json!({
                        "input": out.audit.input,
                        "kept": out.audit.kept,
                        "rejected": out.audit.rejected,
                        "output": display(&output),
                    }),
                ),
                None,
            )
        }
        Command::SeamErrorSim {
            steps,
            width,
            rotated,
            model,
            report,
        } => {
            let seam_model = parse_seam_model(&model)?;
            let e = accumulate_seam_error(&seam_model, steps, width, rotated)?;
            let max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            let doc = document(
                "seam-error",
                seed,
                json!({
                    "model": model,
                    "T": steps,
                    "W": width,
                    "rotated": rotated,
                    "max": max,
                    "min": min,
                    "mean": mean,
                    "max_over_mean": if mean != 0.0 { Some(max / mean) } else { None },
                    "error": e,
                }),
            );
            emit(&doc, report.as_deref())
        }
        Command::Plugins => {
            let list: Vec<Value> = registry
                .list()
                .into_iter()
                .map(|(k, n)| json!({ "kind": k.as_str(), "name": n }))
                .collect();
            emit(&document("plugins", seed, json!({ "plugins": list })), None)
        }
    }
}

fn parse_seam_model(s: &str) -> Result<SeamErrorModel, CliError> {
    if s == "seam-impulse" {
        return Ok(SeamErrorModel::seam_impulse());
    }
    if let Some(level) = s.strip_prefix("uniform:") {
        let level: f64 = level
            .parse()
            .map_err(|_| CliError::Usage(format!("bad uniform level `{level}`")))?;
        return Ok(SeamErrorModel::Uniform { level });
    }
    Err(CliError::Usage(format!(
        "unknown seam model `{s}`; expected seam-impulse or uniform:<level>"
    )))
}

fn analyze_spectrum(z: &LatentTensor, threshold: f64, seed: u64) -> Result<Value, CliError> {
    let [c, f, h, w] = z.shape();
    let grid = ErpGrid::from_dims(h, w)?;
    if h < 2 {
        return Err(CliError::Usage(
            "spectrum analysis needs at least 2 rows".into(),
        ));
    }
    let planes = z
        .data()
        .to_shape((c * f, h, w))
        .expect("contiguous latent")
        .into_owned();
    let rows = spectrum_reports(&planes, &grid, threshold)?;
    let equator = 0.5 * (rows[h / 2 - 1].measured_support + rows[h / 2].measured_support);
    let equator_cos = rows[h / 2].latitude.cos();
    let mut worst = 0.0f64;
    let table: Vec<Value> = rows
        .iter()
        .map(|r| {
            let ratio = r.measured_support / equator;
            let expected = r.latitude.cos() / equator_cos;
            if r.latitude.abs().to_degrees() <= SPECTRUM_SUMMARY_MAX_LAT_DEG {
                worst = worst.max((ratio / expected - 1.0).abs());
            }
            json!({
                "row_index": r.row_index,
                "latitude": r.latitude,
                "measured_support": r.measured_support,
                "predicted_support": r.predicted_support,
                "ratio_to_equator": ratio,
                "cos_ratio": expected,
            })
        })
        .collect();
    Ok(document(
        "spectrum",
        seed,
        json!({
            "threshold": threshold,
            "radius": h,
            "planes": c * f,
            "equator_support": equator,
            "max_relative_error": worst,
            "max_latitude_deg": SPECTRUM_SUMMARY_MAX_LAT_DEG,
            "rows": table,
        }),
    ))
}

fn is_frame_file(name: &str) -> bool {
    name.starts_with("frame_") && name.ends_with(".png")
}

/// Writes the sequence into a temporary sibling directory and renames it into
/// place. An existing target is replaced only if it holds nothing but frames.
fn write_frame_dir(dir: &Path, frames: &VideoFrames) -> Result<(), CliError> {
    if dir.exists() {
        let entries = fs::read_dir(dir).map_err(|e| fs_error(dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| fs_error(dir, e))?;
            if !is_frame_file(&entry.file_name().to_string_lossy()) {
                return Err(CliError::Usage(format!(
                    "{} exists and holds files other than frames",
                    dir.display()
                )));
            }
        }
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frames".into());
    let tmp: PathBuf = dir.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let _ = fs::remove_dir_all(&tmp);
    if let Err(e) = io::write_png_sequence(&tmp, frames) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e.into());
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| fs_error(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| fs_error(dir, e))
}

fn fs_error(path: &Path, source: std::io::Error) -> CliError {
    io::IoError::Fs {
        path: path.to_path_buf(),
        source,
    }
    .into()
}
