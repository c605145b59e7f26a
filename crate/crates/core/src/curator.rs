//! Dataset curation for panoramic clips.
//!
//! Videos are split into fixed-length clips that never cross a scene cut,
//! each clip gets a motion score from dense optical flow, and the resulting
//! [`ClipRecord`] stream is filtered: popularity, panorama flag, motion,
//! aesthetics, caption near-duplicates, and finally a per-category cap that
//! keeps the most aesthetic clips. Captions, categories and aesthetic scores
//! come from upstream annotators; this module only consumes them.

use std::collections::{BTreeMap, HashSet};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::VideoFrames;

#[derive(Debug, Error, PartialEq)]
pub enum CuratorError {
    #[error("clip length must be at least 1 frame")]
    ClipLength,
    #[error("frame shapes differ: {a:?} vs {b:?}")]
    FrameShape {
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("flow parameters: {0}")]
    FlowParams(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// One annotated clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub source_video: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub caption: String,
    #[serde(default)]
    pub poi_categories: Vec<String>,
    pub is_panorama: bool,
    pub view_count: u64,
    #[serde(default)]
    pub motion_score: Option<f64>,
    #[serde(default)]
    pub aesthetic_score: Option<f64>,
}

impl ClipRecord {
    /// First (most important) category, if any.
    pub fn primary_category(&self) -> Option<&str> {
        self.poi_categories.first().map(String::as_str)
    }
}

/// Default multiplier on the rolling median histogram distance.
pub const DEFAULT_CUT_SENSITIVITY: f64 = 3.0;
const HIST_BINS: usize = 64;
const MEDIAN_HALF_WINDOW: usize = 4;
const DISTANCE_FLOOR: f64 = 0.01;

fn luminance_cdf(luma: &Array2<f64>) -> Vec<f64> {
    let mut hist = vec![0.0; HIST_BINS];
    for &l in luma {
        let bin = ((l * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
        hist[bin] += 1.0;
    }
    let n = luma.len() as f64;
    let mut acc = 0.0;
    hist.iter()
        .map(|h| {
            acc += h / n;
            acc
        })
        .collect()
}

/// Distance between consecutive luminance histograms: L1 distance between
/// their CDFs divided by the bin count, so it lies in `[0, 1]`.
/// Entry `i` compares frames `i` and `i + 1`.
pub fn histogram_distances(frames: &VideoFrames) -> Vec<f64> {
    let cdfs: Vec<Vec<f64>> = (0..frames.frames())
        .into_par_iter()
        .map(|f| luminance_cdf(&frames.luminance(f)))
        .collect();
    cdfs.windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / HIST_BINS as f64
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Frame indices that start a new scene. Distance `d_i` between frames
/// `i − 1` and `i` is a cut when it exceeds `sensitivity` times the median
/// of its neighbours within 4 transitions (itself excluded), floored at 0.01.
pub fn detect_scene_cuts(frames: &VideoFrames, sensitivity: f64) -> Vec<usize> {
    let d = histogram_distances(frames);
    (0..d.len())
        .filter(|&i| {
            let lo = i.saturating_sub(MEDIAN_HALF_WINDOW);
            let hi = (i + MEDIAN_HALF_WINDOW + 1).min(d.len());
            let neighbours: Vec<f64> = (lo..hi).filter(|&j| j != i).map(|j| d[j]).collect();
            let reference = median(neighbours).unwrap_or(0.0).max(DISTANCE_FLOOR);
            d[i] > sensitivity * reference
        })
        .map(|i| i + 1)
        .collect()
}

/// Windows `[kL, (k+1)L)` inside the video, minus any window with a cut
/// strictly inside it. A cut at frame `c` means frame `c` opens a new scene.
pub fn segment_clips(
    video_len: usize,
    cuts: &[usize],
    clip_len: usize,
) -> Result<Vec<(usize, usize)>, CuratorError> {
    if clip_len == 0 {
        return Err(CuratorError::ClipLength);
    }
    Ok((0..video_len / clip_len)
        .map(|k| (k * clip_len, (k + 1) * clip_len))
        .filter(|&(s, e)| !cuts.iter().any(|&c| s < c && c < e))
        .collect())
}

/// Per-pixel displacement `d` with `b(p + d) ≈ a(p)`; `x` wraps around.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub dx: Array2<f64>,
    pub dy: Array2<f64>,
}

impl FlowField {
    pub fn magnitudes(&self) -> Array2<f64> {
        ndarray::Zip::from(&self.dx)
            .and(&self.dy)
            .map_collect(|x, y| x.hypot(*y))
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.magnitudes().mean().unwrap_or(0.0)
    }
}

/// Block-matching parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowParams {
    pub levels: usize,
    pub block: usize,
    /// Search radius at the coarsest level.
    pub search: usize,
    /// Search radius around the propagated estimate at finer levels.
    pub refine: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 3,
            block: 8,
            search: 4,
            refine: 2,
        }
    }
}

fn downsample(img: &Array2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    Array2::from_shape_fn((h / 2, w / 2), |(y, x)| {
        0.25 * (img[[2 * y, 2 * x]]
            + img[[2 * y, 2 * x + 1]]
            + img[[2 * y + 1, 2 * x]]
            + img[[2 * y + 1, 2 * x + 1]])
    })
}

fn block_sad(
    a: &Array2<f64>,
    b: &Array2<f64>,
    y0: usize,
    x0: usize,
    block: usize,
    d: (i64, i64),
) -> f64 {
    let (h, w) = a.dim();
    let mut sad = 0.0;
    for y in y0..(y0 + block).min(h) {
        let by = (y as i64 + d.0).clamp(0, h as i64 - 1) as usize;
        for x in x0..(x0 + block).min(w) {
            let bx = (x as i64 + d.1).rem_euclid(w as i64) as usize;
            sad += (a[[y, x]] - b[[by, bx]]).abs();
        }
    }
    sad
}

fn best_displacement(
    a: &Array2<f64>,
    b: &Array2<f64>,
    y0: usize,
    x0: usize,
    block: usize,
    center: (i64, i64),
    radius: i64,
) -> (i64, i64) {
    let mut best = center;
    let mut best_key = (f64::INFINITY, i64::MAX);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let d = (center.0 + dy, center.1 + dx);
            let sad = block_sad(a, b, y0, x0, block, d);
            let size = d.0 * d.0 + d.1 * d.1;
            if sad < best_key.0 || (sad == best_key.0 && size < best_key.1) {
                best_key = (sad, size);
                best = d;
            }
        }
    }
    best
}

/// Coarse-to-fine block matching on a 2×2-average pyramid, minimising the
/// sum of absolute differences; ties go to the smaller displacement.
pub fn dense_flow(
    a: &Array2<f64>,
    b: &Array2<f64>,
    params: FlowParams,
) -> Result<FlowField, CuratorError> {
    if a.dim() != b.dim() {
        return Err(CuratorError::FrameShape {
            a: a.dim(),
            b: b.dim(),
        });
    }
    if params.levels == 0 || params.block == 0 {
        return Err(CuratorError::FlowParams(
            "levels and block size must be positive".into(),
        ));
    }
    if a.is_empty() {
        return Err(CuratorError::FlowParams("empty frames".into()));
    }
    let mut pyramid = vec![(a.clone(), b.clone())];
    while pyramid.len() < params.levels {
        let (pa, pb) = pyramid.last().unwrap();
        if pa.nrows() < 2 * params.block || pa.ncols() < 2 * params.block {
            break;
        }
        let next = (downsample(pa), downsample(pb));
        pyramid.push(next);
    }

    let blocks = |img: &Array2<f64>| {
        (
            img.nrows().div_ceil(params.block),
            img.ncols().div_ceil(params.block),
        )
    };
    let mut field: Option<Array2<(i64, i64)>> = None;
    for (pa, pb) in pyramid.iter().rev() {
        let (by, bx) = blocks(pa);
        let coarse = field.take();
        let cells: Vec<(i64, i64)> = (0..by * bx)
            .into_par_iter()
            .map(|idx| {
                let (j, i) = (idx / bx, idx % bx);
                let (center, radius) = match &coarse {
                    None => ((0, 0), params.search as i64),
                    Some(c) => {
                        let pj = (j / 2).min(c.nrows() - 1);
                        let pi = (i / 2).min(c.ncols() - 1);
                        let p = c[[pj, pi]];
                        ((2 * p.0, 2 * p.1), params.refine as i64)
                    }
                };
                best_displacement(
                    pa,
                    pb,
                    j * params.block,
                    i * params.block,
                    params.block,
                    center,
                    radius,
                )
            })
            .collect();
        field = Some(Array2::from_shape_vec((by, bx), cells).expect("block grid"));
    }
    let field = field.expect("at least one level");
    let (h, w) = a.dim();
    let pick = |y: usize, x: usize| field[[y / params.block, x / params.block]];
    Ok(FlowField {
        dx: Array2::from_shape_fn((h, w), |(y, x)| pick(y, x).1 as f64),
        dy: Array2::from_shape_fn((h, w), |(y, x)| pick(y, x).0 as f64),
    })
}

/// Mean flow magnitude in pixels divided by the frame diagonal, clamped to `[0, 1]`.
pub fn normalize_motion(mean_magnitude: f64, height: usize, width: usize) -> f64 {
    let diag = ((height * height + width * width) as f64).sqrt();
    (mean_magnitude / diag).clamp(0.0, 1.0)
}

/// Maximum number of frame pairs sampled by [`motion_score`].
pub const MAX_MOTION_PAIRS: usize = 16;

/// Mean flow magnitude over up to 16 evenly spaced consecutive-frame pairs,
/// normalised by the frame diagonal. Single-frame clips score 0.
pub fn motion_score(clip: &VideoFrames, params: FlowParams) -> Result<f64, CuratorError> {
    let f = clip.frames();
    if f < 2 {
        return Ok(0.0);
    }
    let pairs = (f - 1).min(MAX_MOTION_PAIRS);
    let starts: Vec<usize> = (0..pairs).map(|k| k * (f - 1) / pairs).collect();
    let mags: Vec<f64> = starts
        .par_iter()
        .map(|&s| {
            dense_flow(&clip.luminance(s), &clip.luminance(s + 1), params)
                .map(|fl| fl.mean_magnitude())
        })
        .collect::<Result<_, _>>()?;
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    Ok(normalize_motion(mean, clip.height(), clip.width()))
}

/// Lowercased alphanumeric tokens.
pub fn caption_tokens(caption: &str) -> Vec<String> {
    caption
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token 3-gram shingles; captions shorter than three tokens form a single
/// shingle of all their tokens.
pub fn caption_shingles(caption: &str) -> HashSet<String> {
    let tokens = caption_tokens(caption);
    if tokens.is_empty() {
        return HashSet::new();
    }
    if tokens.len() < 3 {
        return HashSet::from([tokens.join(" ")]);
    }
    tokens.windows(3).map(|w| w.join(" ")).collect()
}

/// Jaccard similarity; two empty sets are identical.
pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Result of a filter that splits records into kept and dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub kept: Vec<ClipRecord>,
    /// Dropped records with a detail string.
    pub dropped: Vec<(ClipRecord, String)>,
}

/// Greedy in input order: a record is dropped when its caption's shingle
/// similarity to any already kept caption is at least `threshold`.
pub fn dedup_by_caption(records: Vec<ClipRecord>, threshold: f64) -> Split {
    let mut kept: Vec<ClipRecord> = Vec::new();
    let mut kept_shingles: Vec<HashSet<String>> = Vec::new();
    let mut dropped = Vec::new();
    for rec in records {
        let sh = caption_shingles(&rec.caption);
        let hit = kept_shingles
            .iter()
            .position(|k| jaccard(k, &sh) >= threshold);
        match hit {
            Some(i) => {
                let detail = format!("similar to {}", kept[i].clip_id);
                dropped.push((rec, detail));
            }
            None => {
                kept_shingles.push(sh);
                kept.push(rec);
            }
        }
    }
    Split { kept, dropped }
}

/// Default per-category cap.
pub const DEFAULT_CATEGORY_CAP: usize = 200;

/// Keeps at most `cap` records per primary category: highest aesthetic score
/// first (missing scores last), ties by ascending `clip_id`. Records without
/// a category form their own group. Input order is preserved.
pub fn balance_categories(records: Vec<ClipRecord>, cap: usize) -> Split {
    let mut groups: BTreeMap<Option<&str>, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.primary_category()).or_default().push(i);
    }
    let mut keep = vec![false; records.len()];
    for idx in groups.values_mut() {
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (&records[a], &records[b]);
            let sa = ra.aesthetic_score.unwrap_or(f64::NEG_INFINITY);
            let sb = rb.aesthetic_score.unwrap_or(f64::NEG_INFINITY);
            sb.total_cmp(&sa).then_with(|| ra.clip_id.cmp(&rb.clip_id))
        });
        for &i in idx.iter().take(cap) {
            keep[i] = true;
        }
    }
    let mut split = Split::default();
    for (r, k) in records.into_iter().zip(keep) {
        if k {
            split.kept.push(r);
        } else {
            let detail = format!(
                "category {:?} over cap {cap}",
                r.primary_category().unwrap_or("")
            );
            split.dropped.push((r, detail));
        }
    }
    split
}

/// Thresholds for [`filter_pipeline`]. A `None` disables that stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CuratorConfig {
    /// Keep clips with at least this many views.
    pub min_views: Option<u64>,
    pub require_panorama: bool,
    /// Keep clips whose motion score is strictly above this.
    pub min_motion: Option<f64>,
    /// Keep clips whose aesthetic score is at least this.
    pub min_aesthetic: Option<f64>,
    /// Drop captions at least this similar to an earlier kept one.
    pub dedup_threshold: Option<f64>,
    pub category_cap: Option<usize>,
}

impl Default for CuratorConfig {
    fn default() -> Self {
        Self {
            min_views: Some(1000),
            require_panorama: true,
            min_motion: Some(0.4),
            min_aesthetic: Some(3.0),
            dedup_threshold: Some(0.8),
            category_cap: Some(DEFAULT_CATEGORY_CAP),
        }
    }
}

impl CuratorConfig {
    pub fn validate(&self) -> Result<(), CuratorError> {
        let bad = |msg: &str| Err(CuratorError::Config(msg.into()));
        if let Some(m) = self.min_motion {
            if !(0.0..=1.0).contains(&m) {
                return bad("min_motion must lie in [0, 1]");
            }
        }
        if let Some(a) = self.min_aesthetic {
            if !(1.0..=5.0).contains(&a) {
                return bad("min_aesthetic must lie in [1, 5]");
            }
        }
        if let Some(d) = self.dedup_threshold {
            if !(d > 0.0 && d <= 1.0) {
                return bad("dedup_threshold must lie in (0, 1]");
            }
        }
        if self.category_cap == Some(0) {
            return bad("category_cap must be at least 1");
        }
        Ok(())
    }
}

/// Why a record was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    InvalidRecord,
    LowViews,
    NotPanorama,
    MissingMotionScore,
    LowMotion,
    MissingAestheticScore,
    LowAesthetic,
    DuplicateCaption,
    CategoryCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub stage: String,
    pub reason: RejectReason,
    pub detail: String,
    pub record: ClipRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAudit {
    pub stage: String,
    pub input: usize,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub input: usize,
    pub kept: usize,
    pub rejected: usize,
    pub stages: Vec<StageAudit>,
    pub reasons: BTreeMap<RejectReason, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub kept: Vec<ClipRecord>,
    pub rejects: Vec<Rejection>,
    pub audit: Audit,
}

fn record_problem(r: &ClipRecord) -> Option<&'static str> {
    if r.end_frame <= r.start_frame {
        return Some("end_frame must exceed start_frame");
    }
    if r.motion_score.is_some_and(|m| !(0.0..=1.0).contains(&m)) {
        return Some("motion_score outside [0, 1]");
    }
    if r.aesthetic_score.is_some_and(|a| !(1.0..=5.0).contains(&a)) {
        return Some("aesthetic_score outside [1, 5]");
    }
    None
}

struct Stages {
    current: Vec<ClipRecord>,
    rejects: Vec<Rejection>,
    audit: Vec<StageAudit>,
}

impl Stages {
    /// Per-record stage: `check` returns the rejection, if any.
    fn per_record(
        &mut self,
        stage: &str,
        check: impl Fn(&ClipRecord) -> Option<(RejectReason, String)>,
    ) {
        let input = std::mem::take(&mut self.current);
        let n = input.len();
        for r in input {
            match check(&r) {
                Some((reason, detail)) => self.rejects.push(Rejection {
                    stage: stage.into(),
                    reason,
                    detail,
                    record: r,
                }),
                None => self.current.push(r),
            }
        }
        self.log(stage, n);
    }

    fn barrier(
        &mut self,
        stage: &str,
        reason: RejectReason,
        f: impl FnOnce(Vec<ClipRecord>) -> Split,
    ) {
        let input = std::mem::take(&mut self.current);
        let n = input.len();
        let split = f(input);
        self.current = split.kept;
        self.rejects
            .extend(split.dropped.into_iter().map(|(record, detail)| Rejection {
                stage: stage.into(),
                reason,
                detail,
                record,
            }));
        self.log(stage, n);
    }

    fn log(&mut self, stage: &str, input: usize) {
        self.audit.push(StageAudit {
            stage: stage.into(),
            input,
            kept: self.current.len(),
            dropped: input - self.current.len(),
        });
    }
}

/// Runs the filter stages in order: record validation, views, panorama flag,
/// motion, aesthetics, caption dedup, category balance. Every input record
/// ends up either kept or in exactly one rejection.
pub fn filter_pipeline(
    records: Vec<ClipRecord>,
    config: &CuratorConfig,
) -> Result<PipelineOutput, CuratorError> {
    config.validate()?;
    let input = records.len();
    let mut st = Stages {
        current: records,
        rejects: Vec::new(),
        audit: Vec::new(),
    };
    st.per_record("validate", |r| {
        record_problem(r).map(|p| (RejectReason::InvalidRecord, p.to_string()))
    });
    if let Some(min) = config.min_views {
        st.per_record("views", |r| {
            (r.view_count < min)
                .then(|| (RejectReason::LowViews, format!("{} < {min}", r.view_count)))
        });
    }
    if config.require_panorama {
        st.per_record("panorama", |r| {
            (!r.is_panorama).then(|| (RejectReason::NotPanorama, String::new()))
        });
    }
    if let Some(min) = config.min_motion {
        st.per_record("motion", |r| match r.motion_score {
            None => Some((RejectReason::MissingMotionScore, String::new())),
            Some(m) if m <= min => Some((RejectReason::LowMotion, format!("{m} <= {min}"))),
            Some(_) => None,
        });
    }
    if let Some(min) = config.min_aesthetic {
        st.per_record("aesthetic", |r| match r.aesthetic_score {
            None => Some((RejectReason::MissingAestheticScore, String::new())),
            Some(a) if a < min => Some((RejectReason::LowAesthetic, format!("{a} < {min}"))),
            Some(_) => None,
        });
    }
    if let Some(t) = config.dedup_threshold {
        st.barrier("dedup", RejectReason::DuplicateCaption, |rs| {
            dedup_by_caption(rs, t)
        });
    }
    if let Some(cap) = config.category_cap {
        st.barrier("balance", RejectReason::CategoryCap, |rs| {
            balance_categories(rs, cap)
        });
    }

    let mut reasons = BTreeMap::new();
    for r in &st.rejects {
        *reasons.entry(r.reason).or_insert(0) += 1;
    }
    let audit = Audit {
        input,
        kept: st.current.len(),
        rejected: st.rejects.len(),
        stages: st.audit,
        reasons,
    };
    Ok(PipelineOutput {
        kept: st.current,
        rejects: st.rejects,
        audit,
    })
}
