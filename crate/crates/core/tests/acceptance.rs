//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Tolerances and runtime budgets are fixed constants below.
//!
//! Run with `cargo test -p panokit-core --test acceptance`.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::{FRAC_PI_2, PI};
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3, Array4};
use panokit_core::curator::{self, ClipRecord, CuratorConfig};
use panokit_core::decode_pad::{padded_decode, Decoder, ReferenceConvDecoder};
use panokit_core::denoise::{
    accumulate_seam_error, flow_interpolate, flow_velocity, run_denoise, Conditioning,
    DenoiseOptions, DenoiseSchedule, SeamErrorModel,
};
use panokit_core::metrics::{
    cubemap_weighted_score, end_continuity, ConstantMetric, FaceWeights, MeanValue, VideoFrames,
};
use panokit_core::noise_field::{
    latitude_aware_remap, sample_iid_gaussian, spectrum_reports, variance_preserving_interp,
};
use panokit_core::plugins::{ConstantTarget, PointwiseNonlinear};
use panokit_core::sphere_geom::{
    cubemap_to_erp, erp_to_cubemap, erp_to_sphere, longitude_distance, sphere_to_erp, ErpGrid,
    Face, PixelCoord, SphericalCoord,
};
use panokit_core::{rng, LatentTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// 1. noise moments per latitude band
const C1_SEEDS: u64 = 100;
const C1_RADIUS: usize = 128;
const C1_CHANNELS: usize = 16;
const C1_BANDS: usize = 8;
const C1_MEAN_TOL: f64 = 0.01;
const C1_VAR_TOL: f64 = 0.02;

fn noise_moments() -> Outcome {
    let grid = ErpGrid::new(C1_RADIUS).unwrap();
    let rows_per_band = C1_RADIUS / C1_BANDS;
    let mut sum = [0.0f64; C1_BANDS];
    let mut sumsq = [0.0f64; C1_BANDS];
    let mut count = [0usize; C1_BANDS];
    for seed in 0..C1_SEEDS {
        let field = latitude_aware_remap(&sample_iid_gaussian(grid, C1_CHANNELS, seed).unwrap());
        for ((_, y, _), &v) in field.data().indexed_iter() {
            let b = y / rows_per_band;
            sum[b] += v;
            sumsq[b] += v * v;
            count[b] += 1;
        }
    }
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    for b in 0..C1_BANDS {
        let n = count[b] as f64;
        let mean = sum[b] / n;
        let var = (sumsq[b] - n * mean * mean) / (n - 1.0);
        worst_mean = worst_mean.max(mean.abs());
        worst_var = worst_var.max((var - 1.0).abs());
    }
    outcome(
        worst_mean < C1_MEAN_TOL && worst_var < C1_VAR_TOL,
        format!("max|mean|={worst_mean:.5} (<{C1_MEAN_TOL}), max|var-1|={worst_var:.5} (<{C1_VAR_TOL}) over {C1_BANDS} bands"),
    )
}

// 2. horizontal bandwidth tracks cos(latitude)
const C2_FIELDS: u64 = 100;
const C2_RADIUS: usize = 128;
const C2_CHANNELS: usize = 4;
const C2_THRESHOLD: f64 = 0.99;
const C2_MAX_LAT_DEG: f64 = 75.0;
const C2_REL_TOL: f64 = 0.10;

fn bandwidth_law() -> Outcome {
    let grid = ErpGrid::new(C2_RADIUS).unwrap();
    let mut support = vec![0.0; grid.height()];
    for seed in 0..C2_FIELDS {
        let field =
            latitude_aware_remap(&sample_iid_gaussian(grid, C2_CHANNELS, 10_000 + seed).unwrap());
        for r in spectrum_reports(field.data(), &grid, C2_THRESHOLD).unwrap() {
            support[r.row_index] += r.measured_support / C2_FIELDS as f64;
        }
    }
    // the two rows straddling the equator
    let eq = 0.5 * (support[C2_RADIUS / 2 - 1] + support[C2_RADIUS / 2]);
    let eq_cos = grid.row_latitude(C2_RADIUS / 2).cos();
    let mut worst = (0.0f64, 0.0f64);
    for (y, s) in support.iter().enumerate() {
        let lat = grid.row_latitude(y);
        if lat.abs().to_degrees() > C2_MAX_LAT_DEG {
            continue;
        }
        let err = ((s / eq) / (lat.cos() / eq_cos) - 1.0).abs();
        if err > worst.0 {
            worst = (err, lat.to_degrees());
        }
    }
    outcome(
        worst.0 <= C2_REL_TOL,
        format!(
            "max |ratio/cos - 1| = {:.3} at {:.1} deg (tol {C2_REL_TOL}); equator support {eq:.1} of {}",
            worst.0,
            worst.1,
            grid.width()
        ),
    )
}

// 3. seam error spreading
const C3_W: usize = 64;
const C3_T: usize = 64;

fn seam_error() -> Outcome {
    let model = SeamErrorModel::seam_impulse();
    let rot = accumulate_seam_error(&model, C3_T, C3_W, true).unwrap();
    let plain = accumulate_seam_error(&model, C3_T, C3_W, false).unwrap();
    let spread =
        rot.iter().cloned().fold(f64::MIN, f64::max) - rot.iter().cloned().fold(f64::MAX, f64::min);
    let mean = plain.iter().sum::<f64>() / C3_W as f64;
    let ratio = plain.iter().cloned().fold(f64::MIN, f64::max) / mean;
    outcome(
        spread == 0.0 && ratio == C3_W as f64,
        format!("rotated max-min={spread}, plain max/mean={ratio}"),
    )
}

// 4. rotation is invisible to shift-equivariant predictors
const C4_STEPS: usize = 50;
const C4_W: usize = 32;

fn rotation_equivariance() -> Outcome {
    let z = LatentTensor::new(rng::gaussian_array([4, 2, 16, C4_W], 4)).unwrap();
    let s = DenoiseSchedule::uniform(C4_STEPS).unwrap();
    let c = Conditioning::default();
    let plain = run_denoise(&z, &s, &PointwiseNonlinear, &c, DenoiseOptions::default()).unwrap();
    let rot = run_denoise(
        &z,
        &s,
        &PointwiseNonlinear,
        &c,
        DenoiseOptions {
            rotated: true,
            ..Default::default()
        },
    )
    .unwrap();
    outcome(
        plain.bit_eq(&rot),
        format!("bit-identical: {}", plain.bit_eq(&rot)),
    )
}

// 5. perfect oracle
const C5_STEPS: usize = 50;
const C5_TOL: f64 = 1e-6;

fn perfect_oracle() -> Outcome {
    let shape = [4, 3, 16, 32];
    let z0 = LatentTensor::new(rng::gaussian_array(shape, 50)).unwrap();
    let target = LatentTensor::new(rng::gaussian_array(shape, 51)).unwrap();
    let s = DenoiseSchedule::uniform(C5_STEPS).unwrap();
    let out = run_denoise(
        &z0,
        &s,
        &ConstantTarget::new(target.clone()),
        &Conditioning::default(),
        DenoiseOptions::default(),
    )
    .unwrap();
    let err = out.max_abs_diff(&target).unwrap();
    outcome(
        err < C5_TOL,
        format!("max elementwise error {err:.2e} (<{C5_TOL:e})"),
    )
}

// 6. padded decoding
const C6_LATENTS: u64 = 100;
const C6_SEAM_TOL: f64 = 1e-6;
const C6_MIN_FRACTION: f64 = 0.95;

fn random_kernel(rng: &mut ChaCha8Rng, symmetric: bool) -> Array2<f64> {
    let mut k = Array2::from_shape_fn((5, 5), |_| rng.random::<f64>());
    if symmetric {
        for i in 0..5 {
            for j in 0..2 {
                k[[i, 4 - j]] = k[[i, j]];
            }
        }
    }
    let total = k.sum();
    k / total
}

fn random_latent(rng: &mut ChaCha8Rng, shape: [usize; 4], mirrored: bool) -> LatentTensor {
    let mut z = LatentTensor::from_fn(shape, |_| rng.random::<f64>()).unwrap();
    if mirrored {
        let w = shape[3];
        let copy = z.clone();
        for ((c, f, y, x), v) in z.data_mut().indexed_iter_mut() {
            if x >= w / 2 {
                *v = copy.data()[[c, f, y, w - 1 - x]];
            }
        }
    }
    z
}

fn seam(t: &LatentTensor) -> f64 {
    end_continuity(&VideoFrames::from_latent(t).unwrap()).mean
}

fn padded_decoding() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let shape = [3, 2, 8, 16];
    let mut exact = 0;
    let mut worst_excess = 0.0f64;
    let mut worst_symmetric = 0.0f64;
    let mut unpadded_seam = 0;
    let mut unpadded_symmetric_seam = 0;
    for i in 0..C6_LATENTS {
        let u = 1 + (i % 2) as usize;
        let r = 2 + (i % 3) as usize;

        // generic latent and kernel
        let k = random_kernel(&mut rng, false);
        let dec = ReferenceConvDecoder::new(k.clone(), u).unwrap();
        let oracle = ReferenceConvDecoder::circular(k, u).unwrap();
        let z = random_latent(&mut rng, shape, false);
        let padded = padded_decode(&z, &dec, r).unwrap();
        let wrapped = oracle.decode(&z).unwrap();
        if padded.bit_eq(&wrapped) {
            exact += 1;
        }
        worst_excess = worst_excess.max((seam(&padded) - seam(&wrapped)).abs());
        if seam(&padded_decode(&z, &dec, 0).unwrap()) > 0.0 {
            unpadded_seam += 1;
        }

        // content continuous across the seam: mirrored latent, mirrored kernel
        let ks = random_kernel(&mut rng, true);
        let dec = ReferenceConvDecoder::new(ks, u).unwrap();
        let zs = random_latent(&mut rng, shape, true);
        worst_symmetric = worst_symmetric.max(seam(&padded_decode(&zs, &dec, r).unwrap()));
        if seam(&padded_decode(&zs, &dec, 0).unwrap()) > 0.0 {
            unpadded_symmetric_seam += 1;
        }
    }
    let n = C6_LATENTS as f64;
    let pass = exact == C6_LATENTS as usize
        && worst_excess <= C6_SEAM_TOL
        && worst_symmetric <= C6_SEAM_TOL
        && unpadded_seam as f64 / n >= C6_MIN_FRACTION
        && unpadded_symmetric_seam as f64 / n >= C6_MIN_FRACTION;
    outcome(
        pass,
        format!(
            "r>=2: {exact}/{C6_LATENTS} equal circular oracle, seam excess {worst_excess:.1e}, seam on seam-continuous content {worst_symmetric:.1e}; r=0: seam>0 in {unpadded_seam}/{C6_LATENTS} generic and {unpadded_symmetric_seam}/{C6_LATENTS} seam-continuous"
        ),
    )
}

// 7. cubemap-weighted aggregation
const C7_RADIUS: usize = 128;
const C7_FACE: usize = 64;
const C7_REL_TOL: f64 = 0.02;
const C7_QUAD: usize = 2000;

/// Solid-angle quadrature: each face's area-weighted mean of the field,
/// combined with the default weights.
fn quadrature_oracle(field: impl Fn(f64) -> f64) -> f64 {
    let weights = FaceWeights::default();
    let mut num = [0.0f64; 6];
    let mut den = [0.0f64; 6];
    let (nlat, nlon) = (C7_QUAD, 2 * C7_QUAD);
    for i in 0..nlat {
        let lat = -FRAC_PI_2 + (i as f64 + 0.5) * PI / nlat as f64;
        let d_omega = lat.cos();
        for j in 0..nlon {
            let lon = (j as f64 + 0.5) * 2.0 * PI / nlon as f64;
            let d = [lat.cos() * lon.sin(), lat.sin(), lat.cos() * lon.cos()];
            let axis = (0..3)
                .max_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()))
                .unwrap();
            let face = match (axis, d[axis] > 0.0) {
                (1, true) => Face::Top,
                (1, false) => Face::Bottom,
                (2, true) => Face::Front,
                (2, false) => Face::Back,
                (0, true) => Face::Right,
                _ => Face::Left,
            };
            num[face.index()] += field(lat) * d_omega;
            den[face.index()] += d_omega;
        }
    }
    Face::ALL
        .iter()
        .map(|&f| weights.get(f) * num[f.index()] / den[f.index()])
        .sum()
}

fn metric_plumbing() -> Outcome {
    let grid = ErpGrid::new(C7_RADIUS).unwrap();
    let textured = VideoFrames::new(Array4::from_shape_fn(
        (2, C7_RADIUS, 2 * C7_RADIUS, 3),
        |(f, y, x, c)| ((f * 13 + y * 7 + x * 3 + c) % 17) as f64 / 16.0,
    ))
    .unwrap();
    let mut constant_exact = true;
    for c in [0.0, 0.1, 1.0 / 3.0, 0.7, 21.86] {
        let s = cubemap_weighted_score(
            &textured,
            &ConstantMetric(c),
            &FaceWeights::default(),
            C7_FACE,
        )
        .unwrap();
        constant_exact &= s.score == c;
    }

    let field = |lat: f64| lat.sin().max(0.0);
    let v = VideoFrames::new(Array4::from_shape_fn(
        (1, C7_RADIUS, 2 * C7_RADIUS, 1),
        |(_, y, _, _)| field(grid.row_latitude(y)),
    ))
    .unwrap();
    let score = cubemap_weighted_score(&v, &MeanValue, &FaceWeights::default(), C7_FACE)
        .unwrap()
        .score;
    let oracle = quadrature_oracle(field);
    let rel = (score - oracle).abs() / oracle;
    outcome(
        constant_exact && rel < C7_REL_TOL,
        format!("constant-metric exact: {constant_exact}; max(sin lat, 0): score {score:.5} vs quadrature {oracle:.5}, rel err {rel:.4} (<{C7_REL_TOL})"),
    )
}

// 8. geometry round trips
const C8_POINTS: usize = 100_000;
const C8_COORD_TOL: f64 = 1e-9;
const C8_RADIUS: usize = 128;
const C8_FACE: usize = 128;
const C8_FIELDS: u64 = 3;
const C8_CUBE_TOL: f64 = 0.02;

fn band_limited_frame(grid: &ErpGrid, seed: u64) -> Array3<f64> {
    // Re/Im of (z + i x)^k = cos^k(lat) · cos/sin(k·lon), plus polynomials in y:
    // all polynomial in the direction, so band limited on the sphere.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<[f64; 3]> = (0..=8)
        .map(|_| {
            [
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
            ]
        })
        .collect();
    Array3::from_shape_fn((3, grid.height(), grid.width()), |(c, y, x)| {
        let lat = grid.row_latitude(y);
        let lon = grid.column_longitude(x);
        let mut v = 0.5 + 0.1 * lat.sin() * (c as f64 - 1.0);
        for (k, a) in coeffs.iter().enumerate() {
            v += a[c] * lat.cos().powi(k as i32) * ((k as f64) * lon + c as f64).cos();
        }
        v
    })
}

fn geometry_round_trips() -> Outcome {
    let grid = ErpGrid::new(C8_RADIUS).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r = C8_RADIUS as f64;
    let mut worst_coord = 0.0f64;
    for _ in 0..C8_POINTS {
        let p = PixelCoord {
            x: rng.random_range(0.0..2.0 * r),
            y: rng.random_range(-0.5..r - 0.5),
        };
        let q = sphere_to_erp(erp_to_sphere(p, &grid).unwrap(), &grid).unwrap();
        let dx = (p.x - q.x).abs();
        worst_coord = worst_coord.max(dx.min(2.0 * r - dx)).max((p.y - q.y).abs());

        let s = SphericalCoord::new(
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(-FRAC_PI_2..FRAC_PI_2),
        )
        .unwrap();
        let t = erp_to_sphere(sphere_to_erp(s, &grid).unwrap(), &grid).unwrap();
        worst_coord = worst_coord
            .max(longitude_distance(s.lon, t.lon))
            .max((s.lat - t.lat).abs());
    }

    let mut worst_cube = 0.0f64;
    for seed in 0..C8_FIELDS {
        let frame = band_limited_frame(&grid, seed);
        let cube = erp_to_cubemap(frame.view(), C8_FACE, &grid).unwrap();
        let back = cubemap_to_erp(&cube, &grid).unwrap();
        let mae = (&back - &frame).mapv(f64::abs).mean().unwrap();
        worst_cube = worst_cube.max(mae);
    }
    outcome(
        worst_coord <= C8_COORD_TOL && worst_cube < C8_CUBE_TOL,
        format!("coordinate round trip max err {worst_coord:.1e} (<={C8_COORD_TOL:e}); cubemap round trip MAE {worst_cube:.2e} (<{C8_CUBE_TOL})"),
    )
}

// 9. curator thresholds against a brute-force filter
const C9_RECORDS: usize = 1000;

fn fixture() -> Vec<ClipRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let words = [
        "sunset", "beach", "waves", "city", "skyline", "night", "forest", "trail", "mountain",
        "snow", "market", "street", "crowd", "river", "bridge", "temple", "desert", "dunes",
    ];
    let cats = ["beach", "city", "forest", "mountain", "market"];
    let mut captions: Vec<String> = Vec::new();
    (0..C9_RECORDS)
        .map(|i| {
            let caption = if !captions.is_empty() && rng.random_bool(0.15) {
                // near or exact repeat of an earlier caption
                let base = captions[rng.random_range(0..captions.len())].clone();
                if rng.random_bool(0.5) {
                    base
                } else {
                    format!("{base} {}", words[rng.random_range(0..words.len())])
                }
            } else {
                let n = rng.random_range(4..10);
                (0..n)
                    .map(|_| words[rng.random_range(0..words.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            captions.push(caption.clone());
            let primary = if rng.random_bool(0.8) {
                0
            } else {
                rng.random_range(0..cats.len())
            };
            let poi = if rng.random_bool(0.05) {
                vec![]
            } else {
                vec![
                    cats[primary].to_string(),
                    cats[rng.random_range(0..cats.len())].to_string(),
                ]
            };
            ClipRecord {
                clip_id: format!("clip{:04}", rng.random_range(0..10_000)),
                source_video: format!("video{}", i / 10),
                start_frame: (i % 10) as u64 * 160,
                end_frame: (i % 10) as u64 * 160 + 160,
                caption,
                poi_categories: poi,
                is_panorama: rng.random_bool(0.93),
                view_count: rng.random_range(0..20_000),
                motion_score: rng.random_bool(0.97).then(|| rng.random_range(0.2..1.0)),
                aesthetic_score: rng
                    .random_bool(0.97)
                    .then(|| (rng.random_range(2.0..5.0f64) * 4.0).round() / 4.0),
            }
        })
        .collect()
}

/// Independent reference: straightforward loops, own tokenizer and similarity.
fn brute_force(records: &[ClipRecord]) -> (Vec<String>, Vec<usize>) {
    let mut counts = Vec::new();
    let mut cur: Vec<&ClipRecord> = records.iter().collect();
    cur.retain(|r| r.end_frame > r.start_frame);
    counts.push(cur.len());
    cur.retain(|r| r.view_count >= 1000);
    counts.push(cur.len());
    cur.retain(|r| r.is_panorama);
    counts.push(cur.len());
    cur.retain(|r| matches!(r.motion_score, Some(m) if m > 0.4));
    counts.push(cur.len());
    cur.retain(|r| matches!(r.aesthetic_score, Some(a) if a >= 3.0));
    counts.push(cur.len());

    let shingles = |s: &str| -> HashSet<Vec<String>> {
        let mut toks = Vec::new();
        let mut word = String::new();
        for ch in s.chars().chain(std::iter::once(' ')) {
            if ch.is_alphanumeric() {
                word.extend(ch.to_lowercase());
            } else if !word.is_empty() {
                toks.push(std::mem::take(&mut word));
            }
        }
        if toks.len() < 3 {
            return if toks.is_empty() {
                HashSet::new()
            } else {
                HashSet::from([toks])
            };
        }
        (0..toks.len() - 2)
            .map(|i| toks[i..i + 3].to_vec())
            .collect()
    };
    let sim = |a: &HashSet<Vec<String>>, b: &HashSet<Vec<String>>| {
        if a.is_empty() && b.is_empty() {
            return 1.0;
        }
        let i = a.iter().filter(|s| b.contains(*s)).count() as f64;
        i / (a.len() as f64 + b.len() as f64 - i)
    };
    let mut kept: Vec<(&ClipRecord, HashSet<Vec<String>>)> = Vec::new();
    for r in cur {
        let sh = shingles(&r.caption);
        if kept.iter().all(|(_, k)| sim(k, &sh) < 0.8) {
            kept.push((r, sh));
        }
    }
    counts.push(kept.len());

    let mut by_cat: BTreeMap<String, Vec<&ClipRecord>> = BTreeMap::new();
    for (r, _) in &kept {
        let key = r
            .poi_categories
            .first()
            .map(|c| format!("+{c}"))
            .unwrap_or_default();
        by_cat.entry(key).or_default().push(r);
    }
    let mut chosen: HashSet<*const ClipRecord> = HashSet::new();
    for group in by_cat.values_mut() {
        group.sort_by(|a, b| {
            b.aesthetic_score
                .partial_cmp(&a.aesthetic_score)
                .unwrap()
                .then(a.clip_id.cmp(&b.clip_id))
        });
        chosen.extend(group.iter().take(200).map(|r| *r as *const ClipRecord));
    }
    let survivors: Vec<String> = kept
        .iter()
        .filter(|(r, _)| chosen.contains(&(*r as *const ClipRecord)))
        .map(|(r, _)| r.clip_id.clone())
        .collect();
    counts.push(survivors.len());
    (survivors, counts)
}

fn curator_thresholds() -> Outcome {
    let records = fixture();
    let out = curator::filter_pipeline(records.clone(), &CuratorConfig::default()).unwrap();
    let (want_ids, want_counts) = brute_force(&records);
    let got_counts: Vec<usize> = out.audit.stages.iter().map(|s| s.kept).collect();
    let got_ids: Vec<String> = out.kept.iter().map(|r| r.clip_id.clone()).collect();
    let again = curator::filter_pipeline(out.kept.clone(), &CuratorConfig::default()).unwrap();
    let idempotent = again.kept == out.kept && again.rejects.is_empty();
    let capped = *want_counts.get(5).unwrap() > *want_counts.last().unwrap();
    outcome(
        got_counts == want_counts && got_ids == want_ids && idempotent && capped,
        format!("stage survivors {got_counts:?} vs reference {want_counts:?}; idempotent: {idempotent}; cap exercised: {capped}"),
    )
}

// 10. interpolation against a naive four-neighbour reference
const C10_POINTS: usize = 100_000;
const C10_TOL: f64 = 1e-12;

fn naive_interp(plane: &Array2<f64>, x: f64, y: f64) -> f64 {
    let (h, w) = plane.dim();
    let xf = x.floor();
    let yc = y.max(0.0).min((h - 1) as f64);
    let yf = yc.floor();
    let (ax, ay) = (x - xf, yc - yf);
    let col = |i: f64| (i as i64).rem_euclid(w as i64) as usize;
    let row = |j: f64| (j as usize).min(h - 1);
    let corners = [
        (xf, yf, (1.0 - ax) * (1.0 - ay)),
        (xf + 1.0, yf, ax * (1.0 - ay)),
        (xf, yf + 1.0, (1.0 - ax) * ay),
        (xf + 1.0, yf + 1.0, ax * ay),
    ];
    let mut lin = 0.0;
    let mut sq = 0.0;
    for (cx, cy, wgt) in corners {
        let p = plane[[row(cy), col(cx)]];
        lin += wgt * p;
        sq += wgt * p * p;
    }
    let sign = if lin > 0.0 {
        1.0
    } else if lin < 0.0 {
        -1.0
    } else {
        0.0
    };
    sign * sq.sqrt()
}

fn interpolation_oracle() -> Outcome {
    let grid = ErpGrid::new(64).unwrap();
    let field = sample_iid_gaussian(grid, 2, 10).unwrap();
    let planes: Vec<Array2<f64>> = (0..2)
        .map(|c| field.data().index_axis(ndarray::Axis(0), c).to_owned())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..C10_POINTS {
        let x = rng.random_range(-128.0..256.0);
        let y = rng.random_range(0.0..63.0);
        let got = variance_preserving_interp(&field, x, y);
        for (c, plane) in planes.iter().enumerate() {
            worst = worst.max((got[c] - naive_interp(plane, x, y)).abs());
        }
    }
    outcome(
        worst <= C10_TOL,
        format!("max abs diff {worst:.1e} over {C10_POINTS} points (<= {C10_TOL:e})"),
    )
}

// 11. finite differences of the interpolation path
const C11_PAIRS: u64 = 20;
const C11_H: f64 = 1e-4;
const C11_TOL: f64 = 1e-8;

fn flow_derivative() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for seed in 0..C11_PAIRS {
        let z0 = LatentTensor::new(rng::gaussian_array([2, 2, 4, 8], 2 * seed)).unwrap();
        let z1 = LatentTensor::new(rng::gaussian_array([2, 2, 4, 8], 2 * seed + 1)).unwrap();
        let t = rng.random_range(0.01..0.99);
        let plus = flow_interpolate(&z0, &z1, t + C11_H).unwrap();
        let minus = flow_interpolate(&z0, &z1, t - C11_H).unwrap();
        let v = flow_velocity(&z0, &z1).unwrap();
        for ((p, m), v) in plus
            .data()
            .iter()
            .zip(minus.data().iter())
            .zip(v.data().iter())
        {
            worst = worst.max(((p - m) / (2.0 * C11_H) - v).abs());
        }
    }
    outcome(
        worst <= C11_TOL,
        format!("max |FD - velocity| {worst:.1e} (<= {C11_TOL:e})"),
    )
}

// 12. end continuity on hand-built videos
fn end_continuity_cases() -> Outcome {
    let build = |left: f64, right: f64, inner: f64| {
        VideoFrames::new(Array4::from_shape_fn(
            (3, 8, 16, 3),
            |(_, _, x, _)| match x {
                0 => left,
                15 => right,
                _ => inner,
            },
        ))
        .unwrap()
    };
    let cases = [
        (build(0.4, 0.4, 0.4), 0.0),
        (build(0.0, 1.0, 0.5), 1.0),
        (build(1.0, 0.0, 0.2), 1.0),
        (build(0.25, 0.75, 0.0), 0.5),
    ];
    let got: Vec<f64> = cases.iter().map(|(v, _)| end_continuity(v).mean).collect();
    let want: Vec<f64> = cases.iter().map(|(_, w)| *w).collect();
    outcome(got == want, format!("scores {got:?}, expected {want:?}"))
}

fn main() {
    type Criterion = (&'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 12] = [
        ("C1 noise moments per latitude band", 60_000, noise_moments),
        ("C2 bandwidth tracks cos(latitude)", 120_000, bandwidth_law),
        ("C3 seam-error spreading", 1_000, seam_error),
        ("C4 rotation equivariance", 10_000, rotation_equivariance),
        ("C5 perfect-oracle sampling", 5_000, perfect_oracle),
        ("C6 padded decoding", 30_000, padded_decoding),
        ("C7 cubemap-weighted aggregation", 30_000, metric_plumbing),
        ("C8 geometry round trips", 30_000, geometry_round_trips),
        ("C9 curator thresholds", 10_000, curator_thresholds),
        ("C10 interpolation oracle", 10_000, interpolation_oracle),
        ("C11 flow-matching derivative", 1_000, flow_derivative),
        ("C12 end-continuity by hand", 1_000, end_continuity_cases),
    ];
    let mut failed = 0;
    for (name, budget_ms, run) in criteria {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= Duration::from_millis(budget_ms);
        let pass = o.pass && in_budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.2}s of {:.0}s budget]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget_ms as f64 / 1000.0
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
