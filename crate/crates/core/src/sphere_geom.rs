//! Equirectangular (ERP) coordinate algebra and reprojection.
//!
//! Grid of radius `R`: `2R` columns of longitude by `R` rows of latitude.
//! Pixel `(x, y)` covers the cell whose center sits at
//! `φ = (2x+1)π/(2R)`, `θ = (2y+1−R)π/(2R)`, so row 0 is the southernmost
//! row and latitude grows with `y`.
//!
//! Directions use a right-handed frame with `+y` towards latitude `+π/2`
//! and `+z` at `φ = 0, θ = 0`:
//! `d(φ, θ) = (cos θ · sin φ, sin θ, cos θ · cos φ)`.
//!
//! All image sampling is bilinear on pixel centers, wrapping horizontally and
//! clamping vertically.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use ndarray::{Array3, ArrayView3, Axis};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("ERP radius must be at least 1")]
    ZeroRadius,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("latitude {0} outside [-π/2, π/2]")]
    LatitudeOutOfRange(f64),
    #[error("row coordinate {y} outside [-0.5, {max}]")]
    RowOutOfRange { y: f64, max: f64 },
    #[error("negative spherical frequency {0}")]
    NegativeFrequency(f64),
    #[error("cubemap face size must be at least 2, got {0}")]
    FaceTooSmall(usize),
    #[error("frame is {actual:?} (height, width) but the grid expects {expected:?}")]
    FrameMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("field of view {0} must lie in (0, π)")]
    FieldOfView(f64),
    #[error("degenerate output size {0}x{1}")]
    OutputSize(usize, usize),
    #[error("cubemap faces disagree in shape")]
    FaceShape,
}

/// The discrete `2R × R` equirectangular grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ErpGrid {
    radius: usize,
}

impl ErpGrid {
    pub fn new(radius: usize) -> Result<Self, GeomError> {
        if radius == 0 {
            return Err(GeomError::ZeroRadius);
        }
        Ok(Self { radius })
    }

    /// Grid whose dimensions are `(height, width)`, if they form a valid ERP grid.
    pub fn from_dims(height: usize, width: usize) -> Result<Self, GeomError> {
        let grid = Self::new(height)?;
        if width != grid.width() {
            return Err(GeomError::FrameMismatch {
                expected: (height, 2 * height),
                actual: (height, width),
            });
        }
        Ok(grid)
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn width(&self) -> usize {
        2 * self.radius
    }

    pub fn height(&self) -> usize {
        self.radius
    }

    /// Latitude of the center of row `y`.
    pub fn row_latitude(&self, y: usize) -> f64 {
        let r = self.radius as f64;
        (2.0 * y as f64 + 1.0 - r) * PI / (2.0 * r)
    }

    /// Longitude of the center of column `x`.
    pub fn column_longitude(&self, x: usize) -> f64 {
        let r = self.radius as f64;
        (2.0 * x as f64 + 1.0) * PI / (2.0 * r)
    }

    fn check_frame(&self, height: usize, width: usize) -> Result<(), GeomError> {
        if (height, width) != (self.height(), self.width()) {
            return Err(GeomError::FrameMismatch {
                expected: (self.height(), self.width()),
                actual: (height, width),
            });
        }
        Ok(())
    }
}

/// Longitude in `[0, 2π)`, latitude in `[-π/2, π/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    pub lon: f64,
    pub lat: f64,
}

impl SphericalCoord {
    /// Wraps the longitude into `[0, 2π)` and validates the latitude.
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeomError> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(GeomError::NonFinite("spherical coordinate"));
        }
        if lat.abs() > FRAC_PI_2 {
            return Err(GeomError::LatitudeOutOfRange(lat));
        }
        Ok(Self {
            lon: wrap_angle(lon),
            lat,
        })
    }

    /// Unit direction vector.
    pub fn direction(&self) -> [f64; 3] {
        let (sl, cl) = self.lat.sin_cos();
        let (sp, cp) = self.lon.sin_cos();
        [cl * sp, sl, cl * cp]
    }

    pub fn from_direction(d: [f64; 3]) -> Self {
        let n = norm(d);
        let lat = (d[1] / n).clamp(-1.0, 1.0).asin();
        let lon = wrap_angle(d[0].atan2(d[2]));
        Self { lon, lat }
    }
}

/// Continuous pixel coordinates; `x` is periodic with period `2R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyAxis {
    Horizontal,
    Vertical,
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Angular distance between two longitudes, in `[0, π]`.
pub fn longitude_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

pub fn erp_to_sphere(p: PixelCoord, grid: &ErpGrid) -> Result<SphericalCoord, GeomError> {
    if !p.x.is_finite() || !p.y.is_finite() {
        return Err(GeomError::NonFinite("pixel coordinate"));
    }
    let r = grid.radius as f64;
    if p.y < -0.5 || p.y > r - 0.5 {
        return Err(GeomError::RowOutOfRange {
            y: p.y,
            max: r - 0.5,
        });
    }
    let x = p.x.rem_euclid(2.0 * r);
    let lon = (2.0 * x + 1.0) * PI / (2.0 * r);
    let lat = ((2.0 * p.y + 1.0 - r) * PI / (2.0 * r)).clamp(-FRAC_PI_2, FRAC_PI_2);
    Ok(SphericalCoord {
        lon: wrap_angle(lon),
        lat,
    })
}

/// Exact inverse of [`erp_to_sphere`]; returns sub-pixel coordinates with
/// `x` in `[0, 2R)`.
pub fn sphere_to_erp(s: SphericalCoord, grid: &ErpGrid) -> Result<PixelCoord, GeomError> {
    if !s.lon.is_finite() || !s.lat.is_finite() {
        return Err(GeomError::NonFinite("spherical coordinate"));
    }
    if s.lat.abs() > FRAC_PI_2 {
        return Err(GeomError::LatitudeOutOfRange(s.lat));
    }
    let r = grid.radius as f64;
    let x = (s.lon * r / PI - 0.5).rem_euclid(2.0 * r);
    let y = s.lat * r / PI + (r - 1.0) / 2.0;
    Ok(PixelCoord {
        x: if x >= 2.0 * r { 0.0 } else { x },
        y,
    })
}

/// Arc lengths `(ds_φ, ds_θ) = (R cos θ dφ, R dθ)` at latitude `theta`.
pub fn arc_lengths(
    theta: f64,
    d_phi: f64,
    d_theta: f64,
    radius: f64,
) -> Result<(f64, f64), GeomError> {
    if ![theta, d_phi, d_theta, radius]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(GeomError::NonFinite("arc length input"));
    }
    if theta.abs() > FRAC_PI_2 {
        return Err(GeomError::LatitudeOutOfRange(theta));
    }
    Ok((radius * theta.cos() * d_phi, radius * d_theta))
}

/// Cycles per pixel for a spherical frequency `f_sph` at latitude `theta`.
pub fn cartesian_frequency(
    f_sph: f64,
    theta: f64,
    radius: f64,
    axis: FrequencyAxis,
) -> Result<f64, GeomError> {
    if ![f_sph, theta, radius].iter().all(|v| v.is_finite()) {
        return Err(GeomError::NonFinite("frequency input"));
    }
    if f_sph < 0.0 {
        return Err(GeomError::NegativeFrequency(f_sph));
    }
    if theta.abs() > FRAC_PI_2 {
        return Err(GeomError::LatitudeOutOfRange(theta));
    }
    Ok(match axis {
        FrequencyAxis::Vertical => radius * f_sph,
        // cos(±π/2) evaluates to ~6e-17, not 0
        FrequencyAxis::Horizontal => radius * f_sph * theta.cos().max(0.0),
    })
}

/// Bilinear sample of a `(C, H, W)` ERP frame at continuous pixel
/// coordinates, wrapping `x` and clamping `y`.
pub fn sample_erp(frame: ArrayView3<f64>, x: f64, y: f64, out: &mut [f64]) {
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    let x = x.rem_euclid(w as f64);
    let x0f = x.floor();
    let fx = x - x0f;
    let x0 = (x0f as usize) % w;
    let x1 = (x0 + 1) % w;
    let y = y.clamp(0.0, (h - 1) as f64);
    let y0 = y.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let fy = y - y0 as f64;
    for (c, o) in out.iter_mut().enumerate() {
        let top = (1.0 - fx) * frame[[c, y0, x0]] + fx * frame[[c, y0, x1]];
        let bot = (1.0 - fx) * frame[[c, y1, x0]] + fx * frame[[c, y1, x1]];
        *o = (1.0 - fy) * top + fy * bot;
    }
}

/// Bilinear sample at a direction on the sphere.
pub fn sample_erp_direction(frame: ArrayView3<f64>, grid: &ErpGrid, d: [f64; 3], out: &mut [f64]) {
    let s = SphericalCoord::from_direction(d);
    // from_direction always yields a valid coordinate
    let p = sphere_to_erp(s, grid).expect("valid spherical coordinate");
    sample_erp(frame, p.x, p.y, out);
}

/// Cube faces. Face pixel `(row j, column i)` of an `n × n` face looks along
/// `center + a·u + b·v` with `a = (2i+1)/n − 1`, `b = (2j+1)/n − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    Top,
    Bottom,
    Front,
    Back,
    Left,
    Right,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::Top,
        Face::Bottom,
        Face::Front,
        Face::Back,
        Face::Left,
        Face::Right,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::Top => "top",
            Face::Bottom => "bottom",
            Face::Front => "front",
            Face::Back => "back",
            Face::Left => "left",
            Face::Right => "right",
        }
    }

    pub fn is_side(self) -> bool {
        !matches!(self, Face::Top | Face::Bottom)
    }

    /// `(center, u, v)` axes.
    pub fn basis(self) -> ([f64; 3], [f64; 3], [f64; 3]) {
        match self {
            Face::Front => ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            Face::Back => ([0.0, 0.0, -1.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]),
            Face::Right => ([1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]),
            Face::Left => ([-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]),
            Face::Top => ([0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]),
            Face::Bottom => ([0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        }
    }

    /// Direction through the center of face pixel `(j, i)`.
    pub fn pixel_direction(self, j: usize, i: usize, face_size: usize) -> [f64; 3] {
        let n = face_size as f64;
        let a = (2.0 * i as f64 + 1.0) / n - 1.0;
        let b = (2.0 * j as f64 + 1.0) / n - 1.0;
        self.plane_direction(a, b)
    }

    /// Direction through face-plane coordinates `(a, b) ∈ [-1, 1]²`.
    pub fn plane_direction(self, a: f64, b: f64) -> [f64; 3] {
        let (c, u, v) = self.basis();
        let d = [
            c[0] + a * u[0] + b * v[0],
            c[1] + a * u[1] + b * v[1],
            c[2] + a * u[2] + b * v[2],
        ];
        let n = norm(d);
        [d[0] / n, d[1] / n, d[2] / n]
    }

    /// The face a direction pierces, with its face-plane coordinates.
    pub fn locate(d: [f64; 3]) -> (Face, f64, f64) {
        let [x, y, z] = d;
        let (ax, ay, az) = (x.abs(), y.abs(), z.abs());
        let face = if ay >= ax && ay >= az {
            if y > 0.0 {
                Face::Top
            } else {
                Face::Bottom
            }
        } else if ax >= az {
            if x > 0.0 {
                Face::Right
            } else {
                Face::Left
            }
        } else if z > 0.0 {
            Face::Front
        } else {
            Face::Back
        };
        let (c, u, v) = face.basis();
        let depth = dot(d, c);
        (face, dot(d, u) / depth, dot(d, v) / depth)
    }
}

/// Six `(C, n, n)` face images indexed by [`Face::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct CubemapFrame {
    faces: Vec<Array3<f64>>,
}

impl CubemapFrame {
    pub fn new(faces: Vec<Array3<f64>>) -> Result<Self, GeomError> {
        if faces.len() != 6 {
            return Err(GeomError::FaceShape);
        }
        let shape = faces[0].shape().to_vec();
        if shape[1] != shape[2] || shape[1] < 2 || faces.iter().any(|f| f.shape() != shape) {
            return Err(GeomError::FaceShape);
        }
        Ok(Self { faces })
    }

    pub fn constant(channels: usize, face_size: usize, value: f64) -> Result<Self, GeomError> {
        Self::new(vec![
            Array3::from_elem(
                (channels, face_size, face_size),
                value
            );
            6
        ])
    }

    pub fn face_size(&self) -> usize {
        self.faces[0].shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.faces[0].shape()[0]
    }

    pub fn face(&self, face: Face) -> &Array3<f64> {
        &self.faces[face.index()]
    }

    pub fn face_mut(&mut self, face: Face) -> &mut Array3<f64> {
        &mut self.faces[face.index()]
    }

    /// Bilinear sample at a direction, clamping at face edges.
    pub fn sample_direction(&self, d: [f64; 3], out: &mut [f64]) {
        let (face, a, b) = Face::locate(d);
        let img = &self.faces[face.index()];
        let n = self.face_size();
        let to_px = |t: f64| ((t + 1.0) * n as f64 / 2.0 - 0.5).clamp(0.0, (n - 1) as f64);
        let (px, py) = (to_px(a), to_px(b));
        let (i0, j0) = (px.floor() as usize, py.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(n - 1), (j0 + 1).min(n - 1));
        let (fx, fy) = (px - i0 as f64, py - j0 as f64);
        for (c, o) in out.iter_mut().enumerate() {
            let top = (1.0 - fx) * img[[c, j0, i0]] + fx * img[[c, j0, i1]];
            let bot = (1.0 - fx) * img[[c, j1, i0]] + fx * img[[c, j1, i1]];
            *o = (1.0 - fy) * top + fy * bot;
        }
    }
}

/// Gnomonic projection of a `(C, R, 2R)` ERP frame onto the six cube faces.
pub fn erp_to_cubemap(
    frame: ArrayView3<f64>,
    face_size: usize,
    grid: &ErpGrid,
) -> Result<CubemapFrame, GeomError> {
    if face_size < 2 {
        return Err(GeomError::FaceTooSmall(face_size));
    }
    grid.check_frame(frame.shape()[1], frame.shape()[2])?;
    let channels = frame.shape()[0];
    let mut sample = vec![0.0; channels];
    let faces = Face::ALL
        .iter()
        .map(|&face| {
            let mut img = Array3::zeros((channels, face_size, face_size));
            for j in 0..face_size {
                for i in 0..face_size {
                    let d = face.pixel_direction(j, i, face_size);
                    sample_erp_direction(frame, grid, d, &mut sample);
                    for c in 0..channels {
                        img[[c, j, i]] = sample[c];
                    }
                }
            }
            img
        })
        .collect();
    CubemapFrame::new(faces)
}

/// Resamples a cubemap back onto the ERP grid.
pub fn cubemap_to_erp(cm: &CubemapFrame, grid: &ErpGrid) -> Result<Array3<f64>, GeomError> {
    let channels = cm.channels();
    let mut out = Array3::zeros((channels, grid.height(), grid.width()));
    let mut sample = vec![0.0; channels];
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let s = SphericalCoord {
                lon: grid.column_longitude(x),
                lat: grid.row_latitude(y),
            };
            cm.sample_direction(s.direction(), &mut sample);
            for c in 0..channels {
                out[[c, y, x]] = sample[c];
            }
        }
    }
    Ok(out)
}

/// Pinhole view of an ERP frame. `fov` is the horizontal field of view;
/// output columns run east and rows run north, matching the ERP axes.
pub fn erp_to_perspective(
    frame: ArrayView3<f64>,
    view: SphericalCoord,
    fov: f64,
    out_w: usize,
    out_h: usize,
) -> Result<Array3<f64>, GeomError> {
    if !(fov > 0.0 && fov < PI) {
        return Err(GeomError::FieldOfView(fov));
    }
    if out_w == 0 || out_h == 0 {
        return Err(GeomError::OutputSize(out_w, out_h));
    }
    let grid = ErpGrid::from_dims(frame.shape()[1], frame.shape()[2])?;
    let (forward, east, north) = view_basis(view);
    let half = (fov / 2.0).tan();
    let aspect = out_h as f64 / out_w as f64;
    let channels = frame.shape()[0];
    let mut out = Array3::zeros((channels, out_h, out_w));
    let mut sample = vec![0.0; channels];
    for j in 0..out_h {
        let b = ((2.0 * j as f64 + 1.0) / out_h as f64 - 1.0) * half * aspect;
        for i in 0..out_w {
            let a = ((2.0 * i as f64 + 1.0) / out_w as f64 - 1.0) * half;
            let ray = [
                forward[0] + a * east[0] + b * north[0],
                forward[1] + a * east[1] + b * north[1],
                forward[2] + a * east[2] + b * north[2],
            ];
            sample_erp_direction(frame, &grid, ray, &mut sample);
            for c in 0..channels {
                out[[c, j, i]] = sample[c];
            }
        }
    }
    Ok(out)
}

/// `(forward, east, north)` unit vectors of a camera looking at `view`.
pub fn view_basis(view: SphericalCoord) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let (sl, cl) = view.lat.sin_cos();
    let (sp, cp) = view.lon.sin_cos();
    let forward = [cl * sp, sl, cl * cp];
    let east = [cp, 0.0, -sp];
    let north = [-sl * sp, cl, -sl * cp];
    (forward, east, north)
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Frame `f` of an `(F, H, W, C)` video viewed as `(C, H, W)`.
pub(crate) fn frame_chw(video: &ndarray::Array4<f64>, f: usize) -> ArrayView3<'_, f64> {
    video.index_axis(Axis(0), f).permuted_axes([2, 0, 1])
}
