//! LiDAR/camera depth fusion.
//!
//! LiDAR frame: x forward, y left, z up. A LiDAR scan is held as a
//! [`RangeImage`] (beam rows by azimuth columns), densified to virtual beams,
//! converted back to points and projected into the front camera. Inside the
//! projected ground disk the LiDAR cannot see, the camera's own depth channel
//! is used instead.

use std::io::{BufRead, Read, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Parses one `x y z` triple (metres) per line. Blank lines and `#`
    /// comments are skipped.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!(
                    "line {}: expected three finite numbers",
                    lineno + 1
                )));
            }
            points.push(Vector3::new(vals[0], vals[1], vals[2]));
        }
        Ok(Self { points })
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.points {
            writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
        }
        Ok(())
    }
}

/// Metric depth raster, row-major, `0.0` meaning unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(width, height, data.len(), 1));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: f32) {
        self.data[v * self.width + u] = value;
    }

    /// Keeps the smaller of the stored and new value, treating 0 as empty.
    #[inline]
    pub fn set_nearest(&mut self, u: usize, v: usize, value: f32) {
        let cell = &mut self.data[v * self.width + u];
        if *cell == 0.0 || value < *cell {
            *cell = value;
        }
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    /// 16-bit binary PGM, values in millimetres.
    pub fn write_pgm16<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(self.data.len() * 2);
        for &d in &self.data {
            let mm = (f64::from(d) * 1000.0).round().clamp(0.0, 65535.0) as u16;
            buf.extend_from_slice(&mm.to_be_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_pgm16<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Parse("truncated PGM header".into()));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates header and raster
        pos += 1;
        if tokens[0] != "P5" {
            return Err(Error::Parse(format!("unsupported magic {}", tokens[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad PGM header field {s}: {e}")))
        };
        let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval != 65535 {
            return Err(Error::Parse(format!("expected maxval 65535, got {maxval}")));
        }
        let raster = bytes
            .get(pos..)
            .filter(|r| r.len() == w * h * 2)
            .ok_or_else(|| Error::Parse("PGM raster size does not match header".into()))?;
        let data = raster
            .chunks_exact(2)
            .map(|c| f32::from(u16::from_be_bytes([c[0], c[1]])) / 1000.0)
            .collect();
        Self::from_vec(w, h, data)
    }
}

/// Binary image of LiDAR blind-spot pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct BlindSpotMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BlindSpotMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize) {
        self.data[v * self.width + u] = true;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }
}

/// LiDAR returns indexed by beam (row) and azimuth bin (column).
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    /// Beam elevation per row (rad), ascending.
    pub row_elevations: Vec<f64>,
    /// Azimuth of column 0 (rad).
    pub azimuth_start: f64,
    /// Azimuth increment per column (rad).
    pub azimuth_step: f64,
    pub cols: usize,
    /// Row-major ranges (m), 0 = no return.
    pub values: Vec<f32>,
}

impl RangeImage {
    pub fn empty(row_elevations: Vec<f64>, azimuth_start: f64, azimuth_step: f64, cols: usize) -> Self {
        let rows = row_elevations.len();
        Self {
            row_elevations,
            azimuth_start,
            azimuth_step,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.row_elevations.len()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, r: f32) {
        self.values[row * self.cols + col] = r;
    }

    pub fn azimuth(&self, col: usize) -> f64 {
        self.azimuth_start + col as f64 * self.azimuth_step
    }

    /// Bins a cloud into this image's grid (nearest row / column, nearest
    /// return wins). Points outside the azimuth span are dropped.
    pub fn from_cloud(
        pc: &PointCloud,
        row_elevations: Vec<f64>,
        azimuth_start: f64,
        azimuth_step: f64,
        cols: usize,
    ) -> Self {
        let mut ri = Self::empty(row_elevations, azimuth_start, azimuth_step, cols);
        for p in &pc.points {
            let r = p.norm();
            if r == 0.0 {
                continue;
            }
            let az = p.y.atan2(p.x);
            let el = p.z.atan2(p.x.hypot(p.y));
            let col = ((az - azimuth_start) / azimuth_step).round();
            if col < 0.0 || col >= cols as f64 {
                continue;
            }
            let row = nearest_index(&ri.row_elevations, el);
            let cell = &mut ri.values[row * cols + col as usize];
            let r = r as f32;
            if *cell == 0.0 || r < *cell {
                *cell = r;
            }
        }
        ri
    }
}

fn nearest_index(sorted: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &e) in sorted.iter().enumerate() {
        let d = (e - x).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// `n` evenly spaced values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Densifies a range image to `target_rows` evenly spaced virtual beams.
///
/// Each virtual cell interpolates linearly in elevation between the two
/// bracketing native beams of its column, provided both returned. Cells next
/// to a missing return stay 0; nothing is extrapolated.
pub fn interpolate_range_image(ri: &RangeImage, target_rows: usize) -> RangeImage {
    let rows = ri.rows();
    assert!(rows >= 2, "interpolation needs at least two beams");
    let el = &ri.row_elevations;
    let targets = linspace(el[0], el[rows - 1], target_rows);
    let mut out = RangeImage::empty(targets.clone(), ri.azimuth_start, ri.azimuth_step, ri.cols);
    let mut lower = 0usize;
    for (t, &e) in targets.iter().enumerate() {
        while lower + 2 < rows && el[lower + 1] <= e {
            lower += 1;
        }
        let (e0, e1) = (el[lower], el[lower + 1]);
        let out_row = &mut out.values[t * ri.cols..(t + 1) * ri.cols];
        let row0 = &ri.values[lower * ri.cols..(lower + 1) * ri.cols];
        let row1 = &ri.values[(lower + 1) * ri.cols..(lower + 2) * ri.cols];
        if e == e0 {
            out_row.copy_from_slice(row0);
        } else if e == e1 {
            out_row.copy_from_slice(row1);
        } else {
            let w = ((e - e0) / (e1 - e0)) as f32;
            for ((o, &a), &b) in out_row.iter_mut().zip(row0).zip(row1) {
                *o = if a > 0.0 && b > 0.0 { a + (b - a) * w } else { 0.0 };
            }
        }
    }
    out
}

/// Spherical-to-Cartesian conversion of every non-zero cell.
pub fn range_to_cloud(ri: &RangeImage) -> PointCloud {
    let mut points = Vec::with_capacity(ri.values.len() / 4);
    let az_trig: Vec<(f64, f64)> = (0..ri.cols).map(|c| ri.azimuth(c).sin_cos()).collect();
    for (row, &el) in ri.row_elevations.iter().enumerate() {
        let (se, ce) = el.sin_cos();
        for (col, &(sa, ca)) in az_trig.iter().enumerate() {
            let r = f64::from(ri.get(row, col));
            if r > 0.0 {
                points.push(Vector3::new(r * ce * ca, r * ce * sa, r * se));
            }
        }
    }
    PointCloud { points }
}

/// Integer pixel for a camera-frame point, or `None` when it is behind the
/// camera or outside `0 < u < W, 0 < v < H`.
#[inline]
pub fn pixel_of(p: &Vector3<f64>, k: &CameraIntrinsics) -> Option<(usize, usize)> {
    if !(p.z > 0.0) {
        return None;
    }
    let u = (k.cu + k.fu * p.x / p.z).round();
    let v = (k.cv + k.fv * p.y / p.z).round();
    if u > 0.0 && v > 0.0 && u < k.width as f64 && v < k.height as f64 {
        Some((u as usize, v as usize))
    } else {
        None
    }
}

/// Projects a LiDAR cloud into the camera; each hit pixel stores the
/// Euclidean range of the point from the camera, nearest return winning.
pub fn project_cloud_to_depth(
    pc: &PointCloud,
    cam_from_lidar: &RigidTransform,
    k: &CameraIntrinsics,
) -> DepthImage {
    let mut img = DepthImage::new(k.width, k.height);
    project_cloud_into(pc, cam_from_lidar, k, &mut img);
    img
}

/// [`project_cloud_to_depth`] into an existing image, which is cleared
/// first. `img` must be `k.width` x `k.height`.
pub fn project_cloud_into(
    pc: &PointCloud,
    cam_from_lidar: &RigidTransform,
    k: &CameraIntrinsics,
    img: &mut DepthImage,
) {
    assert_eq!((img.width, img.height), (k.width, k.height), "image size mismatch");
    img.data.fill(0.0);
    for p in &pc.points {
        let q = cam_from_lidar.transform_point(p);
        if let Some((u, v)) = pixel_of(&q, k) {
            img.set_nearest(u, v, q.norm() as f32);
        }
    }
}

/// Parameters of the ground disk the LiDAR cannot observe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlindSpotParams {
    /// Disk radius around the LiDAR (m).
    pub radius: f64,
    /// Ground height in the LiDAR frame (m, negative below the sensor).
    pub ground_z: f64,
    /// Half-width of the square sampling window (m).
    pub extent: f64,
    /// Sampling step (m).
    pub step: f64,
}

impl Default for BlindSpotParams {
    fn default() -> Self {
        Self {
            radius: 4.1052,
            ground_z: -1.10,
            extent: 4.11,
            step: 0.001,
        }
    }
}

/// Rasterizes the blind-spot ground disk into the camera image by sampling
/// the disk on a square grid and projecting every sample.
pub fn blind_spot_mask(
    k: &CameraIntrinsics,
    cam_from_lidar: &RigidTransform,
    params: &BlindSpotParams,
) -> BlindSpotMask {
    assert!(params.step > 0.0, "sampling step must be positive");
    let mut mask = BlindSpotMask::new(k.width, k.height);
    let r2 = params.radius * params.radius;
    let n = (2.0 * params.extent / params.step).round() as i64;
    let rot = cam_from_lidar.rotation();
    let col_x = rot.column(0).into_owned();
    let col_y = rot.column(1).into_owned();
    // camera-frame point of (X, Y, ground_z) = base + X col_x + Y col_y
    let base = rot.column(2) * params.ground_z + cam_from_lidar.translation();
    for i in 0..=n {
        let x = -params.extent + i as f64 * params.step;
        if x * x > r2 {
            continue;
        }
        let row_base = base + col_x * x;
        for j in 0..=n {
            let y = -params.extent + j as f64 * params.step;
            if x * x + y * y > r2 {
                continue;
            }
            let q = row_base + col_y * y;
            if let Some((u, v)) = pixel_of(&q, k) {
                mask.set(u, v);
            }
        }
    }
    mask
}

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(a.0, a.1, b.0, b.1));
    }
    Ok(())
}

/// Camera depth inside the mask, LiDAR depth elsewhere.
pub fn fuse_depth(
    lidar: &DepthImage,
    camera: &DepthImage,
    mask: &BlindSpotMask,
) -> Result<DepthImage> {
    let mut fused = DepthImage::new(camera.width, camera.height);
    fuse_depth_into(lidar, camera, mask, &mut fused)?;
    Ok(fused)
}

/// [`fuse_depth`] writing into `out`, which must share the input dimensions.
pub fn fuse_depth_into(
    lidar: &DepthImage,
    camera: &DepthImage,
    mask: &BlindSpotMask,
    out: &mut DepthImage,
) -> Result<()> {
    check_dims((lidar.width, lidar.height), (camera.width, camera.height))?;
    check_dims((lidar.width, lidar.height), (mask.width, mask.height))?;
    check_dims((lidar.width, lidar.height), (out.width, out.height))?;
    for (((o, &l), &c), &m) in out.data.iter_mut().zip(&lidar.data).zip(&camera.data).zip(&mask.data) {
        *o = if m { c } else { l };
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServoDirection {
    Forward,
    Backward,
}

pub fn select_depth_source<'a>(
    direction: ServoDirection,
    fused: &'a DepthImage,
    rear: &'a DepthImage,
) -> &'a DepthImage {
    match direction {
        ServoDirection::Forward => fused,
        ServoDirection::Backward => rear,
    }
}
