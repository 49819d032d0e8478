//! Ground-truth target maps on the BEV grid.
//!
//! Conventions shared by encoder and decoder:
//!
//! * Positions are measured in *source units*, a finer lattice with `gamma`
//!   source units per BEV cell (`3900 / 156 = 25` for a 39 m pen quantized at
//!   1 cm). An object's cell is `floor(x_src / gamma)` and its offset is the
//!   fractional part.
//! * Gaussian widths are `std = alpha * extent_src` measured in cells, so a
//!   2.6 m cow at 1 cm source units and `alpha = 0.01` spreads over a
//!   standard deviation of 2.6 cells along its length.
//! * Every supervised quantity other than the confidence lives at the
//!   object's center cell only.

mod csl;
mod focal;

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::bilinear;
use crate::tensor::Tensor;
use crate::voxel::VoxelGridSpec;

pub use csl::{angle_to_bin, decode_csl, decode_csl_with, encode_csl, CSL_BINS, CSL_RADIUS};
pub use focal::{focal_loss, FocalLossParams};

/// Default Gaussian width factor.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// An annotated object standing on the ground plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub id: i64,
    /// Ground position `(x, y)` in meters; `z` is 0 by convention.
    pub center: [f64; 2],
    /// `(length, width, height)` in meters; length runs along the heading.
    pub dims: [f64; 3],
    /// Heading in radians, counter-clockwise from world `+x`.
    pub yaw: f64,
}

impl GroundTruthObject {
    pub fn validate(&self) -> Result<()> {
        if !self.dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "object {} has non-positive dimensions {:?}",
                self.id, self.dims
            )));
        }
        if !(self.center.iter().all(|c| c.is_finite()) && self.yaw.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "object {} is not finite",
                self.id
            )));
        }
        Ok(())
    }

    /// Yaw folded into `[0, 2π)`.
    pub fn yaw_normalized(&self) -> f64 {
        normalize_angle(self.yaw)
    }
}

pub(crate) fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// One annotated frame: `{"frame": int, "objects": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub frame: u64,
    pub objects: Vec<GroundTruthObject>,
}

impl Annotation {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let a: Annotation = serde_json::from_str(&fs::read_to_string(path)?)?;
        for o in &a.objects {
            o.validate()?;
        }
        Ok(a)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Dataset mean dimensions `(l̄, w̄, h̄)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanDims {
    pub l: f64,
    pub w: f64,
    pub h: f64,
}

impl MeanDims {
    pub fn new(l: f64, w: f64, h: f64) -> Result<Self> {
        if !(l > 0.0 && w > 0.0 && h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mean dimensions must be positive, got ({l}, {w}, {h})"
            )));
        }
        Ok(Self { l, w, h })
    }

    /// Arithmetic mean over a population.
    pub fn from_objects<'a>(
        objects: impl IntoIterator<Item = &'a GroundTruthObject>,
    ) -> Result<Self> {
        let (mut sum, mut n) = ([0.0f64; 3], 0usize);
        for o in objects {
            for (s, d) in sum.iter_mut().zip(o.dims) {
                *s += d;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::InvalidParameter(
                "mean of an empty population".into(),
            ));
        }
        Self::new(sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.l, self.w, self.h]
    }
}

/// How object occupancy is spread over the confidence map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    /// A single 1 at the object's cell.
    Point,
    /// Isotropic Gaussian, `std = alpha * (l + w) / 2`.
    Gaussian,
    /// Anisotropic Gaussian aligned with the object's heading.
    OrientedGaussian,
}

impl std::str::FromStr for ConfidenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(Self::Point),
            "gaussian" => Ok(Self::Gaussian),
            "oriented_gaussian" | "oriented" => Ok(Self::OrientedGaussian),
            other => Err(Error::InvalidParameter(format!(
                "unknown confidence mode {other:?}"
            ))),
        }
    }
}

/// Parameters shared by the target encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingParams {
    pub mode: ConfidenceMode,
    pub alpha: f64,
    /// Source units per BEV cell.
    pub gamma: f64,
    pub csl_bins: usize,
    pub csl_radius: usize,
}

impl Default for EncodingParams {
    fn default() -> Self {
        Self {
            mode: ConfidenceMode::OrientedGaussian,
            alpha: DEFAULT_ALPHA,
            gamma: 25.0,
            csl_bins: CSL_BINS,
            csl_radius: CSL_RADIUS,
        }
    }
}

impl EncodingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        csl::check_params(self.csl_bins, self.csl_radius)
    }
}

/// Fractional part of `source_coord / gamma`, i.e. the position offset of a
/// coordinate inside its cell.
pub fn position_offset(source_coord: f64, gamma: f64) -> f64 {
    let t = source_coord / gamma;
    t - t.floor()
}

/// Cell and in-cell offset of a ground position on `grid`, going through
/// source units.
fn locate(
    grid: &VoxelGridSpec,
    gamma: f64,
    o: &GroundTruthObject,
) -> Result<((usize, usize), [f64; 2])> {
    let sx = (o.center[0] - grid.origin.x) / (grid.voxel_l / gamma);
    let sy = (o.center[1] - grid.origin.y) / (grid.voxel_w / gamma);
    let (tx, ty) = ((sx / gamma).floor(), (sy / gamma).floor());
    if !(tx >= 0.0 && ty >= 0.0 && tx < grid.nx as f64 && ty < grid.ny as f64) {
        return Err(Error::OutOfGrid {
            id: o.id,
            x: o.center[0],
            y: o.center[1],
        });
    }
    Ok((
        (tx as usize, ty as usize),
        [position_offset(sx, gamma), position_offset(sy, gamma)],
    ))
}

/// Cell containing an object's center, in the same source-unit arithmetic the
/// encoder uses.
pub fn center_cell(
    grid: &VoxelGridSpec,
    gamma: f64,
    o: &GroundTruthObject,
) -> Result<(usize, usize)> {
    locate(grid, gamma, o).map(|(c, _)| c)
}

/// Standard deviations `(along length, along width)` in cells.
pub fn gaussian_std(
    grid: &VoxelGridSpec,
    params: &EncodingParams,
    o: &GroundTruthObject,
) -> (f64, f64) {
    let per_meter = params.gamma / grid.voxel_l.min(grid.voxel_w);
    let l_src = o.dims[0] * per_meter;
    let w_src = o.dims[1] * per_meter;
    match params.mode {
        ConfidenceMode::Gaussian => {
            let s = params.alpha * (l_src + w_src) / 2.0;
            (s, s)
        }
        _ => (params.alpha * l_src, params.alpha * w_src),
    }
}

/// Axis-aligned Gaussian patch on integer offsets `[-r, r]²`, row-major with
/// rows along `y`.
fn gaussian_patch(std_l: f64, std_w: f64, r: usize) -> Vec<f32> {
    let n = 2 * r + 1;
    let (var_l, var_w) = (std_l * std_l, std_w * std_w);
    let mut out = vec![0.0f32; n * n];
    for b in 0..n {
        let dy = b as f64 - r as f64;
        for a in 0..n {
            let dx = a as f64 - r as f64;
            out[b * n + a] = (-(dx * dx) / (2.0 * var_l) - (dy * dy) / (2.0 * var_w)).exp() as f32;
        }
    }
    out
}

/// Patch half-extent: three standard deviations plus a rotation margin.
fn patch_radius(std_l: f64, std_w: f64) -> usize {
    (3.0 * std_l.max(std_w)).ceil() as usize + 2
}

/// Confidence map `[H][W]` for a set of objects. Overlaps combine by
/// per-cell maximum, so values stay in `[0, 1]` and each object's center
/// cell holds exactly 1.
pub fn encode_confidence(
    objects: &[GroundTruthObject],
    grid: &VoxelGridSpec,
    params: &EncodingParams,
) -> Result<Vec<f32>> {
    params.validate()?;
    let (w, h) = (grid.nx, grid.ny);
    let mut map = vec![0.0f32; w * h];
    for o in objects {
        o.validate()?;
        let ((ci, cj), _) = locate(grid, params.gamma, o)?;
        if params.mode == ConfidenceMode::Point {
            map[cj * w + ci] = 1.0;
            continue;
        }
        let (std_l, std_w) = gaussian_std(grid, params, o);
        let r = patch_radius(std_l, std_w);
        let n = 2 * r + 1;
        let patch = gaussian_patch(std_l, std_w, r);
        let yaw = if params.mode == ConfidenceMode::OrientedGaussian {
            o.yaw_normalized()
        } else {
            0.0
        };
        let (s, c) = yaw.sin_cos();
        let ri = r as isize;
        for dy in -ri..=ri {
            let y = cj as isize + dy;
            if y < 0 || y >= h as isize {
                continue;
            }
            for dx in -ri..=ri {
                let x = ci as isize + dx;
                if x < 0 || x >= w as isize {
                    continue;
                }
                let value = if yaw == 0.0 {
                    patch[(dy + ri) as usize * n + (dx + ri) as usize] as f64
                } else {
                    // Inverse rotation of the target offset into the patch frame.
                    let (fx, fy) = (dx as f64, dy as f64);
                    let a = c * fx + s * fy;
                    let b = -s * fx + c * fy;
                    bilinear(&patch, n, n, a + r as f64, b + r as f64)
                };
                let cell = &mut map[y as usize * w + x as usize];
                *cell = cell.max(value as f32);
            }
        }
    }
    Ok(map)
}

/// Position offsets `[2][H][W]`: fractional cell position at each object's
/// cell, zero elsewhere.
pub fn encode_offsets(
    objects: &[GroundTruthObject],
    grid: &VoxelGridSpec,
    gamma: f64,
) -> Result<Vec<f32>> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let plane = grid.cells();
    let mut out = vec![0.0f32; 2 * plane];
    for o in objects {
        let ((ci, cj), off) = locate(grid, gamma, o)?;
        let idx = cj * grid.nx + ci;
        out[idx] = off[0] as f32;
        out[plane + idx] = off[1] as f32;
    }
    Ok(out)
}

/// Log-ratio of each object's dimensions to the mean.
pub fn dimension_offset(dims: [f64; 3], mean: &MeanDims) -> [f64; 3] {
    [
        (dims[0] / mean.l).ln(),
        (dims[1] / mean.w).ln(),
        (dims[2] / mean.h).ln(),
    ]
}

/// Dimension offsets `[3][H][W]` at object cells.
pub fn encode_dimensions(
    objects: &[GroundTruthObject],
    grid: &VoxelGridSpec,
    gamma: f64,
    mean: &MeanDims,
) -> Result<Vec<f32>> {
    MeanDims::new(mean.l, mean.w, mean.h)?;
    let plane = grid.cells();
    let mut out = vec![0.0f32; 3 * plane];
    for o in objects {
        o.validate()?;
        let (ci, cj) = center_cell(grid, gamma, o)?;
        let d = dimension_offset(o.dims, mean);
        for (ch, v) in d.iter().enumerate() {
            out[ch * plane + cj * grid.nx + ci] = *v as f32;
        }
    }
    Ok(out)
}

/// All training targets for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMaps {
    pub height: usize,
    pub width: usize,
    pub bins: usize,
    /// `[H][W]` in `[0, 1]`.
    pub confidence: Vec<f32>,
    /// `[2][H][W]` in `[0, 1)`.
    pub offset: Vec<f32>,
    /// `[3][H][W]` log dimension ratios.
    pub dims: Vec<f32>,
    /// `[B][H][W]` circular smooth labels.
    pub orientation: Vec<f32>,
    /// `[H][W]`, 1 at object cells.
    pub mask: Vec<f32>,
}

impl TargetMaps {
    pub fn zeros(height: usize, width: usize, bins: usize) -> Self {
        let plane = height * width;
        Self {
            height,
            width,
            bins,
            confidence: vec![0.0; plane],
            offset: vec![0.0; 2 * plane],
            dims: vec![0.0; 3 * plane],
            orientation: vec![0.0; bins * plane],
            mask: vec![0.0; plane],
        }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.plane();
        let ok = self.confidence.len() == p
            && self.offset.len() == 2 * p
            && self.dims.len() == 3 * p
            && self.orientation.len() == self.bins * p
            && self.mask.len() == p;
        if !ok {
            return Err(Error::ShapeMismatch(format!(
                "target channels do not match a {}x{} map with {} bins",
                self.height, self.width, self.bins
            )));
        }
        Ok(())
    }

    /// Orientation vector of one cell.
    pub fn orientation_at(&self, idx: usize) -> Vec<f32> {
        let p = self.plane();
        (0..self.bins)
            .map(|b| self.orientation[b * p + idx])
            .collect()
    }

    /// Stacked channels `[conf, off_x, off_y, dim_l, dim_w, dim_h, csl_0..B, mask]`.
    pub fn to_tensor(&self) -> Tensor {
        let data = [
            &self.confidence[..],
            &self.offset,
            &self.dims,
            &self.orientation,
            &self.mask,
        ]
        .concat();
        Tensor {
            shape: vec![7 + self.bins, self.height, self.width],
            data,
        }
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        let &[c, h, w] = t.shape.as_slice() else {
            return Err(Error::ShapeMismatch(format!(
                "target maps need rank 3, got {:?}",
                t.shape
            )));
        };
        if c < 9 {
            return Err(Error::ShapeMismatch(format!(
                "target maps need at least 9 channels, got {c}"
            )));
        }
        let bins = c - 7;
        let p = h * w;
        let d = t.data;
        let maps = Self {
            height: h,
            width: w,
            bins,
            confidence: d[..p].to_vec(),
            offset: d[p..3 * p].to_vec(),
            dims: d[3 * p..6 * p].to_vec(),
            orientation: d[6 * p..(6 + bins) * p].to_vec(),
            mask: d[(6 + bins) * p..].to_vec(),
        };
        maps.validate()?;
        Ok(maps)
    }
}

/// Builds every target channel for a frame.
pub fn encode_targets(
    objects: &[GroundTruthObject],
    grid: &VoxelGridSpec,
    mean: &MeanDims,
    params: &EncodingParams,
) -> Result<TargetMaps> {
    params.validate()?;
    let mut maps = TargetMaps::zeros(grid.ny, grid.nx, params.csl_bins);
    maps.confidence = encode_confidence(objects, grid, params)?;
    maps.offset = encode_offsets(objects, grid, params.gamma)?;
    maps.dims = encode_dimensions(objects, grid, params.gamma, mean)?;
    let plane = maps.plane();
    for o in objects {
        let (ci, cj) = center_cell(grid, params.gamma, o)?;
        let idx = cj * grid.nx + ci;
        maps.mask[idx] = 1.0;
        let label = encode_csl(o.yaw_normalized(), params.csl_bins, params.csl_radius)?;
        for (b, v) in label.into_iter().enumerate() {
            maps.orientation[b * plane + idx] = v;
        }
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use super::*;
    use crate::geometry::WorldPoint;

    fn grid(n: usize) -> VoxelGridSpec {
        VoxelGridSpec::new(WorldPoint::new(0.0, 0.0, 0.0), (n, n, 1), (0.25, 0.25, 1.6)).unwrap()
    }

    fn cow(id: i64, x: f64, y: f64, yaw: f64) -> GroundTruthObject {
        GroundTruthObject {
            id,
            center: [x, y],
            dims: [2.6, 1.3, 1.3],
            yaw,
        }
    }

    fn params(mode: ConfidenceMode) -> EncodingParams {
        EncodingParams {
            mode,
            ..Default::default()
        }
    }

    #[test]
    fn center_cell_is_one_in_every_mode() {
        let g = grid(80);
        let o = cow(1, 10.1, 9.9, 0.7);
        let (ci, cj) = center_cell(&g, 25.0, &o).unwrap();
        assert_eq!((ci, cj), (40, 39));
        for mode in [
            ConfidenceMode::Point,
            ConfidenceMode::Gaussian,
            ConfidenceMode::OrientedGaussian,
        ] {
            let m = encode_confidence(std::slice::from_ref(&o), &g, &params(mode)).unwrap();
            assert_eq!(m[cj * 80 + ci], 1.0, "{mode:?}");
            let ones = m.iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, 1, "{mode:?}");
            assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn zero_yaw_matches_direct_evaluation() {
        let g = grid(60);
        let o = cow(1, 7.6, 7.4, 0.0);
        let m = encode_confidence(
            std::slice::from_ref(&o),
            &g,
            &params(ConfidenceMode::OrientedGaussian),
        )
        .unwrap();
        let (ci, cj) = center_cell(&g, 25.0, &o).unwrap();
        let (sl, sw) = (0.01 * 260.0, 0.01 * 130.0);
        for j in 0..60 {
            for i in 0..60 {
                let (dx, dy) = (i as f64 - ci as f64, j as f64 - cj as f64);
                let want = (-(dx * dx) / (2.0 * sl * sl) - dy * dy / (2.0 * sw * sw)).exp();
                let r = patch_radius(sl, sw) as f64;
                let want = if dx.abs() <= r && dy.abs() <= r {
                    want
                } else {
                    0.0
                };
                assert!((m[j * 60 + i] as f64 - want).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn quarter_turn_swaps_sigmas() {
        let g = grid(60);
        let rotated = encode_confidence(
            &[cow(1, 7.6, 7.4, FRAC_PI_2)],
            &g,
            &params(ConfidenceMode::OrientedGaussian),
        )
        .unwrap();
        let mut swapped = cow(1, 7.6, 7.4, 0.0);
        swapped.dims = [1.3, 2.6, 1.3];
        let direct =
            encode_confidence(&[swapped], &g, &params(ConfidenceMode::OrientedGaussian)).unwrap();
        let worst = rotated
            .iter()
            .zip(&direct)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst < 2e-2, "max deviation {worst}");
    }

    #[test]
    fn rotated_patch_within_bilinear_bound_of_analytic_gaussian() {
        // Bilinear interpolation error is bounded by h²/8 · (|f_xx| + |f_yy|)
        // with unit spacing; for a Gaussian |f''| <= 1/σ².
        let g = grid(80);
        for &yaw in &[0.3, 1.1, 2.0, 3.9, 5.5] {
            let o = cow(1, 10.05, 9.95, yaw);
            let p = params(ConfidenceMode::OrientedGaussian);
            let m = encode_confidence(std::slice::from_ref(&o), &g, &p).unwrap();
            let (ci, cj) = center_cell(&g, 25.0, &o).unwrap();
            let (sl, sw) = gaussian_std(&g, &p, &o);
            let bound = (1.0 / (sl * sl) + 1.0 / (sw * sw)) / 8.0;
            let r = patch_radius(sl, sw) as f64 - 2.0;
            let (s, c) = yaw.sin_cos();
            for j in 0..80 {
                for i in 0..80 {
                    let (dx, dy) = (i as f64 - ci as f64, j as f64 - cj as f64);
                    let a = c * dx + s * dy;
                    let b = -s * dx + c * dy;
                    if a.abs() > r || b.abs() > r {
                        continue;
                    }
                    let want = (-(a * a) / (2.0 * sl * sl) - b * b / (2.0 * sw * sw)).exp();
                    let err = (m[j * 80 + i] as f64 - want).abs();
                    assert!(err <= bound, "yaw {yaw}: err {err} > {bound}");
                }
            }
        }
    }

    #[test]
    fn overlapping_objects_take_the_max() {
        let g = grid(60);
        let p = params(ConfidenceMode::Gaussian);
        let a = cow(1, 7.0, 7.0, 0.0);
        let b = cow(2, 8.0, 7.0, 0.0);
        let ma = encode_confidence(std::slice::from_ref(&a), &g, &p).unwrap();
        let mb = encode_confidence(std::slice::from_ref(&b), &g, &p).unwrap();
        let both = encode_confidence(&[a.clone(), b.clone()], &g, &p).unwrap();
        let rev = encode_confidence(&[b, a], &g, &p).unwrap();
        for i in 0..both.len() {
            assert_eq!(both[i], ma[i].max(mb[i]));
        }
        assert_eq!(both, rev);
    }

    #[test]
    fn out_of_grid_is_rejected() {
        let g = grid(10);
        let err = encode_confidence(&[cow(9, 2.6, 1.0, 0.0)], &g, &params(ConfidenceMode::Point));
        assert!(matches!(err, Err(Error::OutOfGrid { id: 9, .. })));
        assert!(encode_offsets(&[cow(9, -0.1, 1.0, 0.0)], &g, 25.0).is_err());
    }

    #[test]
    fn offsets_are_fractional_parts() {
        assert_eq!(position_offset(50.0, 25.0), 0.0);
        assert!((position_offset(63.0, 25.0) - 0.52).abs() < 1e-12);
        assert_eq!(3900.0 / 156.0, 25.0);
        let g = grid(40);
        // x = 0.63 m is 63 source units at 1 cm.
        let offs = encode_offsets(&[cow(1, 0.63, 0.5, 0.0)], &g, 25.0).unwrap();
        let plane = 40 * 40;
        let idx = 2 * 40 + 2;
        assert!((offs[idx] - 0.52).abs() < 1e-6);
        assert_eq!(offs[plane + idx], 0.0);
        assert_eq!(offs.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn dimension_offsets_are_log_ratios() {
        let mean = MeanDims::new(2.0, 1.0, 1.5).unwrap();
        assert_eq!(dimension_offset([2.0, 1.0, 1.5], &mean), [0.0, 0.0, 0.0]);
        let d = dimension_offset([2.0 * std::f64::consts::E, 1.0, 1.5], &mean);
        assert!((d[0] - 1.0).abs() < 1e-15);
        assert!(MeanDims::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn mean_dims_of_population() {
        let objs = [cow(1, 1.0, 1.0, 0.0), {
            let mut c = cow(2, 2.0, 2.0, 0.0);
            c.dims = [2.0, 1.5, 1.1];
            c
        }];
        let m = MeanDims::from_objects(&objs).unwrap();
        assert!(
            (m.l - 2.3).abs() < 1e-12 && (m.w - 1.4).abs() < 1e-12 && (m.h - 1.2).abs() < 1e-12
        );
        assert!(MeanDims::from_objects(&[]).is_err());
    }

    #[test]
    fn targets_tensor_round_trip() {
        let g = grid(30);
        let objs = vec![cow(1, 2.0, 3.0, PI / 3.0), cow(2, 5.0, 5.2, 4.0)];
        let mean = MeanDims::from_objects(&objs).unwrap();
        let t = encode_targets(&objs, &g, &mean, &EncodingParams::default()).unwrap();
        assert_eq!(t.mask.iter().filter(|v| **v == 1.0).count(), 2);
        let back = TargetMaps::from_tensor(t.to_tensor()).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.to_tensor().shape, vec![367, 30, 30]);
    }

    #[test]
    fn annotation_json_schema() {
        let text = r#"{"frame": 3, "objects": [{"id": 7, "center": [1.5, 2.0], "dims": [2.6, 1.3, 1.4], "yaw": 0.5}]}"#;
        let a: Annotation = serde_json::from_str(text).unwrap();
        assert_eq!(a.frame, 3);
        assert_eq!(
            a.objects[0],
            GroundTruthObject {
                id: 7,
                center: [1.5, 2.0],
                dims: [2.6, 1.3, 1.4],
                yaw: 0.5
            }
        );
        let again: Annotation = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(again, a);
    }
}
