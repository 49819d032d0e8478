//! Measurements on aggregated features: how far each aggregation operator
//! smears an object's signature over the ground, and a non-learned
//! occupancy detector built on voxel features.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoding::{decode, DecoderConfig, Detection};
use crate::encoding::{MeanDims, TargetMaps};
use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::scenegen::{render_feature_views, render_view, signature, Scene};
use crate::tensor::FeatureMap;
use crate::voxel::{
    aggregate_features, build_projection_table, homography_aggregate, ProjectionTable,
    VoxelFeature, VoxelGridSpec,
};

/// `n` evenly spaced plane heights from the ground to `top` inclusive.
pub fn linspace_heights(top: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| top * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Angle between a camera's optical axis and straight down, in radians.
pub fn nadir_angle(cam: &Camera) -> f64 {
    let forward = cam.extrinsics().rotation().row(2);
    (-forward[2]).clamp(-1.0, 1.0).acos()
}

/// A value per aggregation method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MethodValues {
    pub single: f64,
    pub multi: f64,
    pub vfa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistortionConfig {
    pub channels: usize,
    pub stride: u32,
    /// Planes of the multi-height baseline.
    pub heights: Vec<f64>,
    /// Feature pixels an object needs in a view to count as visible there.
    pub min_visible_pixels: usize,
    /// Views closer than this to straight down are not oblique.
    pub oblique_min_angle: f64,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            stride: 4,
            heights: linspace_heights(1.6, 4),
            min_visible_pixels: 16,
            oblique_min_angle: 10f64.to_radians(),
        }
    }
}

/// Per-object distortion measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDistortion {
    pub id: i64,
    pub visible_views: usize,
    pub oblique_views: usize,
    /// Fully inside every view that sees any of it, and nowhere occluded.
    pub unoccluded: bool,
    /// Response-weighted RMS ground distance from the true center, averaged
    /// over the views that see the object (meters).
    pub spread: MethodValues,
    /// Distance from the true center to the centroid of the cross-view
    /// consensus (minimum over visible views) response (meters).
    pub centroid_error: MethodValues,
}

impl ObjectDistortion {
    pub fn ordered(&self) -> bool {
        self.spread.vfa < self.spread.multi && self.spread.multi < self.spread.single
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub objects: Vec<ObjectDistortion>,
    /// BEV foreground energy `[H][W]` per method, averaged over cameras and
    /// layers.
    #[serde(skip)]
    pub heatmaps: Option<[Vec<f32>; 3]>,
}

impl DistortionReport {
    /// Objects seen in at least two oblique views.
    pub fn eligible(&self) -> impl Iterator<Item = &ObjectDistortion> {
        self.objects.iter().filter(|o| o.oblique_views >= 2)
    }

    /// `(ordered, eligible)` counts.
    pub fn ordering_counts(&self) -> (usize, usize) {
        let (mut ok, mut n) = (0, 0);
        for o in self.eligible() {
            n += 1;
            ok += o.ordered() as usize;
        }
        (ok, n)
    }
}

/// Projection of a feature vector onto an object's zero-mean signature,
/// scaled so the pure signature scores 1 and clamped at 0.
struct Probe {
    weights: Vec<f64>,
}

impl Probe {
    fn new(id: i64, channels: usize) -> Self {
        let s = signature(id, channels);
        let mean = s.iter().map(|v| *v as f64).sum::<f64>() / channels as f64;
        let centered: Vec<f64> = s.iter().map(|v| *v as f64 - mean).collect();
        let norm: f64 = s.iter().zip(&centered).map(|(a, b)| *a as f64 * b).sum();
        Self {
            weights: centered.into_iter().map(|w| w / norm).collect(),
        }
    }

    /// Mean over `layers` of the clamped response, where `layer(l, c)` is the
    /// plane of layer `l` and channel `c`.
    fn field<'a>(
        &self,
        plane: usize,
        layers: usize,
        layer: impl Fn(usize, usize) -> &'a [f32],
    ) -> Vec<f64> {
        let mut out = vec![0.0f64; plane];
        let mut r = vec![0.0f64; plane];
        for l in 0..layers {
            r.fill(0.0);
            for (c, w) in self.weights.iter().enumerate() {
                for (acc, v) in r.iter_mut().zip(layer(l, c)) {
                    *acc += *v as f64 * w;
                }
            }
            for (o, v) in out.iter_mut().zip(&r) {
                *o += v.max(0.0);
            }
        }
        for o in &mut out {
            *o /= layers as f64;
        }
        out
    }

    fn image_field(&self, map: &FeatureMap) -> Vec<f64> {
        self.field(map.width * map.height, 1, |_, c| map.channel(c))
    }
}

fn count_above_half(field: &[f64]) -> usize {
    field.iter().filter(|r| **r > 0.5).count()
}

/// `(rms distance, centroid error)` of a non-negative field around `center`.
fn moments(field: &[f64], grid: &VoxelGridSpec, center: [f64; 2]) -> Option<(f64, f64)> {
    let (mut m, mut sx, mut sy, mut s2) = (0.0, 0.0, 0.0, 0.0);
    for (cell, &r) in field.iter().enumerate() {
        if r <= 0.0 {
            continue;
        }
        let (x, y) = grid.cell_center(cell % grid.nx, cell / grid.nx);
        m += r;
        sx += r * x;
        sy += r * y;
        s2 += r * ((x - center[0]).powi(2) + (y - center[1]).powi(2));
    }
    (m > 0.0).then(|| {
        (
            (s2 / m).sqrt(),
            (sx / m - center[0]).hypot(sy / m - center[1]),
        )
    })
}

/// Renders `scene`, aggregates with the ground homography, the
/// multi-height homography and VFA on `grid`, and measures each object's
/// spread and consensus centroid.
pub fn measure_distortion(
    scene: &Scene,
    grid: &VoxelGridSpec,
    cfg: &DistortionConfig,
) -> Result<DistortionReport> {
    if cfg.channels == 0 || cfg.heights.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one channel and one plane height".into(),
        ));
    }
    let ch = cfg.channels;
    let maps = render_feature_views(scene, ch, cfg.stride)?;
    let mut bev = *grid;
    bev.nz = 1;
    let single = homography_aggregate(&scene.cameras, &maps, &[0.0], &bev, cfg.stride)?;
    let multi = homography_aggregate(&scene.cameras, &maps, &cfg.heights, &bev, cfg.stride)?;
    let table = build_projection_table(grid, &scene.cameras, cfg.stride)?;
    let vox = aggregate_features(&table, &maps)?;
    let plane = grid.cells();
    let nh = cfg.heights.len();
    let oblique: Vec<bool> = scene
        .cameras
        .iter()
        .map(|c| nadir_angle(c) >= cfg.oblique_min_angle)
        .collect();

    let objects = scene
        .objects
        .par_iter()
        .map(|o| -> Result<ObjectDistortion> {
            let probe = Probe::new(o.id, ch);
            let mut visible = Vec::new();
            let mut unoccluded = true;
            for (k, cam) in scene.cameras.iter().enumerate() {
                let solo = render_view(cam, std::slice::from_ref(o), ch, cfg.stride)?;
                let solo_field = probe.image_field(&solo);
                let solo_px = count_above_half(&solo_field);
                let seen = count_above_half(&probe.image_field(&maps[k]));
                if solo_px > 0
                    && (seen != solo_px || touches_border(&solo_field, solo.width, solo.height))
                {
                    unoccluded = false;
                }
                if seen >= cfg.min_visible_pixels {
                    visible.push(k);
                }
            }
            let fields = |k: usize| -> [Vec<f64>; 3] {
                [
                    probe.field(plane, 1, |_, c| {
                        &single.data[(k * ch + c) * plane..][..plane]
                    }),
                    probe.field(plane, nh, |h, c| {
                        &multi.data[((k * nh + h) * ch + c) * plane..][..plane]
                    }),
                    probe.field(plane, grid.nz, |z, c| {
                        &vox[k].data[(c * grid.nz + z) * plane..][..plane]
                    }),
                ]
            };
            let per_view: Vec<[Vec<f64>; 3]> = visible.iter().map(|&k| fields(k)).collect();
            let mut spread = [0.0f64; 3];
            let mut centroid = [f64::NAN; 3];
            for m in 0..3 {
                let mut n = 0usize;
                for f in &per_view {
                    if let Some((s, _)) = moments(&f[m], grid, o.center) {
                        spread[m] += s;
                        n += 1;
                    }
                }
                spread[m] = if n > 0 {
                    spread[m] / n as f64
                } else {
                    f64::NAN
                };
                if !per_view.is_empty() {
                    let consensus: Vec<f64> = (0..plane)
                        .map(|cell| {
                            per_view
                                .iter()
                                .map(|f| f[m][cell])
                                .fold(f64::INFINITY, f64::min)
                        })
                        .collect();
                    if let Some((_, e)) = moments(&consensus, grid, o.center) {
                        centroid[m] = e;
                    }
                }
            }
            Ok(ObjectDistortion {
                id: o.id,
                visible_views: visible.len(),
                oblique_views: visible.iter().filter(|&&k| oblique[k]).count(),
                unoccluded,
                spread: MethodValues {
                    single: spread[0],
                    multi: spread[1],
                    vfa: spread[2],
                },
                centroid_error: MethodValues {
                    single: centroid[0],
                    multi: centroid[1],
                    vfa: centroid[2],
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let energy = |data: &[f32], blocks: usize| -> Vec<f32> {
        let mut out = vec![0.0f32; plane];
        for b in 0..blocks {
            for (cell, o) in out.iter_mut().enumerate() {
                let m = (0..ch)
                    .map(|c| data[(b * ch + c) * plane + cell])
                    .fold(0.0f32, f32::max);
                *o += m / blocks as f32;
            }
        }
        out
    };
    let vfa_energy = {
        let mut out = vec![0.0f32; plane];
        for v in &vox {
            for z in 0..grid.nz {
                for (cell, o) in out.iter_mut().enumerate() {
                    let m = (0..ch)
                        .map(|c| v.data[(c * grid.nz + z) * plane + cell])
                        .fold(0.0f32, f32::max);
                    *o += m / (grid.nz * vox.len()) as f32;
                }
            }
        }
        out
    };
    let nc = scene.cameras.len();
    Ok(DistortionReport {
        objects,
        heatmaps: Some([
            energy(&single.data, nc),
            energy(&multi.data, nc * nh),
            vfa_energy,
        ]),
    })
}

fn touches_border(field: &[f64], w: usize, h: usize) -> bool {
    field
        .iter()
        .enumerate()
        .any(|(p, r)| *r > 0.5 && (p % w == 0 || p % w == w - 1 || p / w == 0 || p / w == h - 1))
}

/// Parameters of the visual-hull occupancy detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OccupancyConfig {
    /// Gaussian smoothing of the BEV occupancy, in cells.
    pub smoothing: f64,
    /// Views a voxel needs to project into before it can be occupied.
    pub min_views: usize,
    pub decoder: DecoderConfig,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self {
            smoothing: 2.0,
            min_views: 2,
            decoder: DecoderConfig {
                score_threshold: 0.3,
                nms_radius: 6.0,
                max_detections: 200,
            },
        }
    }
}

/// Voxel occupancy: for each voxel, the smallest foreground fraction over
/// the views it projects into (zero when fewer than `min_views` do).
/// Foreground is the largest channel of the pooled feature, clamped to
/// `[0, 1]`.
pub fn voxel_occupancy(
    table: &ProjectionTable,
    vox: &[VoxelFeature],
    min_views: usize,
) -> Vec<f32> {
    let n = table.grid().len();
    (0..n)
        .into_par_iter()
        .map(|v| {
            let (mut best, mut views) = (f32::INFINITY, 0usize);
            for (cam, f) in vox.iter().enumerate() {
                if !table.get(cam, v).valid {
                    continue;
                }
                views += 1;
                let fg = (0..f.channels)
                    .map(|c| f.get(c, v))
                    .fold(0.0f32, f32::max)
                    .clamp(0.0, 1.0);
                best = best.min(fg);
            }
            if views >= min_views.max(1) {
                best
            } else {
                0.0
            }
        })
        .collect()
}

/// Mean over layers of voxel occupancy, `[H][W]`.
pub fn bev_occupancy(grid: &VoxelGridSpec, occupancy: &[f32]) -> Vec<f32> {
    let plane = grid.cells();
    let mut out = vec![0.0f32; plane];
    for k in 0..grid.nz {
        for (cell, o) in out.iter_mut().enumerate() {
            *o += occupancy[k * plane + cell] / grid.nz as f32;
        }
    }
    out
}

/// Separable Gaussian blur with zero padding, truncated at three sigma.
pub fn gaussian_blur(map: &[f32], width: usize, height: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return map.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.into_iter().map(|k| k / total).collect();
    let pass = |src: &[f32], horizontal: bool| -> Vec<f32> {
        let mut dst = vec![0.0f32; src.len()];
        for y in 0..height as isize {
            for x in 0..width as isize {
                let mut acc = 0.0f64;
                for (t, k) in (-r..=r).zip(&kernel) {
                    let (sx, sy) = if horizontal { (x + t, y) } else { (x, y + t) };
                    if sx >= 0 && sy >= 0 && sx < width as isize && sy < height as isize {
                        acc += k * src[sy as usize * width + sx as usize] as f64;
                    }
                }
                dst[y as usize * width + x as usize] = acc as f32;
            }
        }
        dst
    };
    pass(&pass(map, true), false)
}

/// Result of running the occupancy detector on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyOutput {
    /// Smoothed BEV occupancy used as the confidence map.
    pub confidence: Vec<f32>,
    pub detections: Vec<Detection>,
}

/// Detects ground-standing objects from voxel features: visual-hull
/// occupancy, collapsed and smoothed into a confidence map, decoded with
/// the standard decoder, then refined. Each detection's center is moved to
/// the occupancy centroid around its peak and its yaw is set from the
/// principal axis there (an axis only, so it lies in `[0, π)`); dims are the
/// population mean.
pub fn detect_occupancy(
    table: &ProjectionTable,
    vox: &[VoxelFeature],
    mean: &MeanDims,
    cfg: &OccupancyConfig,
) -> Result<OccupancyOutput> {
    let grid = *table.grid();
    let occ = voxel_occupancy(table, vox, cfg.min_views);
    let raw = bev_occupancy(&grid, &occ);
    let confidence = gaussian_blur(&raw, grid.nx, grid.ny, cfg.smoothing);
    let mut maps = TargetMaps::zeros(grid.ny, grid.nx, 4);
    maps.confidence = confidence.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let found = decode(&maps, &grid, mean, 1.0, &cfg.decoder)?;
    let radius = (mean.l.hypot(mean.w) / 2.0 / grid.voxel_l.min(grid.voxel_w)).ceil() as isize;
    let detections = found
        .into_iter()
        .map(|d| refine(&raw, &grid, d, radius, mean))
        .collect();
    Ok(OccupancyOutput {
        confidence,
        detections,
    })
}

fn refine(
    raw: &[f32],
    grid: &VoxelGridSpec,
    mut d: Detection,
    radius: isize,
    mean: &MeanDims,
) -> Detection {
    let (ci, cj) = grid.cell_of(d.center[0], d.center[1]).unwrap_or((0, 0));
    let (mut m, mut sx, mut sy) = (0.0f64, 0.0f64, 0.0f64);
    let mut cells = Vec::new();
    for dj in -radius..=radius {
        for di in -radius..=radius {
            let (i, j) = (ci as isize + di, cj as isize + dj);
            if i < 0
                || j < 0
                || i >= grid.nx as isize
                || j >= grid.ny as isize
                || di * di + dj * dj > radius * radius
            {
                continue;
            }
            let w = raw[j as usize * grid.nx + i as usize] as f64;
            if w <= 0.0 {
                continue;
            }
            let (x, y) = grid.cell_center(i as usize, j as usize);
            m += w;
            sx += w * x;
            sy += w * y;
            cells.push((x, y, w));
        }
    }
    if m > 0.0 {
        let (cx, cy) = (sx / m, sy / m);
        let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
        for (x, y, w) in cells {
            xx += w * (x - cx) * (x - cx);
            yy += w * (y - cy) * (y - cy);
            xy += w * (x - cx) * (y - cy);
        }
        d.center = [cx, cy];
        d.yaw = (0.5 * (2.0 * xy).atan2(xx - yy)).rem_euclid(std::f64::consts::PI);
    }
    d.dims = mean.as_array();
    d
}

/// Occupancy detector from rendered views, including the projection table.
pub fn detect_scene(
    scene: &Scene,
    grid: &VoxelGridSpec,
    maps: &[FeatureMap],
    stride: u32,
    mean: &MeanDims,
    cfg: &OccupancyConfig,
) -> Result<OccupancyOutput> {
    let table = build_projection_table(grid, &scene.cameras, stride)?;
    let vox = aggregate_features(&table, maps)?;
    detect_occupancy(&table, &vox, mean, cfg)
}
