//! BEV maps back to oriented 3D detections.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::{decode_csl_with, MeanDims, TargetMaps, CSL_RADIUS};
use crate::error::{Error, Result};
use crate::voxel::VoxelGridSpec;

/// An oriented box standing on the ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Ground position `(x, y)` in meters.
    pub center: [f64; 2],
    /// `(length, width, height)` in meters.
    pub dims: [f64; 3],
    /// Heading in `[0, 2π)`.
    pub yaw: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub score_threshold: f64,
    /// Suppression radius in cells.
    pub nms_radius: f64,
    pub max_detections: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.4,
            nms_radius: 6.0,
            max_detections: 200,
        }
    }
}

impl DecoderConfig {
    /// Defaults with the suppression radius set to half the mean footprint
    /// diagonal, rounded up to whole cells.
    pub fn for_population(mean: &MeanDims, grid: &VoxelGridSpec) -> Self {
        let cell = grid.voxel_l.min(grid.voxel_w);
        Self {
            nms_radius: (mean.l.hypot(mean.w) / 2.0 / cell).ceil().max(1.0),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::InvalidParameter(format!(
                "score threshold must be in [0, 1], got {}",
                self.score_threshold
            )));
        }
        if !(self.nms_radius >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "nms radius must be at least 1 cell, got {}",
                self.nms_radius
            )));
        }
        Ok(())
    }
}

/// Whether cell `idx` is a peak: strictly above its row-major predecessors
/// in the 8-neighborhood and not below its successors, so a plateau keeps
/// only its first cell.
fn is_peak(conf: &[f32], w: usize, h: usize, i: usize, j: usize) -> bool {
    let v = conf[j * w + i];
    for dj in -1isize..=1 {
        for di in -1isize..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let (ni, nj) = (i as isize + di, j as isize + dj);
            if ni < 0 || nj < 0 || ni >= w as isize || nj >= h as isize {
                continue;
            }
            let n = conf[nj as usize * w + ni as usize];
            let before = (dj, di) < (0, 0);
            if (before && v <= n) || (!before && v < n) {
                return false;
            }
        }
    }
    true
}

/// Peak extraction, greedy suppression and regression read-out.
pub fn decode(
    maps: &TargetMaps,
    grid: &VoxelGridSpec,
    mean: &MeanDims,
    gamma: f64,
    cfg: &DecoderConfig,
) -> Result<Vec<Detection>> {
    maps.validate()?;
    cfg.validate()?;
    if maps.height != grid.ny || maps.width != grid.nx {
        return Err(Error::ShapeMismatch(format!(
            "maps are {}x{} but the grid is {}x{}",
            maps.height, maps.width, grid.ny, grid.nx
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let (w, h) = (maps.width, maps.height);
    let conf = &maps.confidence;
    let mut peaks: Vec<(f32, usize)> = (0..w * h)
        .filter(|&idx| {
            let v = conf[idx];
            v as f64 >= cfg.score_threshold
                && v.is_finite()
                && is_peak(conf, w, h, idx % w, idx / w)
        })
        .map(|idx| (conf[idx], idx))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let r2 = cfg.nms_radius * cfg.nms_radius;
    let mut kept: Vec<usize> = Vec::new();
    for &(_, idx) in &peaks {
        if kept.len() >= cfg.max_detections {
            break;
        }
        let (i, j) = ((idx % w) as f64, (idx / w) as f64);
        let suppressed = kept.iter().any(|&k| {
            let (ki, kj) = ((k % w) as f64, (k / w) as f64);
            (ki - i).powi(2) + (kj - j).powi(2) <= r2
        });
        if !suppressed {
            kept.push(idx);
        }
    }

    let plane = maps.plane();
    let radius = CSL_RADIUS.min(maps.bins.saturating_sub(1) / 2).max(1);
    Ok(kept
        .into_iter()
        .map(|idx| {
            let (ci, cj) = ((idx % w) as f64, (idx / w) as f64);
            let sx = (ci + maps.offset[idx] as f64) * gamma;
            let sy = (cj + maps.offset[plane + idx] as f64) * gamma;
            let center = [
                grid.origin.x + sx * (grid.voxel_l / gamma),
                grid.origin.y + sy * (grid.voxel_w / gamma),
            ];
            let m = mean.as_array();
            let dims = std::array::from_fn(|c| m[c] * (maps.dims[c * plane + idx] as f64).exp());
            let yaw = decode_csl_with(&maps.orientation_at(idx), radius).unwrap_or(0.0);
            Detection {
                center,
                dims,
                yaw,
                score: (conf[idx] as f64).clamp(0.0, 1.0),
            }
        })
        .collect())
}

/// One line of a detection JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: u64,
    pub id: i64,
    pub center: [f64; 2],
    pub dims: [f64; 3],
    pub yaw: f64,
    pub score: f64,
}

impl DetectionRecord {
    pub fn new(frame: u64, id: i64, d: &Detection) -> Self {
        Self {
            frame,
            id,
            center: d.center,
            dims: d.dims,
            yaw: d.yaw,
            score: d.score,
        }
    }

    pub fn detection(&self) -> Detection {
        Detection {
            center: self.center,
            dims: self.dims,
            yaw: self.yaw,
            score: self.score,
        }
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[DetectionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("detection line {}: {e}", n + 1)))?;
        if !(0.0..=1.0).contains(&rec.score) || !rec.dims.iter().all(|d| *d > 0.0) {
            return Err(Error::Format(format!(
                "detection line {} is out of range",
                n + 1
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn save_jsonl(path: impl AsRef<Path>, records: &[DetectionRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_jsonl(&mut f, records)?;
    f.flush()?;
    Ok(())
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    read_jsonl(BufReader::new(fs::File::open(path)?))
}
