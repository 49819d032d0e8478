//! Detection evaluation: distance-matched MODA/MODP and IoU-matched
//! AP3D/AOS/OS.

mod assignment;
mod iou;

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoding::Detection;
use crate::encoding::GroundTruthObject;
use crate::error::{Error, Result};

pub use assignment::hungarian;
pub use iou::{bev_intersection, clip_convex, polygon_area, rotated_iou_3d, GroundBox};

/// Precision-recall summarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    /// Mean interpolated precision at recall `0, 0.1, ..., 1`.
    #[default]
    Eleven,
    /// Mean interpolated precision at recall `1/40, 2/40, ..., 1`.
    Forty,
    /// Area under the monotone precision envelope.
    AllPoint,
}

impl std::str::FromStr for ApInterpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "11" | "eleven" => Ok(Self::Eleven),
            "40" | "forty" => Ok(Self::Forty),
            "all" | "all_point" => Ok(Self::AllPoint),
            other => Err(Error::InvalidParameter(format!(
                "unknown interpolation {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Ground-distance gate in meters for MODA/MODP.
    pub distance_threshold: f64,
    pub iou_thresholds: Vec<f64>,
    pub interpolation: ApInterpolation,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            distance_threshold: 0.5,
            iou_thresholds: vec![0.25, 0.5],
            interpolation: ApInterpolation::Eleven,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_threshold > 0.0 && self.distance_threshold.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "distance threshold must be positive, got {}",
                self.distance_threshold
            )));
        }
        if let Some(t) = self
            .iou_thresholds
            .iter()
            .find(|t| !(**t > 0.0 && **t <= 1.0))
        {
            return Err(Error::InvalidParameter(format!(
                "IoU threshold {t} is outside (0, 1]"
            )));
        }
        Ok(())
    }
}

/// One-to-one distance matching of a frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatching {
    /// `(detection index, ground-truth index, distance)`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl FrameMatching {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn gt_count(&self) -> usize {
        self.pairs.len() + self.false_negatives.len()
    }

    pub fn total_distance(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }
}

fn ground_distance(d: &Detection, g: &GroundTruthObject) -> f64 {
    (d.center[0] - g.center[0]).hypot(d.center[1] - g.center[1])
}

/// Maximum-cardinality, then minimum-distance, one-to-one matching among
/// pairs no further apart than `r`.
///
/// Gated pairs cost their distance and everything else a constant larger
/// than any sum of gated distances, so an optimal square assignment first
/// maximizes the number of gated pairs.
pub fn match_frame(dets: &[Detection], gts: &[GroundTruthObject], r: f64) -> FrameMatching {
    let n = dets.len().max(gts.len());
    let forbidden = 2.0 * r * (n as f64 + 1.0) + 1.0;
    let mut cost = vec![forbidden; n * n];
    for (i, d) in dets.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let dist = ground_distance(d, g);
            if dist <= r {
                cost[i * n + j] = dist;
            }
        }
    }
    let assign = hungarian(&cost, n);
    let mut m = FrameMatching::default();
    let mut gt_used = vec![false; gts.len()];
    for (i, &j) in assign.iter().enumerate().take(dets.len()) {
        if j < gts.len() && cost[i * n + j] < forbidden {
            m.pairs.push((i, j, cost[i * n + j]));
            gt_used[j] = true;
        } else {
            m.false_positives.push(i);
        }
    }
    m.false_negatives = (0..gts.len()).filter(|&j| !gt_used[j]).collect();
    m
}

/// CLEAR-style detection scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearMetrics {
    pub moda: f64,
    pub modp: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub gt: usize,
}

/// `MODA = 1 − (FP + FN) / GT`, `MODP = Σ(1 − d/r) / TP`. MODA is unbounded
/// below when false positives outnumber the ground truth.
pub fn moda_modp(matchings: &[FrameMatching], r: f64) -> Result<ClearMetrics> {
    let (tp, fp, fn_) = matchings.iter().fold((0, 0, 0), |acc, m| {
        (
            acc.0 + m.tp(),
            acc.1 + m.false_positives.len(),
            acc.2 + m.false_negatives.len(),
        )
    });
    let gt = tp + fn_;
    if gt == 0 {
        return Err(Error::InvalidParameter(
            "evaluation needs at least one ground-truth object".into(),
        ));
    }
    let loc: f64 = matchings
        .iter()
        .flat_map(|m| m.pairs.iter())
        .map(|p| 1.0 - p.2 / r)
        .sum();
    Ok(ClearMetrics {
        moda: 1.0 - (fp + fn_) as f64 / gt as f64,
        modp: if tp > 0 { loc / tp as f64 } else { 0.0 },
        precision: if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        },
        recall: tp as f64 / gt as f64,
        tp,
        fp,
        fn_,
        gt,
    })
}

/// `(1 + cos Δ) / 2`.
pub fn orientation_similarity(a: f64, b: f64) -> f64 {
    (1.0 + (a - b).cos()) / 2.0
}

/// One point of the ranked sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub score: f64,
    pub precision: f64,
    pub recall: f64,
    /// Similarity-weighted precision.
    pub orientation_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub iou_threshold: f64,
    pub ap3d: f64,
    pub aos: f64,
    pub os: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(skip)]
    pub curve: Vec<PrPoint>,
}

/// Interpolated area under a precision curve sampled at increasing recall.
pub fn interpolated_ap(recall: &[f64], precision: &[f64], mode: ApInterpolation) -> f64 {
    let best_from = |r0: f64| {
        recall
            .iter()
            .zip(precision)
            .filter(|(r, _)| **r >= r0 - 1e-12)
            .map(|(_, p)| *p)
            .fold(0.0f64, f64::max)
    };
    match mode {
        ApInterpolation::Eleven => (0..=10).map(|k| best_from(k as f64 / 10.0)).sum::<f64>() / 11.0,
        ApInterpolation::Forty => (1..=40).map(|k| best_from(k as f64 / 40.0)).sum::<f64>() / 40.0,
        ApInterpolation::AllPoint => {
            let mut area = 0.0;
            let mut prev = 0.0;
            for (k, &r) in recall.iter().enumerate() {
                if r > prev {
                    let env = precision[k..].iter().cloned().fold(0.0f64, f64::max);
                    area += (r - prev) * env;
                    prev = r;
                }
            }
            area
        }
    }
}

/// Ranked IoU matching at one threshold. Detections are visited by
/// descending score (ties by frame, then index) and each claims the
/// unmatched ground truth of its frame with the highest IoU at or above the
/// threshold.
pub fn ranked_sweep(
    dets: &[Vec<Detection>],
    gts: &[Vec<GroundTruthObject>],
    threshold: f64,
    mode: ApInterpolation,
) -> Result<ThresholdMetrics> {
    if dets.len() != gts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} detection frames but {} annotation frames",
            dets.len(),
            gts.len()
        )));
    }
    let total_gt: usize = gts.iter().map(Vec::len).sum();
    if total_gt == 0 {
        return Err(Error::InvalidParameter(
            "evaluation needs at least one ground-truth object".into(),
        ));
    }
    let mut order: Vec<(usize, usize)> = dets
        .iter()
        .enumerate()
        .flat_map(|(f, ds)| (0..ds.len()).map(move |i| (f, i)))
        .collect();
    order.sort_by(|a, b| {
        dets[b.0][b.1]
            .score
            .total_cmp(&dets[a.0][a.1].score)
            .then(a.cmp(b))
    });

    let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let (mut tp, mut fp, mut sim) = (0usize, 0usize, 0.0f64);
    let mut curve = Vec::with_capacity(order.len());
    for (f, i) in order {
        let d = &dets[f][i];
        let db = GroundBox::from(d);
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts[f].iter().enumerate() {
            if used[f][j] {
                continue;
            }
            let iou = rotated_iou_3d(&db, &GroundBox::from(g))?;
            if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, _)) => {
                used[f][j] = true;
                tp += 1;
                sim += orientation_similarity(d.yaw, gts[f][j].yaw);
            }
            None => fp += 1,
        }
        let k = (tp + fp) as f64;
        curve.push(PrPoint {
            score: d.score,
            precision: tp as f64 / k,
            recall: tp as f64 / total_gt as f64,
            orientation_precision: sim / k,
        });
    }
    let recall: Vec<f64> = curve.iter().map(|p| p.recall).collect();
    let precision: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    let oprec: Vec<f64> = curve.iter().map(|p| p.orientation_precision).collect();
    Ok(ThresholdMetrics {
        iou_threshold: threshold,
        ap3d: interpolated_ap(&recall, &precision, mode),
        aos: interpolated_ap(&recall, &oprec, mode),
        os: if tp > 0 { sim / tp as f64 } else { 0.0 },
        tp,
        fp,
        fn_: total_gt - tp,
        curve,
    })
}

/// AP3D, AOS and OS at every configured IoU threshold.
pub fn ap3d_aos_os(
    dets: &[Vec<Detection>],
    gts: &[Vec<GroundTruthObject>],
    cfg: &MatchConfig,
) -> Result<Vec<ThresholdMetrics>> {
    cfg.validate()?;
    cfg.iou_thresholds
        .par_iter()
        .map(|&t| ranked_sweep(dets, gts, t, cfg.interpolation))
        .collect()
}

/// Every score reported by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub moda: f64,
    pub modp: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub gt: usize,
    /// Orientation score over the distance-matched pairs.
    pub os: f64,
    pub thresholds: Vec<ThresholdMetrics>,
}

/// Full evaluation over aligned frames.
pub fn evaluate(
    dets: &[Vec<Detection>],
    gts: &[Vec<GroundTruthObject>],
    cfg: &MatchConfig,
) -> Result<MetricsReport> {
    cfg.validate()?;
    if dets.len() != gts.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} detection frames but {} annotation frames",
            dets.len(),
            gts.len()
        )));
    }
    let matchings: Vec<FrameMatching> = dets
        .par_iter()
        .zip(gts.par_iter())
        .map(|(d, g)| match_frame(d, g, cfg.distance_threshold))
        .collect();
    let clear = moda_modp(&matchings, cfg.distance_threshold)?;
    let sims: Vec<f64> = matchings
        .iter()
        .enumerate()
        .flat_map(|(f, m)| m.pairs.iter().map(move |&(i, j, _)| (f, i, j)))
        .map(|(f, i, j)| orientation_similarity(dets[f][i].yaw, gts[f][j].yaw))
        .collect();
    Ok(MetricsReport {
        moda: clear.moda,
        modp: clear.modp,
        precision: clear.precision,
        recall: clear.recall,
        tp: clear.tp,
        fp: clear.fp,
        fn_: clear.fn_,
        gt: clear.gt,
        os: if sims.is_empty() {
            0.0
        } else {
            sims.iter().sum::<f64>() / sims.len() as f64
        },
        thresholds: ap3d_aos_os(dets, gts, cfg)?,
    })
}

/// Writes `iou_threshold,rank,score,precision,recall,orientation_precision`.
pub fn write_pr_csv<W: Write>(mut w: W, report: &MetricsReport) -> Result<()> {
    writeln!(
        w,
        "iou_threshold,rank,score,precision,recall,orientation_precision"
    )?;
    for t in &report.thresholds {
        for (k, p) in t.curve.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                t.iou_threshold,
                k + 1,
                p.score,
                p.precision,
                p.recall,
                p.orientation_precision
            )?;
        }
    }
    Ok(())
}

/// Smallest absolute angle between two headings.
pub fn yaw_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}
