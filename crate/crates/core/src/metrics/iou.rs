use serde::{Deserialize, Serialize};

use crate::decoding::Detection;
use crate::encoding::GroundTruthObject;
use crate::error::{Error, Result};

/// Yaw-rotated box resting on `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundBox {
    pub center: [f64; 2],
    pub dims: [f64; 3],
    pub yaw: f64,
}

impl GroundBox {
    /// Footprint corners, counter-clockwise.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.dims[0] / 2.0, self.dims[1] / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].map(|(a, b)| {
            [
                self.center[0] + c * a - s * b,
                self.center[1] + s * a + c * b,
            ]
        })
    }

    /// Whether a ground point lies inside the footprint.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        (c * dx + s * dy).abs() <= self.dims[0] / 2.0
            && (-s * dx + c * dy).abs() <= self.dims[1] / 2.0
    }

    fn check(&self) -> Result<()> {
        if self.dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
            Ok(())
        } else {
            Err(Error::DegenerateBox)
        }
    }
}

impl From<&Detection> for GroundBox {
    fn from(d: &Detection) -> Self {
        Self {
            center: d.center,
            dims: d.dims,
            yaw: d.yaw,
        }
    }
}

impl From<&GroundTruthObject> for GroundBox {
    fn from(o: &GroundTruthObject) -> Self {
        Self {
            center: o.center,
            dims: o.dims,
            yaw: o.yaw,
        }
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    twice.abs() / 2.0
}

/// Sutherland-Hodgman clipping of `subject` by a counter-clockwise convex
/// `clip` polygon.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    for e in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[e], clip[(e + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for k in 0..input.len() {
            let (p, q) = (input[k], input[(k + 1) % input.len()]);
            let (sp, sq) = (cross(a, b, p), cross(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

/// Footprint intersection area of two boxes.
pub fn bev_intersection(a: &GroundBox, b: &GroundBox) -> f64 {
    let clipped = clip_convex(&a.footprint(), &b.footprint());
    if clipped.len() < 3 {
        0.0
    } else {
        polygon_area(&clipped)
    }
}

/// Volume IoU of two ground-standing boxes: footprint overlap times the
/// shared height `min(h_a, h_b)`, over the union volume.
pub fn rotated_iou_3d(a: &GroundBox, b: &GroundBox) -> Result<f64> {
    a.check()?;
    b.check()?;
    let inter = bev_intersection(a, b) * a.dims[2].min(b.dims[2]);
    let va = a.dims.iter().product::<f64>();
    let vb = b.dims.iter().product::<f64>();
    Ok((inter / (va + vb - inter)).clamp(0.0, 1.0))
}
