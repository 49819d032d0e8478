//! Bilinear sampling on dense row-major planes.

/// The four neighbours of a continuous position and its fractional offsets,
/// reusable across channels of the same shape.
#[derive(Debug, Clone, Copy)]
pub struct Taps {
    /// Flat indices of `(x0, y0)`, `(x0 + 1, y0)`, `(x0, y0 + 1)`,
    /// `(x0 + 1, y0 + 1)`; `None` outside the plane.
    idx: [Option<usize>; 4],
    fx: f64,
    fy: f64,
}

impl Taps {
    /// `None` when the position is too far outside to touch any sample.
    pub fn new(width: usize, height: usize, x: f64, y: f64) -> Option<Self> {
        if !(x > -1.0 && y > -1.0 && x < width as f64 && y < height as f64) {
            return None;
        }
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let at = |xi: isize, yi: isize| {
            (xi >= 0 && yi >= 0 && xi < width as isize && yi < height as isize)
                .then(|| yi as usize * width + xi as usize)
        };
        Some(Self {
            idx: [
                at(x0, y0),
                at(x0 + 1, y0),
                at(x0, y0 + 1),
                at(x0 + 1, y0 + 1),
            ],
            fx,
            fy,
        })
    }

    #[inline]
    pub fn sample(&self, plane: &[f32]) -> f64 {
        let v = |k: usize| self.idx[k].map_or(0.0, |i| plane[i] as f64);
        let top = v(0) * (1.0 - self.fx) + v(1) * self.fx;
        let bottom = v(2) * (1.0 - self.fx) + v(3) * self.fx;
        top * (1.0 - self.fy) + bottom * self.fy
    }
}

/// Bilinear interpolation of `plane` (`width x height`, row-major) at the
/// continuous position `(x, y)`, where integer coordinates sit on samples.
/// Samples outside the plane read as zero.
pub fn bilinear(plane: &[f32], width: usize, height: usize, x: f64, y: f64) -> f64 {
    Taps::new(width, height, x, y).map_or(0.0, |t| t.sample(plane))
}
