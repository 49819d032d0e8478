//! 8-bit binary PPM output with a fixed palette.

use std::io::Write;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Viridis stops at `0, 1/8, ..., 1`.
const STOPS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

/// Palette color of `t` in `[0, 1]`.
pub fn palette(t: f32) -> [u8; 3] {
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let x = t * 8.0;
    let k = (x.floor() as usize).min(7);
    let f = x - k as f32;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    std::array::from_fn(|c| (a[c] as f32 + (b[c] as f32 - a[c] as f32) * f).round() as u8)
}

/// An RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Self {
            width,
            height,
            rgb: fill.repeat(width * height),
        }
    }

    pub fn put(&mut self, x: isize, y: isize, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    /// Bresenham segment.
    pub fn line(&mut self, (x0, y0): (isize, isize), (x1, y1): (isize, isize), c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&self.to_ppm())
            .map_err(|e| CliError::io(path, e))
    }
}

/// Heatmap of a `[H][W]` BEV map scaled by its maximum. Row 0 of the map
/// (smallest `y`) is drawn at the bottom so `+y` points up.
pub fn heatmap(values: &[f32], width: usize, height: usize) -> Image {
    let max = values
        .iter()
        .cloned()
        .filter(|v| v.is_finite())
        .fold(0.0f32, f32::max);
    let mut img = Image::new(width, height, [0, 0, 0]);
    for y in 0..height {
        for x in 0..width {
            let v = values[y * width + x];
            let t = if max > 0.0 { v / max } else { 0.0 };
            img.put(x as isize, (height - 1 - y) as isize, palette(t));
        }
    }
    img
}

/// Line plot of one or more series over shared x positions, each series
/// scaled to its own `[min, max]`.
pub fn line_plot(series: &[Vec<f64>], width: usize, height: usize) -> Image {
    let mut img = Image::new(width, height, [255, 255, 255]);
    let (l, r, t, b) = (20isize, width as isize - 12, 12isize, height as isize - 20);
    let axis = [0, 0, 0];
    img.line((l, b), (r, b), axis);
    img.line((l, b), (l, t), axis);
    for (k, s) in series.iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        let color = palette(if series.len() > 1 {
            k as f32 / (series.len() - 1) as f32 * 0.8
        } else {
            0.0
        });
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let pts: Vec<(isize, isize)> = s
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let fx = if s.len() > 1 {
                    i as f64 / (s.len() - 1) as f64
                } else {
                    0.5
                };
                let fy = if hi > lo { (v - lo) / span } else { 0.5 };
                (
                    l + (fx * (r - l) as f64).round() as isize,
                    b - (fy * (b - t) as f64).round() as isize,
                )
            })
            .collect();
        for w in pts.windows(2) {
            img.line(w[0], w[1], color);
        }
        for &(x, y) in &pts {
            for dy in -2..=2 {
                for dx in -2..=2 {
                    img.put(x + dx, y + dy, color);
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_endpoints() {
        assert_eq!(palette(0.0), STOPS[0]);
        assert_eq!(palette(1.0), STOPS[8]);
        assert_eq!(palette(f32::NAN), STOPS[0]);
        assert_eq!(palette(0.5), STOPS[4]);
    }

    #[test]
    fn ppm_header_and_size() {
        let img = heatmap(&[0.0, 1.0, 0.5, 0.25], 2, 2);
        let bytes = img.to_ppm();
        assert!(bytes.starts_with(b"P6\n2 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 12);
        // Map row 0 is drawn on the bottom image row.
        assert_eq!(&img.rgb[6..9], &STOPS[0]);
        assert_eq!(&img.rgb[9..12], &STOPS[8]);
    }

    #[test]
    fn plot_is_deterministic() {
        let s = vec![vec![0.5, 0.9, 1.0, 1.0]];
        assert_eq!(line_plot(&s, 120, 80), line_plot(&s, 120, 80));
    }
}
