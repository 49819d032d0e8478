use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Default number of orientation bins (1° each).
pub const CSL_BINS: usize = 360;
/// Default window radius in bins.
pub const CSL_RADIUS: usize = 6;

pub(crate) fn check_params(bins: usize, radius: usize) -> Result<()> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 bins, got {bins}"
        )));
    }
    if radius == 0 || 2 * radius >= bins {
        return Err(Error::InvalidParameter(format!(
            "window radius must be in [1, {}), got {radius}",
            bins.div_ceil(2)
        )));
    }
    Ok(())
}

/// Bin nearest to `theta`, wrapping at `2π`.
pub fn angle_to_bin(theta: f64, bins: usize) -> usize {
    let t = super::normalize_angle(theta) * bins as f64 / TAU;
    (t.round() as usize) % bins
}

/// Window weight at circular bin distance `d`. The Gaussian has
/// `σ = radius / 3` so it has mostly decayed at the window edge.
fn window(d: isize, radius: usize) -> f32 {
    if d.unsigned_abs() >= radius {
        return 0.0;
    }
    let sigma = radius as f64 / 3.0;
    (-((d * d) as f64) / (2.0 * sigma * sigma)).exp() as f32
}

/// Circular smooth label: a Gaussian window of `2·radius − 1` bins centered
/// on the bin nearest `theta`, zero elsewhere.
pub fn encode_csl(theta: f64, bins: usize, radius: usize) -> Result<Vec<f32>> {
    check_params(bins, radius)?;
    if !theta.is_finite() {
        return Err(Error::InvalidParameter("angle must be finite".into()));
    }
    let peak = angle_to_bin(theta, bins) as isize;
    let r = radius as isize;
    let mut out = vec![0.0f32; bins];
    for d in -(r - 1)..r {
        out[(peak + d).rem_euclid(bins as isize) as usize] = window(d, radius);
    }
    Ok(out)
}

/// [`decode_csl_with`] at the default radius.
pub fn decode_csl(v: &[f32]) -> Result<f64> {
    decode_csl_with(v, CSL_RADIUS.min(v.len().saturating_sub(1) / 2).max(1))
}

/// Angle in `[0, 2π)` from a label vector: circular weighted centroid of the
/// window of `radius` around the arg-max bin. Negative entries count as zero.
pub fn decode_csl_with(v: &[f32], radius: usize) -> Result<f64> {
    let bins = v.len();
    check_params(bins, radius)?;
    let (mut best, mut best_v) = (0usize, f32::NEG_INFINITY);
    for (i, &x) in v.iter().enumerate() {
        if x > best_v {
            best = i;
            best_v = x;
        }
    }
    if !(best_v > 0.0) || !best_v.is_finite() {
        return Err(Error::DegenerateVector);
    }
    let r = radius as isize;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for d in -(r - 1)..r {
        let w = v[(best as isize + d).rem_euclid(bins as isize) as usize].max(0.0) as f64;
        num += w * d as f64;
        den += w;
    }
    let angle = (best as f64 + num / den) * TAU / bins as f64;
    Ok(super::normalize_angle(angle))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_and_window() {
        let v = encode_csl(0.0, 360, 6).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v[5] > 0.0 && v[355] > 0.0);
        assert_eq!(v[6], 0.0);
        assert_eq!(v[354], 0.0);
        assert_eq!(v[1], v[359]);
        assert_eq!(v.iter().filter(|x| **x > 0.0).count(), 11);
    }

    #[test]
    fn symmetric_wrap_decodes_to_zero() {
        let mut v = vec![0.0f32; 360];
        v[0] = 1.0;
        v[1] = 0.5;
        v[359] = 0.5;
        assert_eq!(decode_csl(&v).unwrap(), 0.0);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(
            decode_csl(&[0.0; 360]),
            Err(Error::DegenerateVector)
        ));
    }

    #[test]
    fn parameters_are_checked() {
        assert!(encode_csl(1.0, 1, 1).is_err());
        assert!(encode_csl(1.0, 360, 0).is_err());
        assert!(encode_csl(1.0, 12, 6).is_err());
        assert!(encode_csl(f64::NAN, 360, 6).is_err());
    }

    #[test]
    fn nearest_bin() {
        assert_eq!(angle_to_bin(TAU - 1e-9, 360), 0);
        assert_eq!(angle_to_bin(TAU * 0.5 / 360.0 * 0.99, 360), 0);
        assert_eq!(angle_to_bin(-TAU / 360.0, 360), 359);
    }
}
