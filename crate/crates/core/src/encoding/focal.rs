use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents of the penalty-reduced pixel focal loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocalLossParams {
    /// Focusing exponent on the prediction.
    pub a: f64,
    /// Penalty reduction exponent on `1 - target` for negatives.
    pub b: f64,
    /// Clamp keeping predictions away from 0 and 1 before the logarithm.
    pub eps: f64,
}

impl Default for FocalLossParams {
    fn default() -> Self {
        Self {
            a: 2.0,
            b: 4.0,
            eps: 1e-6,
        }
    }
}

/// Heatmap focal loss. Cells whose target is exactly 1 are positives:
///
/// ```text
/// pos: -(1 - p)^a log p
/// neg: -(1 - t)^b p^a log(1 - p)
/// ```
///
/// summed over the map and divided by `max(#positives, 1)`.
pub fn focal_loss(pred: &[f32], target: &[f32], params: &FocalLossParams) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} cells, target {}",
            pred.len(),
            target.len()
        )));
    }
    if !(params.eps > 0.0 && params.eps < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "eps must be in (0, 0.5), got {}",
            params.eps
        )));
    }
    let (mut sum, mut positives) = (0.0f64, 0usize);
    for (&p, &t) in pred.iter().zip(target) {
        let p = (p as f64).clamp(params.eps, 1.0 - params.eps);
        let t = t as f64;
        if t >= 1.0 {
            positives += 1;
            sum -= (1.0 - p).powf(params.a) * p.ln();
        } else {
            sum -= (1.0 - t).powf(params.b) * p.powf(params.a) * (1.0 - p).ln();
        }
    }
    Ok(sum / positives.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_near_zero() {
        let t = [0.0, 0.2, 1.0, 0.5, 0.0];
        let l = focal_loss(&t, &t, &FocalLossParams::default()).unwrap();
        assert!((0.0..0.1).contains(&l), "{l}");
    }

    #[test]
    fn hand_computed_value() {
        let p = FocalLossParams::default();
        let l = focal_loss(&[0.5, 0.5], &[1.0, 0.0], &p).unwrap();
        let want = -(0.25f64 * 0.5f64.ln()) - 0.25 * 0.5f64.ln();
        assert!((l - want).abs() < 1e-12);
    }

    #[test]
    fn no_positives_normalizes_by_one() {
        let l = focal_loss(&[0.5], &[0.0], &FocalLossParams::default()).unwrap();
        assert!((l + 0.25 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(focal_loss(&[0.5], &[0.0, 1.0], &FocalLossParams::default()).is_err());
    }
}
