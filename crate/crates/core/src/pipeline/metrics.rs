use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// 2D accuracy threshold in pixels.
pub const ACC_THRESHOLD_2D: f64 = 1.0;
/// 3D accuracy threshold in metres.
pub const ACC_THRESHOLD_3D: f64 = 0.05;

fn errors(pred: &[f64], gt: &[f64], dim: usize, mask: &[u8]) -> Result<Vec<f64>> {
    if dim == 0 || pred.len() != gt.len() || pred.len() != dim * mask.len() {
        return Err(Error::Shape(format!(
            "prediction ({}), ground truth ({}) and mask ({} x {dim}) differ",
            pred.len(),
            gt.len(),
            mask.len()
        )));
    }
    let errs: Vec<f64> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m == 1)
        .map(|(i, _)| {
            let r = i * dim..(i + 1) * dim;
            pred[r.clone()]
                .iter()
                .zip(&gt[r])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    if errs.is_empty() {
        return Err(Error::EmptyMask("metric mask"));
    }
    Ok(errs)
}

/// Masked mean Euclidean end-point error over interleaved `dim`-vectors.
pub fn metric_epe(pred: &[f64], gt: &[f64], dim: usize, mask: &[u8]) -> Result<f64> {
    let e = errors(pred, gt, dim, mask)?;
    Ok(pairwise_sum(&e) / e.len() as f64)
}

/// Percentage of masked vectors whose error is below `threshold`.
pub fn metric_acc(pred: &[f64], gt: &[f64], dim: usize, mask: &[u8], threshold: f64) -> Result<f64> {
    let e = errors(pred, gt, dim, mask)?;
    let hit = e.iter().filter(|&&v| v < threshold).count();
    Ok(100.0 * hit as f64 / e.len() as f64)
}
