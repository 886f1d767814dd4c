use super::volume::{is_sentinel, CorrelationVolume};
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// Log-softmax over the entries where `keep` is true.
fn log_softmax(scores: &[f64], keep: &[bool]) -> Vec<f64> {
    let max = scores
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<f64> = scores
        .iter()
        .zip(keep)
        .map(|(s, &k)| if k { (s - max).exp() } else { 0.0 })
        .collect();
    let lse = max + pairwise_sum(&terms).ln();
    scores
        .iter()
        .zip(keep)
        .map(|(s, &k)| if k { s - lse } else { f64::NEG_INFINITY })
        .collect()
}

/// Softmax over the non-sentinel entries; sentinels get probability 0.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let keep: Vec<bool> = scores.iter().map(|&s| !is_sentinel(s)).collect();
    if !keep.iter().any(|&k| k) {
        return vec![0.0; scores.len()];
    }
    log_softmax(scores, &keep).into_iter().map(f64::exp).collect()
}

/// `KL(softmax(a) || softmax(b))` over the entries finite in both profiles,
/// with its gradients `(d/da, d/db)`. Profiles without a shared finite entry
/// contribute nothing.
pub fn kl_softmax(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let keep: Vec<bool> = a
        .iter()
        .zip(b)
        .map(|(x, y)| !is_sentinel(*x) && !is_sentinel(*y))
        .collect();
    if !keep.iter().any(|&k| k) {
        return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let lp = log_softmax(a, &keep);
    let lq = log_softmax(b, &keep);
    let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    let q: Vec<f64> = lq.iter().map(|v| v.exp()).collect();
    let terms: Vec<f64> = (0..a.len())
        .map(|i| if keep[i] { p[i] * (lp[i] - lq[i]) } else { 0.0 })
        .collect();
    let kl = pairwise_sum(&terms).max(0.0);
    let ga = (0..a.len())
        .map(|i| if keep[i] { p[i] * (lp[i] - lq[i] - kl) } else { 0.0 })
        .collect();
    let gb = (0..b.len()).map(|i| if keep[i] { q[i] - p[i] } else { 0.0 }).collect();
    (kl, ga, gb)
}

/// Alignment loss and its gradient with respect to every input volume, in
/// the same layout as the volumes' score arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct KlLoss {
    pub value: f64,
    pub grad_lidar: [Vec<f64>; 2],
    pub grad_rgb: [Vec<f64>; 2],
    pub grad_events: Vec<[Vec<f64>; 2]>,
}

impl KlLoss {
    /// All gradients flattened: LiDAR x, y, RGB x, y, then event slices.
    pub fn flat_gradient(&self) -> Vec<f64> {
        let mut g = Vec::new();
        for v in self.grad_lidar.iter().chain(&self.grad_rgb) {
            g.extend_from_slice(v);
        }
        for s in &self.grad_events {
            g.extend_from_slice(&s[0]);
            g.extend_from_slice(&s[1]);
        }
        g
    }
}

/// Sample-mean over the `x` and `y` axes of
/// `KL(P_l || P_r) + (1/T) sum_i KL(P_l || P_e[i])` with `P = softmax(cv)`.
pub fn kl_alignment_loss(
    lidar: [&CorrelationVolume; 2],
    rgb: [&CorrelationVolume; 2],
    events: &[[&CorrelationVolume; 2]],
) -> Result<KlLoss> {
    for a in 0..2 {
        let all = std::iter::once(rgb[a]).chain(events.iter().map(|e| e[a]));
        for v in all {
            if v.radius != lidar[a].radius || v.scores.len() != lidar[a].scores.len() {
                return Err(Error::Shape(format!(
                    "{} profile layout differs from LiDAR on axis {}",
                    v.modality.name(),
                    v.axis.name()
                )));
            }
        }
    }
    let n = lidar[0].samples();
    if n == 0 || lidar[1].samples() != n {
        return Err(Error::Shape(
            "LiDAR x/y profiles need the same nonzero sample count".into(),
        ));
    }
    let inv_n = 1.0 / n as f64;
    let inv_t = if events.is_empty() {
        0.0
    } else {
        1.0 / events.len() as f64
    };
    let mut terms = Vec::with_capacity(2 * n * (1 + events.len()));
    let mut grad_lidar = [vec![0.0; lidar[0].scores.len()], vec![0.0; lidar[1].scores.len()]];
    let mut grad_rgb = [vec![0.0; rgb[0].scores.len()], vec![0.0; rgb[1].scores.len()]];
    let mut grad_events: Vec<[Vec<f64>; 2]> = events
        .iter()
        .map(|e| [vec![0.0; e[0].scores.len()], vec![0.0; e[1].scores.len()]])
        .collect();
    let len = lidar[0].profile_len();
    for a in 0..2 {
        for s in 0..n {
            let range = s * len..(s + 1) * len;
            let pl = lidar[a].profile(s);
            let (kl, gl, gr) = kl_softmax(pl, rgb[a].profile(s));
            terms.push(kl * inv_n);
            for (k, i) in range.clone().enumerate() {
                grad_lidar[a][i] += gl[k] * inv_n;
                grad_rgb[a][i] += gr[k] * inv_n;
            }
            for (t, e) in events.iter().enumerate() {
                let (kl, gl, ge) = kl_softmax(pl, e[a].profile(s));
                terms.push(kl * inv_n * inv_t);
                for (k, i) in range.clone().enumerate() {
                    grad_lidar[a][i] += gl[k] * inv_n * inv_t;
                    grad_events[t][a][i] += ge[k] * inv_n * inv_t;
                }
            }
        }
    }
    Ok(KlLoss {
        value: pairwise_sum(&terms),
        grad_lidar,
        grad_rgb,
        grad_events,
    })
}
