//! Finite-difference audit of every differentiable loss on seeded random
//! inputs.
//!
//! Each case excludes the components that sit within `1e-3` of a kink of the
//! loss (the origin of `|.|`, integer sample positions of the bilinear
//! interpolant, nearest-neighbor ties) or, for Charbonnier penalties, residuals
//! below `1e-2` where the curvature makes central differences inaccurate.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::correlation::{
    kl_alignment_loss, photometric_loss, point_residual, Axis, CorrelationVolume, ImageTerm, Modality, PointTerm,
};
use crate::data::{FlowField2D, FlowField3D, Image, Mask, Semantics};
use crate::error::{Error, Result};
use crate::gradcheck::{self, GradCheck, STEP, TOLERANCE};
use crate::luminance::{adversarial_loss, consistency_loss, spatiotemporal_residual};
use crate::numeric::bilinear;
use crate::spatial::PointGrid;
use crate::structure::pseudo_label_loss;

/// Distance from a kink below which a component is not audited.
const KINK_MARGIN: f64 = 1e-3;
/// Charbonnier residuals below this are not audited.
const PSI_MARGIN: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    Consistency,
    Adversarial,
    PseudoLabel,
    Alignment,
    Photometric,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Consistency,
        LossKind::Adversarial,
        LossKind::PseudoLabel,
        LossKind::Alignment,
        LossKind::Photometric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Consistency => "consistency",
            LossKind::Adversarial => "adversarial",
            LossKind::PseudoLabel => "pseudo_label",
            LossKind::Alignment => "alignment",
            LossKind::Photometric => "photometric",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss '{s}'")))
    }
}

/// Outcome of one loss over a range of seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub kind: LossKind,
    pub seeds: usize,
    pub check: GradCheck,
    pub failed_seeds: Vec<u64>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.failed_seeds.is_empty() && self.check.checked > 0
    }
}

fn near_int(v: f64) -> bool {
    (v - v.round()).abs() < KINK_MARGIN
}

/// True when `(sx, sy)` is on a cell edge of the bilinear interpolant or at
/// the frame border.
fn bilinear_kink(sx: f64, sy: f64, w: usize, h: usize) -> bool {
    near_int(sx)
        || near_int(sy)
        || sx < KINK_MARGIN
        || sy < KINK_MARGIN
        || sx > (w - 1) as f64 - KINK_MARGIN
        || sy > (h - 1) as f64 - KINK_MARGIN
}

fn wave_image(w: usize, h: usize, semantics: Semantics, f: impl Fn(f64, f64) -> f64) -> Image {
    let data = (0..w * h).map(|i| f((i % w) as f64, (i / w) as f64)).collect();
    Image::new(w, h, 1, semantics, data).expect("shape is consistent")
}

fn random_flow(rng: &mut ChaCha8Rng, w: usize, h: usize, mag: f64) -> FlowField2D {
    let mut flow = FlowField2D::zeros(w, h);
    flow.data.iter_mut().for_each(|v| *v = rng.random_range(-mag..mag));
    flow
}

fn consistency_case(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (12, 10);
    let (a, b, c) = (
        rng.random_range(0.3..0.9),
        rng.random_range(0.3..0.9),
        rng.random_range(0.0..3.0),
    );
    let luma = wave_image(w, h, Semantics::Luma, |x, y| {
        0.5 + 0.3 * (a * x + c).sin() * (b * y).cos()
    });
    let events = wave_image(w, h, Semantics::Intensity, |x, y| {
        0.2 * (b * x).cos() - 0.15 * (a * y + c).sin()
    });
    let flow = random_flow(&mut rng, w, h, 1.5);
    let mask = Mask::filled(w, h, true);
    let analytic = consistency_loss(&luma, &events, &flow, &mask)?;
    let residual = spatiotemporal_residual(&luma, &events, &flow)?;
    let f = |u: &[f64]| {
        let fl = FlowField2D {
            data: u.to_vec(),
            ..flow.clone()
        };
        consistency_loss(&luma, &events, &fl, &mask).map_or(f64::NAN, |l| l.value)
    };
    let skip = |comp: usize| {
        let p = comp / 2;
        let (x, y) = (p % w, p / w);
        let (du, dv) = flow.get(x, y);
        residual.map.data[p].abs() < KINK_MARGIN || bilinear_kink(x as f64 + du, y as f64 + dv, w, h)
    };
    Ok(gradcheck::check(f, &flow.data, &analytic.gradient, STEP, skip))
}

fn adversarial_case(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (na, nb) = (rng.random_range(2..10), rng.random_range(2..10));
    let x: Vec<f64> = (0..na + nb).map(|_| rng.random_range(0.01..0.99)).collect();
    let analytic = adversarial_loss(&x[..na], &x[na..])?;
    let f = |s: &[f64]| adversarial_loss(&s[..na], &s[na..]).map_or(f64::NAN, |l| l.value);
    Ok(gradcheck::check(f, &x, &analytic.gradient, STEP, |_| false))
}

fn pseudo_label_case(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (6, 5);
    let n = w * h;
    let labels = |rng: &mut ChaCha8Rng| {
        let data = (0..n)
            .map(|_| {
                if rng.random_bool(0.3) {
                    0.0
                } else {
                    rng.random_range(1.0..10.0)
                }
            })
            .collect();
        Image::new(w, h, 1, Semantics::Depth, data)
    };
    let pse_t = labels(&mut rng)?;
    let pse_t2 = labels(&mut rng)?;
    let pred: Vec<f64> = (0..2 * n).map(|_| rng.random_range(1.0..10.0)).collect();
    let split = |x: &[f64]| -> Result<(Image, Image)> {
        Ok((
            Image::new(w, h, 1, Semantics::Depth, x[..n].to_vec())?,
            Image::new(w, h, 1, Semantics::Depth, x[n..].to_vec())?,
        ))
    };
    let (a, b) = split(&pred)?;
    let analytic = pseudo_label_loss(&a, &pse_t, &b, &pse_t2)?;
    let f = |x: &[f64]| {
        split(x)
            .and_then(|(a, b)| pseudo_label_loss(&a, &pse_t, &b, &pse_t2))
            .map_or(f64::NAN, |l| l.value)
    };
    let all_labels: Vec<f64> = pse_t.data.iter().chain(&pse_t2.data).copied().collect();
    let skip = |i: usize| all_labels[i] > 0.0 && (pred[i] - all_labels[i]).abs() < KINK_MARGIN;
    Ok(gradcheck::check(f, &pred, &analytic.gradient, STEP, skip))
}

fn alignment_case(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (radius, samples, slices) = (2, 3, 3);
    let len = samples * (2 * radius + 1);
    let x: Vec<f64> = (0..len * 2 * (2 + slices))
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    let eval = |x: &[f64]| -> Result<crate::correlation::KlLoss> {
        let vols = x
            .chunks(len)
            .enumerate()
            .map(|(i, c)| {
                let (modality, slice) = match i / 2 {
                    0 => (Modality::Lidar, None),
                    1 => (Modality::Rgb, None),
                    s => (Modality::EventSlice, Some(s - 2)),
                };
                let axis = if i % 2 == 0 { Axis::X } else { Axis::Y };
                CorrelationVolume::new(modality, axis, slice, radius, c.to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        let ev: Vec<[&CorrelationVolume; 2]> = (0..slices).map(|s| [&vols[4 + 2 * s], &vols[5 + 2 * s]]).collect();
        kl_alignment_loss([&vols[0], &vols[1]], [&vols[2], &vols[3]], &ev)
    };
    let analytic = eval(&x)?;
    let f = |x: &[f64]| eval(x).map_or(f64::NAN, |l| l.value);
    Ok(gradcheck::check(f, &x, &analytic.flat_gradient(), STEP, |_| false))
}

/// Both photometric terms at once; the argument is the 2D flow followed by
/// the scene flow.
fn photometric_case(seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (12, 10);
    let phase = rng.random_range(0.3..1.5);
    let frame = |p: f64| {
        wave_image(w, h, Semantics::Luma, move |x, y| {
            0.5 + 0.25 * (0.5 * x + p).sin() * (0.35 * y - p).cos()
        })
    };
    let (frame_t, frame_t2) = (frame(0.0), frame(phase));
    let flow2 = random_flow(&mut rng, w, h, 1.5);
    let mask = Mask::filled(w, h, true);
    let np = 25;
    let points: Vec<[f64; 3]> = (0..np)
        .map(|_| {
            [
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(4.0..8.0),
            ]
        })
        .collect();
    let cloud_t2: Vec<[f64; 3]> = points.iter().map(|p| [p[0] + 0.3, p[1], p[2] + 0.1]).collect();
    let grid = PointGrid::new(&cloud_t2, 0.5);
    let vectors: Vec<[f64; 3]> = (0..np)
        .map(|_| {
            [
                0.3 + rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                0.1 + rng.random_range(-0.1..0.1),
            ]
        })
        .collect();
    let flow3 = FlowField3D::new(vectors, vec![1; np])?;
    let point_mask = vec![1u8; np];
    let n2 = flow2.data.len();
    let x: Vec<f64> = flow2.data.iter().copied().chain(flow3.flat()).collect();
    let eval = |x: &[f64]| -> Result<crate::correlation::PhotometricLoss> {
        let f2 = FlowField2D {
            data: x[..n2].to_vec(),
            ..flow2.clone()
        };
        let f3 = FlowField3D::from_flat(&x[n2..], vec![1; np])?;
        photometric_loss(
            Some(ImageTerm {
                frame_t: &frame_t,
                frame_t2: &frame_t2,
                flow: &f2,
                mask: &mask,
            }),
            Some(PointTerm {
                points_t: &points,
                flow: &f3,
                cloud_t2: &grid,
                mask: &point_mask,
            }),
        )
    };
    let l = eval(&x)?;
    let analytic: Vec<f64> = l.grad_flow_2d.iter().chain(&l.grad_flow_3d).copied().collect();
    let skip = |c: usize| {
        if c < n2 {
            let p = c / 2;
            let (px, py) = (p % w, p / w);
            let (du, dv) = flow2.get(px, py);
            let (sx, sy) = (px as f64 + du, py as f64 + dv);
            let r = frame_t.at(px, py) - bilinear(&frame_t2.data, w, h, sx, sy).unwrap_or(0.0);
            return bilinear_kink(sx, sy, w, h) || r.abs() < PSI_MARGIN;
        }
        let c = c - n2;
        let i = c / 3;
        let (p, f) = (points[i], flow3.vectors[i]);
        let q = [p[0] + f[0], p[1] + f[1], p[2] + f[2]];
        let tie = match grid.nearest_two(&q) {
            Some(((_, d1), Some((_, d2)))) => d2 - d1 < KINK_MARGIN,
            _ => false,
        };
        let small = point_residual(&p, &f, &grid).is_none_or(|e| e[c % 3].abs() < PSI_MARGIN);
        tie || small
    };
    Ok(gradcheck::check(
        |x: &[f64]| eval(x).map_or(f64::NAN, |l| l.value),
        &x,
        &analytic,
        STEP,
        skip,
    ))
}

/// Audit one loss on the random instance drawn from `seed`.
pub fn audit_case(kind: LossKind, seed: u64) -> Result<GradCheck> {
    match kind {
        LossKind::Consistency => consistency_case(seed),
        LossKind::Adversarial => adversarial_case(seed),
        LossKind::PseudoLabel => pseudo_label_case(seed),
        LossKind::Alignment => alignment_case(seed),
        LossKind::Photometric => photometric_case(seed),
    }
}

/// Audit one loss over `seeds`, failing a seed when its worst relative error
/// reaches [`TOLERANCE`].
pub fn audit_loss(kind: LossKind, seeds: impl IntoIterator<Item = u64>) -> Result<AuditReport> {
    let mut report = AuditReport {
        kind,
        seeds: 0,
        check: GradCheck {
            checked: 0,
            skipped: 0,
            max_rel_err: 0.0,
            worst: None,
        },
        failed_seeds: Vec::new(),
    };
    for seed in seeds {
        let c = audit_case(kind, seed)?;
        if !c.passed(TOLERANCE) {
            report.failed_seeds.push(seed);
        }
        report.check = report.check.merge(c);
        report.seeds += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!("nope".parse::<LossKind>().is_err());
    }

    #[test]
    fn every_loss_passes_on_a_few_seeds() {
        for k in LossKind::ALL {
            let r = audit_loss(k, 0..3).unwrap();
            assert!(r.passed(), "{k}: {r:?}");
            assert_eq!(r.seeds, 3);
        }
    }

    #[test]
    fn empty_seed_range_is_not_a_pass() {
        assert!(!audit_loss(LossKind::Adversarial, 0..0).unwrap().passed());
    }
}
