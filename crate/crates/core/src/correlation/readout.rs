use super::kl::softmax;
use super::volume::{is_sentinel, AxisOffsets, FusedCorrelation};
use crate::data::{FlowField2D, FlowField3D, Image, Mask, PointCloud};
use crate::error::{Error, Result};
use crate::numeric::{bilinear, bilinear_strided};
use crate::spatial::PointGrid;

/// Expected offset under `softmax(profile / tau)`; `None` for an all-sentinel
/// profile.
pub fn soft_argmax(profile: &[f64], offsets: &[f64], tau: f64) -> Option<f64> {
    debug_assert_eq!(profile.len(), offsets.len());
    if profile.iter().all(|&v| is_sentinel(v)) {
        return None;
    }
    let scaled: Vec<f64> = profile
        .iter()
        .map(|&v| if is_sentinel(v) { v } else { v / tau })
        .collect();
    let p = softmax(&scaled);
    let v: f64 = p.iter().zip(offsets).map(|(w, o)| w * o).sum();
    // Convexity guard against rounding.
    let lo = offsets.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(v.clamp(lo, hi))
}

/// Per-sample readout in displacement-index units (pixels for `x`/`y`).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFlow {
    /// `(du, dv)` in pixels.
    pub uv: Vec<(f64, f64)>,
    /// `dz` in metres.
    pub dz: Vec<f64>,
    pub valid: Vec<u8>,
}

/// Soft-argmax of every fused profile. `x`/`y` offsets are pixel indices;
/// `z` uses the per-sample metric step.
pub fn soft_argmax_flow(corr: &FusedCorrelation, offsets: &AxisOffsets, tau: f64) -> Result<SampleFlow> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("soft-argmax temperature must be > 0, got {tau}")));
    }
    let n = corr.samples();
    if offsets.step.len() != n || offsets.radius != corr.radius {
        return Err(Error::Shape("offsets do not match the fused correlation".into()));
    }
    let r = corr.radius as i64;
    let pix: Vec<f64> = (-r..=r).map(|k| k as f64).collect();
    let mut out = SampleFlow {
        uv: Vec::with_capacity(n),
        dz: Vec::with_capacity(n),
        valid: Vec::with_capacity(n),
    };
    for s in 0..n {
        let zoff: Vec<f64> = (0..pix.len()).map(|k| offsets.offset(s, k)).collect();
        let du = soft_argmax(corr.profile(super::Axis::X, s), &pix, tau);
        let dv = soft_argmax(corr.profile(super::Axis::Y, s), &pix, tau);
        let dz = soft_argmax(corr.profile(super::Axis::Z, s), &zoff, tau);
        if [du, dv, dz].iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "soft-argmax readout of sample {s} at temperature {tau:e}"
            )));
        }
        match (du, dv) {
            (Some(du), Some(dv)) => {
                out.uv.push((du, dv));
                out.dz.push(dz.unwrap_or(0.0));
                out.valid.push(1);
            }
            _ => {
                out.uv.push((0.0, 0.0));
                out.dz.push(0.0);
                out.valid.push(0);
            }
        }
    }
    Ok(out)
}

/// Lift per-sample pixel displacement plus depth change to scene flow:
/// `backproject(u + du, v + dv, z + dz) - p`.
pub fn scene_flow_from_samples(
    flow: &SampleFlow,
    cloud: &PointCloud,
    samples: &[usize],
    uv: &[(f64, f64)],
    cam: &crate::data::CameraIntrinsics,
) -> FlowField3D {
    let vectors = samples
        .iter()
        .enumerate()
        .map(|(s, &i)| {
            if flow.valid[s] == 0 {
                return [0.0; 3];
            }
            let p = cloud.points[i];
            let (u, v) = uv[s];
            let (du, dv) = flow.uv[s];
            let q = cam.backproject(u + du, v + dv, p[2] + flow.dz[s]);
            [q[0] - p[0], q[1] - p[1], q[2] - p[2]]
        })
        .collect();
    FlowField3D {
        vectors,
        valid: flow.valid.clone(),
    }
}

/// Dense flow from sparse samples: every pixel takes the displacement of
/// the nearest valid sample anchor (ties to the lower index).
pub fn densify_flow(width: usize, height: usize, anchors: &[(usize, usize)], flow: &SampleFlow) -> FlowField2D {
    let pts: Vec<[f64; 3]> = anchors
        .iter()
        .zip(&flow.valid)
        .filter(|(_, &v)| v == 1)
        .map(|(&(x, y), _)| [x as f64, y as f64, 0.0])
        .collect();
    let ids: Vec<usize> = (0..anchors.len()).filter(|&i| flow.valid[i] == 1).collect();
    if pts.is_empty() {
        return FlowField2D::empty(width, height);
    }
    let grid = PointGrid::new(&pts, 4.0);
    let mut out = FlowField2D::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let (j, _) = grid.nearest(&[x as f64, y as f64, 0.0]).expect("nonempty grid");
            let (du, dv) = flow.uv[ids[j]];
            out.set(x, y, du, dv);
        }
    }
    out
}

/// Backward warp `out(x) = I(x + U(x))` with bilinear sampling; samples that
/// leave the frame read 0 and clear the mask.
pub fn warp_image(img: &Image, flow: &FlowField2D) -> Result<(Image, Mask)> {
    if img.width != flow.width || img.height != flow.height {
        return Err(Error::Shape("image and flow differ in size".into()));
    }
    let (w, h, c) = (img.width, img.height, img.channels);
    let mut data = vec![0.0; img.data.len()];
    let mut mask = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let (du, dv) = flow.get(x, y);
            let (sx, sy) = (x as f64 + du, y as f64 + dv);
            let i = y * w + x;
            let mut inside = true;
            for k in 0..c {
                match bilinear_strided(&img.data, w, h, c, k, sx, sy) {
                    Some(v) => data[i * c + k] = v,
                    None => inside = false,
                }
            }
            if inside {
                mask[i] = 1;
            } else {
                data[i * c..(i + 1) * c].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    Ok((
        Image {
            width: w,
            height: h,
            channels: c,
            semantics: img.semantics,
            data,
        },
        Mask {
            width: w,
            height: h,
            data: mask,
        },
    ))
}

/// Additive displacement of the points listed in `samples`.
pub fn warp_points(pc: &PointCloud, samples: &[usize], flow: &FlowField3D) -> Result<PointCloud> {
    if samples.len() != flow.len() {
        return Err(Error::Shape("one flow vector per sample required".into()));
    }
    let points = samples
        .iter()
        .zip(&flow.vectors)
        .map(|(&i, f)| {
            let p = pc.points[i];
            [p[0] + f[0], p[1] + f[1], p[2] + f[2]]
        })
        .collect();
    PointCloud::new(points)
}

/// Default forward-backward tolerance `0.01 + 0.05 (|f|^2 + |b|^2)`.
pub fn default_occlusion_tolerance(f2: f64, b2: f64) -> f64 {
    0.01 + 0.05 * (f2 + b2)
}

/// Forward-backward check: valid where `|fwd(x) + bwd(x + fwd(x))| <= tau`
/// with `bwd` sampled bilinearly. `tau = None` uses the default rule.
pub fn occlusion_mask_2d(fwd: &FlowField2D, bwd: &FlowField2D, tau: Option<f64>) -> Result<Mask> {
    if fwd.width != bwd.width || fwd.height != bwd.height {
        return Err(Error::Shape("forward and backward flow differ in size".into()));
    }
    let (w, h) = (fwd.width, fwd.height);
    let bu: Vec<f64> = bwd.data.iter().step_by(2).copied().collect();
    let bv: Vec<f64> = bwd.data.iter().skip(1).step_by(2).copied().collect();
    let bvalid: Vec<f64> = bwd.valid.iter().map(|&m| m as f64).collect();
    let mut data = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            if !fwd.is_valid(x, y) {
                continue;
            }
            let (fu, fv) = fwd.get(x, y);
            let (sx, sy) = (x as f64 + fu, y as f64 + fv);
            let (Some(u), Some(v), Some(m)) = (
                bilinear(&bu, w, h, sx, sy),
                bilinear(&bv, w, h, sx, sy),
                bilinear(&bvalid, w, h, sx, sy),
            ) else {
                continue;
            };
            if m < 1.0 - 1e-9 {
                continue;
            }
            let (ex, ey) = (fu + u, fv + v);
            let t = tau.unwrap_or_else(|| default_occlusion_tolerance(fu * fu + fv * fv, u * u + v * v));
            if (ex * ex + ey * ey).sqrt() <= t {
                data[y * w + x] = 1;
            }
        }
    }
    Ok(Mask {
        width: w,
        height: h,
        data,
    })
}

/// 3D forward-backward check: `bwd` is read at the nearest point of `pts2`
/// to `p + fwd(p)`.
pub fn occlusion_mask_3d(
    pts1: &[[f64; 3]],
    fwd: &FlowField3D,
    grid2: &PointGrid,
    bwd: &FlowField3D,
    tau: Option<f64>,
) -> Result<Vec<u8>> {
    if pts1.len() != fwd.len() || grid2.len() != bwd.len() {
        return Err(Error::Shape("scene flow does not match its points".into()));
    }
    let mut out = vec![0u8; pts1.len()];
    for (i, p) in pts1.iter().enumerate() {
        if fwd.valid[i] == 0 {
            continue;
        }
        let f = fwd.vectors[i];
        let q = [p[0] + f[0], p[1] + f[1], p[2] + f[2]];
        let Some((j, _)) = grid2.nearest(&q) else { continue };
        if bwd.valid[j] == 0 {
            continue;
        }
        let b = bwd.vectors[j];
        let e = [f[0] + b[0], f[1] + b[1], f[2] + b[2]];
        let f2 = f.iter().map(|v| v * v).sum::<f64>();
        let b2 = b.iter().map(|v| v * v).sum::<f64>();
        let t = tau.unwrap_or_else(|| default_occlusion_tolerance(f2, b2));
        if e.iter().map(|v| v * v).sum::<f64>().sqrt() <= t {
            out[i] = 1;
        }
    }
    Ok(out)
}
