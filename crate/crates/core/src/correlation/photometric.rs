use crate::data::{FlowField2D, FlowField3D, Image, Mask};
use crate::error::{Error, Result};
use crate::numeric::{bilinear_with_grad, pairwise_sum};
use crate::spatial::PointGrid;

/// Charbonnier offset.
pub const PSI_EPS: f64 = 1e-3;
/// Exponent of the generalized Charbonnier penalty.
pub const PSI_P: f64 = 0.4;

/// `(x^2 + eps^2)^(p/2) - eps^p`, zero at the origin.
#[inline]
pub fn psi(x: f64) -> f64 {
    (x * x + PSI_EPS * PSI_EPS).powf(PSI_P / 2.0) - PSI_EPS.powf(PSI_P)
}

#[inline]
pub fn psi_prime(x: f64) -> f64 {
    PSI_P * x * (x * x + PSI_EPS * PSI_EPS).powf(PSI_P / 2.0 - 1.0)
}

/// Image term: frame `t`, frame `t2`, the flow from `t` to `t2` and the
/// pixels that take part.
#[derive(Debug, Clone, Copy)]
pub struct ImageTerm<'a> {
    pub frame_t: &'a Image,
    pub frame_t2: &'a Image,
    pub flow: &'a FlowField2D,
    pub mask: &'a Mask,
}

/// Point term: sampled points at `t`, their scene flow, the cloud at `t2`
/// (indexed) and the samples that take part.
#[derive(Debug, Clone, Copy)]
pub struct PointTerm<'a> {
    pub points_t: &'a [[f64; 3]],
    pub flow: &'a FlowField3D,
    pub cloud_t2: &'a PointGrid,
    pub mask: &'a [u8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotometricLoss {
    pub value: f64,
    pub image_term: f64,
    pub point_term: f64,
    /// d/dU, interleaved `(du, dv)` per pixel (empty without an image term).
    pub grad_flow_2d: Vec<f64>,
    /// d/dflow, `(dx, dy, dz)` per sample (empty without a point term).
    pub grad_flow_3d: Vec<f64>,
}

fn image_term(t: &ImageTerm) -> Result<(f64, Vec<f64>)> {
    let (w, h) = (t.frame_t.width, t.frame_t.height);
    t.frame_t.ensure_same_shape(t.frame_t2, "photometric frames")?;
    if t.frame_t.channels != 1 {
        return Err(Error::Shape("photometric frames must be single-channel".into()));
    }
    if t.flow.width != w || t.flow.height != h || t.mask.width != w || t.mask.height != h {
        return Err(Error::Shape("flow or mask does not match the frames".into()));
    }
    let count = t.mask.count();
    if count == 0 {
        return Err(Error::EmptyMask("photometric image term"));
    }
    let n = count as f64;
    let mut terms = Vec::with_capacity(count);
    let mut grad = vec![0.0; 2 * w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if t.mask.data[i] == 0 {
                continue;
            }
            let (du, dv) = t.flow.get(x, y);
            let (warped, gx, gy) =
                bilinear_with_grad(&t.frame_t2.data, w, h, x as f64 + du, y as f64 + dv).unwrap_or((0.0, 0.0, 0.0));
            let r = t.frame_t.data[i] - warped;
            terms.push(psi(r));
            let g = psi_prime(r) / n;
            grad[2 * i] = -g * gx;
            grad[2 * i + 1] = -g * gy;
        }
    }
    Ok((pairwise_sum(&terms) / n, grad))
}

/// Residual of one sample: `p + f - nn_{t2}(p + f)`.
pub fn point_residual(p: &[f64; 3], f: &[f64; 3], cloud_t2: &PointGrid) -> Option<[f64; 3]> {
    let q = [p[0] + f[0], p[1] + f[1], p[2] + f[2]];
    let (j, _) = cloud_t2.nearest(&q)?;
    let m = cloud_t2.points()[j];
    Some([q[0] - m[0], q[1] - m[1], q[2] - m[2]])
}

fn point_term(t: &PointTerm) -> Result<(f64, Vec<f64>)> {
    let n = t.points_t.len();
    if t.flow.len() != n || t.mask.len() != n {
        return Err(Error::Shape("scene flow or mask does not match the samples".into()));
    }
    if t.cloud_t2.is_empty() {
        return Err(Error::EmptyInput("second LiDAR cloud is empty"));
    }
    let count = t.mask.iter().filter(|&&m| m == 1).count();
    if count == 0 {
        return Err(Error::EmptyMask("photometric point term"));
    }
    let norm = count as f64;
    let mut terms = Vec::with_capacity(3 * count);
    let mut grad = vec![0.0; 3 * n];
    for i in 0..n {
        if t.mask[i] == 0 {
            continue;
        }
        let e = point_residual(&t.points_t[i], &t.flow.vectors[i], t.cloud_t2).expect("nonempty cloud");
        for c in 0..3 {
            terms.push(psi(e[c]));
            grad[3 * i + c] = psi_prime(e[c]) / norm;
        }
    }
    Ok((pairwise_sum(&terms) / norm, grad))
}

/// Masked mean Charbonnier penalty of the image residual `I_t - warp(I_t2, U)`
/// plus that of the point residual, each term optional but not both.
pub fn photometric_loss(image: Option<ImageTerm>, points: Option<PointTerm>) -> Result<PhotometricLoss> {
    if image.is_none() && points.is_none() {
        return Err(Error::EmptyInput("photometric loss needs an image or a point term"));
    }
    let (image_term, grad_flow_2d) = match image {
        Some(t) => image_term(&t)?,
        None => (0.0, Vec::new()),
    };
    let (point_term, grad_flow_3d) = match points {
        Some(t) => point_term(&t)?,
        None => (0.0, Vec::new()),
    };
    Ok(PhotometricLoss {
        value: image_term + point_term,
        image_term,
        point_term,
        grad_flow_2d,
        grad_flow_3d,
    })
}
