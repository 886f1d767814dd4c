//! Event-RGB fusion in the shared luminance space, plus the losses that
//! constrain it: the adversarial term over discriminator scores and the
//! spatiotemporal gradient-consistency term.

use serde::{Deserialize, Serialize};

use crate::data::{rgb_to_yuv, yuv_to_rgb, EventStream, FlowField2D, Image, Mask, Semantics};
use crate::error::{Error, Result};
use crate::loss::{l1_sign, LossValue};
use crate::numeric::{bilinear_with_grad, central_gradient, pairwise_sum};

/// Integrate `p * C` per pixel over `window` (the stream window if `None`).
pub fn accumulate_intensity(ev: &EventStream, threshold: f64, window: Option<(f64, f64)>) -> Result<Image> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::Config(format!("event threshold must be > 0, got {threshold}")));
    }
    let counts = ev.net_counts(window.unwrap_or(ev.window()));
    Ok(Image {
        width: ev.width(),
        height: ev.height(),
        channels: 1,
        semantics: Semantics::Intensity,
        data: counts.into_iter().map(|c| c as f64 * threshold).collect(),
    })
}

/// Global event / RGB weights of the luminance blend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub event: f64,
    pub rgb: f64,
}

impl FusionWeights {
    pub fn new(event: f64, rgb: f64) -> Result<Self> {
        let w = FusionWeights { event, rgb };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.event >= 0.0 && self.rgb >= 0.0 && self.event + self.rgb > 0.0;
        if !ok || !self.event.is_finite() || !self.rgb.is_finite() {
            return Err(Error::DegenerateWeights {
                event: self.event,
                rgb: self.rgb,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedLuma {
    /// Fused luminance clamped to `[0, 1]`.
    pub image: Image,
    /// The blend before clamping.
    pub blended: Vec<f64>,
    /// Pixels changed by the clamp.
    pub clamped: usize,
}

/// Weighted blend of RGB luminance and the event intensity frame,
/// `(w_rgb * Y + w_ev * X) / (w_rgb + w_ev)`, then clamped to `[0, 1]`.
pub fn fuse_luminance(luma: &Image, intensity: &Image, w: FusionWeights) -> Result<FusedLuma> {
    w.validate()?;
    luma.expect_semantics(Semantics::Luma)?;
    intensity.expect_semantics(Semantics::Intensity)?;
    luma.ensure_same_shape(intensity, "luma vs intensity")?;
    let total = w.rgb + w.event;
    let a = w.rgb / total;
    let b = w.event / total;
    let mut clamped = 0;
    let mut blended = Vec::with_capacity(luma.data.len());
    let mut data = Vec::with_capacity(luma.data.len());
    for (&y, &x) in luma.data.iter().zip(&intensity.data) {
        // The clamp to the input range only absorbs rounding in a + b != 1.
        let h = (a * y + b * x).clamp(y.min(x), y.max(x));
        blended.push(h);
        let c = h.clamp(0.0, 1.0);
        if c != h {
            clamped += 1;
        }
        data.push(c);
    }
    Ok(FusedLuma {
        image: Image {
            width: luma.width,
            height: luma.height,
            channels: 1,
            semantics: Semantics::Luma,
            data,
        },
        blended,
        clamped,
    })
}

/// Restore color from the original chroma planes.
pub fn recombine_color(fused_luma: &Image, u: &Image, v: &Image) -> Result<Image> {
    yuv_to_rgb(fused_luma, u, v)
}

/// Full luminance fusion of an RGB frame: split to YUV, blend Y with the
/// event frame, recombine. Returns the fused RGB frame and the luma result.
pub fn fuse_rgb(rgb: &Image, intensity: &Image, w: FusionWeights) -> Result<(Image, FusedLuma)> {
    let (y, u, v) = rgb_to_yuv(rgb)?;
    let fused = fuse_luminance(&y, intensity, w)?;
    let out = recombine_color(&fused.image, &u, &v)?;
    Ok((out, fused))
}

/// Mean of `ln(1 - D)` over the discriminator scores of both fused frames,
/// with the gradient with respect to every score (scores of `t` first).
pub fn adversarial_loss(scores_t: &[f64], scores_t2: &[f64]) -> Result<LossValue> {
    let count = scores_t.len() + scores_t2.len();
    if count == 0 {
        return Err(Error::EmptyInput("no discriminator scores"));
    }
    let all: Vec<f64> = scores_t.iter().chain(scores_t2).copied().collect();
    if let Some(bad) = all.iter().find(|&&d| !(d > 0.0 && d < 1.0)) {
        return Err(Error::Domain(format!("discriminator score {bad} not in (0, 1)")));
    }
    let n = count as f64;
    let terms: Vec<f64> = all.iter().map(|&d| (-d).ln_1p()).collect();
    let gradient = all.iter().map(|&d| -1.0 / ((1.0 - d) * n)).collect();
    Ok(LossValue {
        value: pairwise_sum(&terms) / n,
        gradient,
    })
}

/// Per-pixel residual of the linearized brightness-constancy model.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub map: Image,
    /// Cleared where `x + U(x)` falls outside the frame.
    pub in_bounds: Mask,
}

struct ResidualTerms {
    value: Vec<f64>,
    /// d residual / d(du, dv), interleaved.
    jacobian: Vec<f64>,
    in_bounds: Vec<u8>,
}

fn residual_terms(luma: &Image, events: &Image, flow: &FlowField2D) -> Result<ResidualTerms> {
    luma.ensure_same_shape(events, "luma vs event frame")?;
    if luma.width != flow.width || luma.height != flow.height {
        return Err(Error::Shape(format!(
            "image {}x{} vs flow {}x{}",
            luma.width, luma.height, flow.width, flow.height
        )));
    }
    let (w, h) = (luma.width, luma.height);
    let (gx, gy) = central_gradient(&luma.data, w, h);
    let n = w * h;
    let mut value = vec![0.0; n];
    let mut jacobian = vec![0.0; 2 * n];
    let mut in_bounds = vec![0u8; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (du, dv) = flow.get(x, y);
            let (warped, wdx, wdy) = match bilinear_with_grad(&events.data, w, h, x as f64 + du, y as f64 + dv) {
                Some(s) => {
                    in_bounds[i] = 1;
                    s
                }
                None => (0.0, 0.0, 0.0),
            };
            value[i] = warped + gx[i] * du + gy[i] * dv;
            jacobian[2 * i] = wdx + gx[i];
            jacobian[2 * i + 1] = wdy + gy[i];
        }
    }
    Ok(ResidualTerms {
        value,
        jacobian,
        in_bounds,
    })
}

/// `warp(E, U)(x) + grad I(x) . U(x)`: the event frame sampled bilinearly at
/// `x + U(x)` stands in for the temporal derivative.
pub fn spatiotemporal_residual(luma: &Image, events: &Image, flow: &FlowField2D) -> Result<Residual> {
    let t = residual_terms(luma, events, flow)?;
    Ok(Residual {
        map: Image {
            width: luma.width,
            height: luma.height,
            channels: 1,
            semantics: Semantics::Intensity,
            data: t.value,
        },
        in_bounds: Mask {
            width: luma.width,
            height: luma.height,
            data: t.in_bounds,
        },
    })
}

/// Masked mean absolute residual, differentiated with respect to the flow.
pub fn consistency_loss(luma: &Image, events: &Image, flow: &FlowField2D, mask: &Mask) -> Result<LossValue> {
    if mask.width != luma.width || mask.height != luma.height {
        return Err(Error::Shape("mask does not match image".into()));
    }
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyMask("consistency loss"));
    }
    let t = residual_terms(luma, events, flow)?;
    let norm = count as f64;
    let terms: Vec<f64> = t
        .value
        .iter()
        .zip(&mask.data)
        .map(|(r, &m)| if m == 1 { r.abs() } else { 0.0 })
        .collect();
    let mut gradient = vec![0.0; t.jacobian.len()];
    for (i, &m) in mask.data.iter().enumerate() {
        if m == 1 {
            let s = l1_sign(t.value[i]) / norm;
            gradient[2 * i] = s * t.jacobian[2 * i];
            gradient[2 * i + 1] = s * t.jacobian[2 * i + 1];
        }
    }
    Ok(LossValue {
        value: pairwise_sum(&terms) / norm,
        gradient,
    })
}

/// 1 where the flow is valid, `x + U(x)` stays inside the frame, and at least
/// one event fired at `x` during the stream window.
pub fn valid_mask(flow: &FlowField2D, ev: &EventStream) -> Result<Mask> {
    if flow.width != ev.width() || flow.height != ev.height() {
        return Err(Error::Shape("flow does not match event sensor".into()));
    }
    let active = ev.activity(ev.window());
    let (w, h) = (flow.width, flow.height);
    let mut data = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if flow.valid[i] == 0 || active[i] == 0 {
                continue;
            }
            let (du, dv) = flow.get(x, y);
            let (px, py) = (x as f64 + du, y as f64 + dv);
            if px >= 0.0 && py >= 0.0 && px <= (w - 1) as f64 && py <= (h - 1) as f64 {
                data[i] = 1;
            }
        }
    }
    Ok(Mask {
        width: w,
        height: h,
        data,
    })
}
