//! Synthetic scenes with exact ground truth.
//!
//! A textured plane, optionally behind a textured rectangle, translates
//! rigidly relative to a pinhole camera. Three frames are rendered at
//! `t - 1`, `t = 0` and `t2 = 1`; the first only feeds the event window
//! `[t - 1, t]`. Events come from the noise-free luma of consecutive frames,
//! `floor(|dI| / C)` of them per pixel, spread evenly over the window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::SceneConfig;
use crate::data::color::rgb_to_yuv_pixel;
use crate::data::{
    CameraIntrinsics, Event, EventStream, FlowField2D, FlowField3D, Image, Mask, PointCloud, Polarity, Semantics,
};
use crate::error::{Error, Result};

/// Timestamps of the hidden frame, frame `t` and frame `t2`.
pub const FRAME_TIMES: [f64; 3] = [-1.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Surface {
    Plane,
    Occluder,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    surface: Surface,
    point: [f64; 3],
    /// Coordinates in the surface's own frame, metres.
    material: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

#[derive(Debug, Clone)]
struct Texture {
    mean: f64,
    waves: Vec<Wave>,
    chroma: [Wave; 2],
}

impl Texture {
    /// Random sinusoid mix whose wavelengths, seen at `depth`, stay between
    /// `min_px` and `2 * min_px` pixels.
    fn random(rng: &mut ChaCha8Rng, mean: f64, focal: f64, depth: f64, min_px: f64) -> Self {
        let px_per_m = focal / depth;
        let mut wave = |amp: f64| {
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let lambda_px = rng.random_range(min_px..2.0 * min_px);
            let k = std::f64::consts::TAU / lambda_px * px_per_m;
            Wave {
                kx: k * theta.cos(),
                ky: k * theta.sin(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                amp,
            }
        };
        let waves = vec![wave(0.13), wave(0.12), wave(0.1)];
        let chroma = [wave(0.05), wave(0.05)];
        Texture { mean, waves, chroma }
    }

    fn eval(w: &Wave, m: (f64, f64)) -> f64 {
        w.amp * (w.kx * m.0 + w.ky * m.1 + w.phase).sin()
    }

    fn rgb(&self, m: (f64, f64)) -> [f64; 3] {
        let l = self.mean + self.waves.iter().map(|w| Self::eval(w, m)).sum::<f64>();
        let rgb = [
            l + Self::eval(&self.chroma[0], m),
            l,
            l + Self::eval(&self.chroma[1], m),
        ];
        rgb.map(|c| c.clamp(0.0, 1.0))
    }
}

/// Every product of the generator.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub camera: CameraIntrinsics,
    pub frame_t: Image,
    pub frame_t2: Image,
    /// Events over `[t - 1, t2]`.
    pub events: EventStream,
    pub t: f64,
    pub t2: f64,
    pub cloud_t: PointCloud,
    pub cloud_t2: PointCloud,
    /// Rows that carry LiDAR returns.
    pub beam_mask: Mask,
    pub gt_flow: FlowField2D,
    pub gt_flow_bwd: FlowField2D,
    /// 1 where the surface seen at `t` is still visible at `t2`.
    pub gt_occlusion: Mask,
    pub gt_depth_t: Image,
    pub gt_depth_t2: Image,
    /// Scene flow of every point of `cloud_t`.
    pub gt_scene_flow: FlowField3D,
    pub translation: [f64; 3],
}

struct Renderer<'a> {
    cfg: &'a SceneConfig,
    cam: CameraIntrinsics,
    plane: Texture,
    occluder: Texture,
    /// Occluder footprint at `t`, metres: `[x0, y0, x1, y1]`.
    rect: [f64; 4],
}

impl Renderer<'_> {
    fn offset(&self, k: f64) -> [f64; 3] {
        self.cfg.translation.map(|s| s * k)
    }

    /// First surface along the ray through `(u, v)` with the scene displaced
    /// `k` frame intervals from `t`.
    fn hit(&self, u: f64, v: f64, k: f64) -> Hit {
        let o = self.offset(k);
        let (rx, ry) = ((u - self.cam.cx) / self.cam.f, (v - self.cam.cy) / self.cam.f);
        if self.cfg.occluder {
            let z = self.cfg.occluder_depth + o[2];
            let (x, y) = (rx * z, ry * z);
            let (mx, my) = (x - o[0], y - o[1]);
            if z > 0.0 && mx >= self.rect[0] && mx < self.rect[2] && my >= self.rect[1] && my < self.rect[3] {
                return Hit {
                    surface: Surface::Occluder,
                    point: [x, y, z],
                    material: (mx, my),
                };
            }
        }
        let tilt = self.cfg.plane_tilt;
        let z = (self.cfg.plane_depth + o[2] - tilt * o[1]) / (1.0 - tilt * ry);
        let (x, y) = (rx * z, ry * z);
        Hit {
            surface: Surface::Plane,
            point: [x, y, z],
            material: (x - o[0], y - o[1]),
        }
    }

    fn shade(&self, h: &Hit) -> [f64; 3] {
        match h.surface {
            Surface::Plane => self.plane.rgb(h.material),
            Surface::Occluder => self.occluder.rgb(h.material),
        }
    }

    fn render(&self, k: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (w, h) = (self.cam.width, self.cam.height);
        let mut rgb = Vec::with_capacity(3 * w * h);
        let mut luma = Vec::with_capacity(w * h);
        let mut depth = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let hit = self.hit(x as f64, y as f64, k);
                let c = self.shade(&hit);
                rgb.extend_from_slice(&c);
                luma.push(rgb_to_yuv_pixel(c[0], c[1], c[2]).0);
                depth.push(hit.point[2]);
            }
        }
        (rgb, luma, depth)
    }

    /// Flow of every pixel when the scene moves by `dk` intervals from frame
    /// `k`, valid where the target stays inside the frame, and whether the
    /// same surface point is visible there.
    fn flow(&self, k: f64, dk: f64) -> (FlowField2D, Mask) {
        let (w, h) = (self.cam.width, self.cam.height);
        let s = self.cfg.translation.map(|c| c * dk);
        let mut flow = FlowField2D::empty(w, h);
        let mut vis = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let hit = self.hit(x as f64, y as f64, k);
                let p = hit.point;
                let q = [p[0] + s[0], p[1] + s[1], p[2] + s[2]];
                let Some((u, v)) = self.cam.project(q) else { continue };
                let inside = u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64;
                if inside {
                    flow.set(x, y, u - x as f64, v - y as f64);
                    let there = self.hit(u, v, k + dk);
                    if there.surface == hit.surface && (there.point[2] - q[2]).abs() <= 1e-9 * q[2] {
                        vis[y * w + x] = 1;
                    }
                }
            }
        }
        (
            flow,
            Mask {
                width: w,
                height: h,
                data: vis,
            },
        )
    }
}

fn event_burst(x: usize, y: usize, delta: f64, c: f64, window: (f64, f64), out: &mut Vec<Event>) {
    let n = (delta.abs() / c).floor() as usize;
    let p = if delta > 0.0 {
        Polarity::Positive
    } else {
        Polarity::Negative
    };
    for j in 0..n {
        let t = window.0 + (j + 1) as f64 / (n + 1) as f64 * (window.1 - window.0);
        out.push(Event {
            x: x as u32,
            y: y as u32,
            t,
            p,
        });
    }
}

fn beam_rows(cfg: &SceneConfig) -> Vec<usize> {
    let first = (cfg.sparse_top * cfg.height as f64).ceil() as usize;
    (0..cfg.height)
        .step_by(cfg.beam_stride)
        .filter(|&v| v >= first)
        .collect()
}

fn lidar(cam: &CameraIntrinsics, depth: &[f64], rows: &[usize]) -> Result<PointCloud> {
    let mut pts = Vec::with_capacity(rows.len() * cam.width);
    for &v in rows {
        for u in 0..cam.width {
            pts.push(cam.backproject(u as f64, v as f64, depth[v * cam.width + u]));
        }
    }
    PointCloud::new(pts)
}

fn degrade(rgb: &[f64], cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !cfg.low_light {
        return Ok(rgb.to_vec());
    }
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok(rgb
        .iter()
        .map(|&c| (cfg.gamma * c + noise.sample(rng)).clamp(0.0, 1.0))
        .collect())
}

/// Render a scene and its ground truth. The same `(cfg, seed, threshold)`
/// always yields the same scene.
pub fn generate_synthetic(cfg: &SceneConfig, seed: u64, threshold: f64) -> Result<SyntheticScene> {
    cfg.validate()?;
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::Config(format!("event threshold must be > 0, got {threshold}")));
    }
    let (w, h) = (cfg.width, cfg.height);
    let cam = CameraIntrinsics::new(cfg.focal, w as f64 / 2.0, h as f64 / 2.0, w, h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = Texture::random(&mut rng, 0.5, cfg.focal, cfg.plane_depth, 14.0);
    let occluder = Texture::random(&mut rng, 0.38, cfg.focal, cfg.occluder_depth, 12.0);
    let zq = cfg.occluder_depth;
    let r = cfg.occluder_rect;
    let rect = [
        (r[0] - cam.cx) * zq / cam.f,
        (r[1] - cam.cy) * zq / cam.f,
        (r[2] - cam.cx) * zq / cam.f,
        (r[3] - cam.cy) * zq / cam.f,
    ];
    let ren = Renderer {
        cfg,
        cam,
        plane,
        occluder,
        rect,
    };

    let frames: Vec<_> = FRAME_TIMES.iter().map(|&k| ren.render(k)).collect();
    let mut events = Vec::new();
    for (pair, window) in [
        (0, (FRAME_TIMES[0], FRAME_TIMES[1])),
        (1, (FRAME_TIMES[1], FRAME_TIMES[2])),
    ] {
        let (a, b) = (&frames[pair].1, &frames[pair + 1].1);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                event_burst(x, y, b[i] - a[i], threshold, window, &mut events);
            }
        }
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    let events = EventStream::new(w, h, (FRAME_TIMES[0], FRAME_TIMES[2]), events)?;

    let rows = beam_rows(cfg);
    let cloud_t = lidar(&cam, &frames[1].2, &rows)?;
    let cloud_t2 = lidar(&cam, &frames[2].2, &rows)?;
    let mut beam = vec![0u8; w * h];
    for &v in &rows {
        beam[v * w..(v + 1) * w].fill(1);
    }

    let (gt_flow, gt_occlusion) = ren.flow(0.0, 1.0);
    let (gt_flow_bwd, _) = ren.flow(1.0, -1.0);
    let gt_depth_t = Image::new(w, h, 1, Semantics::Depth, frames[1].2.clone())?;
    let gt_depth_t2 = Image::new(w, h, 1, Semantics::Depth, frames[2].2.clone())?;
    self_check(&cam, &gt_depth_t, &gt_flow, cfg.translation)?;

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let frame_t = Image::new(w, h, 3, Semantics::Rgb, degrade(&frames[1].0, cfg, &mut noise_rng)?)?;
    let frame_t2 = Image::new(w, h, 3, Semantics::Rgb, degrade(&frames[2].0, cfg, &mut noise_rng)?)?;
    let gt_scene_flow = FlowField3D::new(vec![cfg.translation; cloud_t.len()], vec![1; cloud_t.len()])?;

    Ok(SyntheticScene {
        camera: cam,
        frame_t,
        frame_t2,
        events,
        t: FRAME_TIMES[1],
        t2: FRAME_TIMES[2],
        cloud_t,
        cloud_t2,
        beam_mask: Mask {
            width: w,
            height: h,
            data: beam,
        },
        gt_flow,
        gt_flow_bwd,
        gt_occlusion,
        gt_depth_t,
        gt_depth_t2,
        gt_scene_flow,
        translation: cfg.translation,
    })
}

/// Every pixel's ground-truth flow must equal the projection of its
/// back-projected depth moved by the rigid translation.
fn self_check(cam: &CameraIntrinsics, depth: &Image, flow: &FlowField2D, s: [f64; 3]) -> Result<()> {
    for y in 0..depth.height {
        for x in 0..depth.width {
            let p = cam.backproject(x as f64, y as f64, depth.at(x, y));
            if !flow.is_valid(x, y) {
                continue;
            }
            let Some((u, v)) = cam.project([p[0] + s[0], p[1] + s[1], p[2] + s[2]]) else {
                return Err(Error::Domain(format!(
                    "generator self-check failed at ({x}, {y}): point behind camera"
                )));
            };
            let (du, dv) = flow.get(x, y);
            let err = ((u - x as f64 - du).powi(2) + (v - y as f64 - dv).powi(2)).sqrt();
            if err > 1e-9 * (1.0 + du.abs() + dv.abs()) {
                return Err(Error::Domain(format!(
                    "generator self-check failed at ({x}, {y}): flow off by {err}"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SceneConfig {
        SceneConfig {
            width: 48,
            height: 40,
            occluder_rect: [14.0, 12.0, 30.0, 28.0],
            ..SceneConfig::default()
        }
    }

    #[test]
    fn fronto_parallel_flow_is_f_s_over_z() {
        let s = generate_synthetic(&small(), 3, 0.1).unwrap();
        let (w, h) = (48, 40);
        for y in 0..h {
            for x in 0..w {
                let z = s.gt_depth_t.at(x, y);
                let (du, dv) = s.gt_flow.get(x, y);
                if !s.gt_flow.is_valid(x, y) {
                    assert!(x as f64 + 100.0 * 0.2 / z > 47.0);
                    continue;
                }
                assert!((du - 100.0 * 0.2 / z).abs() < 1e-9);
                assert!(dv.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn occluder_hides_plane_pixels() {
        let s = generate_synthetic(&small(), 3, 0.1).unwrap();
        // Plane pixels just right of the quad slide under it.
        let hidden = (0..40)
            .flat_map(|y| (30..34).map(move |x| (x, y)))
            .filter(|&(x, y)| !s.gt_occlusion.get(x, y))
            .count();
        assert!(hidden > 0);
        assert!(s.gt_occlusion.count() > 40 * 48 / 2);
    }

    #[test]
    fn lidar_follows_beam_rows() {
        let cfg = SceneConfig {
            sparse_top: 0.25,
            ..small()
        };
        let s = generate_synthetic(&cfg, 1, 0.1).unwrap();
        let rows = beam_rows(&cfg);
        assert_eq!(rows.first(), Some(&12));
        assert_eq!(s.cloud_t.len(), rows.len() * 48);
        for &v in &rows {
            assert!(s.beam_mask.get(0, v));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SceneConfig {
            low_light: true,
            ..small()
        };
        let a = generate_synthetic(&cfg, 9, 0.1).unwrap();
        let b = generate_synthetic(&cfg, 9, 0.1).unwrap();
        assert_eq!(a.frame_t, b.frame_t);
        assert_eq!(a.events, b.events);
        assert_eq!(a.cloud_t2, b.cloud_t2);
    }

    #[test]
    fn static_scene_has_no_events() {
        let cfg = SceneConfig {
            translation: [0.0; 3],
            ..small()
        };
        let s = generate_synthetic(&cfg, 2, 0.1).unwrap();
        assert!(s.events.is_empty());
        assert_eq!(s.frame_t, s.frame_t2);
    }
}
