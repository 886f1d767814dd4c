use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureMap, Modality};
use crate::data::{CameraIntrinsics, FlowField2D, PointCloud};
use crate::error::{Error, Result};
use crate::numeric::bilinear_all;
use crate::spatial::PointGrid;

/// Score of a lookup that fell outside the frame or found no neighbor.
pub const SENTINEL: f64 = -1e9;

#[inline]
pub fn is_sentinel(v: f64) -> bool {
    v <= SENTINEL * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// How the full displacement window is reduced to per-axis profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    /// Slice through zero displacement on the other axes.
    #[default]
    ZeroSlice,
    /// Best score over the displacements on the other axes.
    MaxMarginal,
}

/// Sampled LiDAR points and their image coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub indices: Vec<usize>,
    pub uv: Vec<(f64, f64)>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Pixel anchors (rounded image coordinates).
    pub fn anchors(&self) -> Vec<(usize, usize)> {
        self.uv
            .iter()
            .map(|&(u, v)| (u.round() as usize, v.round() as usize))
            .collect()
    }
}

/// Uniformly sample `n` projectable points without replacement. With fewer
/// candidates than `n`, every candidate is taken once.
pub fn sample_points(pc: &PointCloud, n: usize, cam: &CameraIntrinsics, seed: u64) -> Result<SampleSet> {
    let candidates: Vec<(usize, (f64, f64))> = pc
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (u, v) = cam.project(*p)?;
            cam.pixel_of(u, v)?;
            cam.contains(u, v).then_some((i, (u, v)))
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no projectable LiDAR points to sample"));
    }
    if n == 0 {
        return Err(Error::Config("sample count must be >= 1".into()));
    }
    let chosen: Vec<usize> = if n >= candidates.len() {
        (0..candidates.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, candidates.len(), n).into_vec();
        picked.sort_unstable();
        picked
    };
    Ok(SampleSet {
        indices: chosen.iter().map(|&c| candidates[c].0).collect(),
        uv: chosen.iter().map(|&c| candidates[c].1).collect(),
    })
}

/// Per-sample matching profiles along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVolume {
    pub modality: Modality,
    pub axis: Axis,
    /// Temporal slice for event volumes.
    pub slice: Option<usize>,
    pub radius: usize,
    /// `samples x (2r+1)` scores, row-major.
    pub scores: Vec<f64>,
}

impl CorrelationVolume {
    pub fn new(modality: Modality, axis: Axis, slice: Option<usize>, radius: usize, scores: Vec<f64>) -> Result<Self> {
        let len = 2 * radius + 1;
        if !scores.len().is_multiple_of(len) {
            return Err(Error::Shape(format!(
                "{} scores do not split into profiles of length {len}",
                scores.len()
            )));
        }
        if scores.iter().any(|v| v.is_nan()) {
            return Err(Error::Format("correlation scores contain NaN".into()));
        }
        Ok(CorrelationVolume {
            modality,
            axis,
            slice,
            radius,
            scores,
        })
    }

    pub fn profile_len(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn samples(&self) -> usize {
        self.scores.len() / self.profile_len()
    }

    pub fn profile(&self, i: usize) -> &[f64] {
        let l = self.profile_len();
        &self.scores[i * l..(i + 1) * l]
    }

    /// A profile with at least one non-sentinel score.
    pub fn is_valid(&self, i: usize) -> bool {
        self.profile(i).iter().any(|&v| !is_sentinel(v))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn reduce_profiles(window: &[f64], r: usize, mode: ProfileMode) -> (Vec<f64>, Vec<f64>) {
    let n = 2 * r + 1;
    let at = |dy: usize, dx: usize| window[dy * n + dx];
    let best =
        |vals: &mut dyn Iterator<Item = f64>| -> f64 { vals.filter(|v| !is_sentinel(*v)).fold(SENTINEL, f64::max) };
    match mode {
        ProfileMode::ZeroSlice => (
            (0..n).map(|dx| at(r, dx)).collect(),
            (0..n).map(|dy| at(dy, r)).collect(),
        ),
        ProfileMode::MaxMarginal => (
            (0..n).map(|dx| best(&mut (0..n).map(|dy| at(dy, dx)))).collect(),
            (0..n).map(|dy| best(&mut (0..n).map(|dx| at(dy, dx)))).collect(),
        ),
    }
}

/// Image correlation around each anchor pixel:
/// `cv(x, d) = <F1(x), F2(x + d + U(x + d))> / sqrt(C)` with bilinear lookups
/// in `F2`, reduced to `x` and `y` profiles.
pub fn build_correlation_2d(
    f1: &FeatureMap,
    f2: &FeatureMap,
    anchors: &[(usize, usize)],
    u_init: Option<&FlowField2D>,
    radius: usize,
    mode: ProfileMode,
    slice: Option<usize>,
) -> Result<(CorrelationVolume, CorrelationVolume)> {
    if f1.width != f2.width || f1.height != f2.height || f1.channels != f2.channels {
        return Err(Error::Shape("feature maps differ in shape".into()));
    }
    if radius == 0 {
        return Err(Error::Config("correlation radius must be >= 1".into()));
    }
    if let Some(u) = u_init {
        if u.width != f1.width || u.height != f1.height {
            return Err(Error::Shape("initial flow does not match feature map".into()));
        }
    }
    let (w, h, c) = (f1.width, f1.height, f1.channels);
    let n = 2 * radius + 1;
    let scale = 1.0 / (c as f64).sqrt();
    let mut xs = Vec::with_capacity(anchors.len() * n);
    let mut ys = Vec::with_capacity(anchors.len() * n);
    let mut window = vec![SENTINEL; n * n];
    let mut sampled = vec![0.0; c];
    for &(ax, ay) in anchors {
        if ax >= w || ay >= h {
            return Err(Error::Shape(format!("anchor ({ax}, {ay}) outside {w}x{h}")));
        }
        let feat1 = f1.at(ay * w + ax);
        for (j, dy) in (-(radius as i64)..=radius as i64).enumerate() {
            for (i, dx) in (-(radius as i64)..=radius as i64).enumerate() {
                let (tx, ty) = (ax as i64 + dx, ay as i64 + dy);
                let mut score = SENTINEL;
                if tx >= 0 && ty >= 0 && (tx as usize) < w && (ty as usize) < h {
                    let (ux, uy) = u_init.map_or((0.0, 0.0), |u| u.get(tx as usize, ty as usize));
                    let (sx, sy) = (tx as f64 + ux, ty as f64 + uy);
                    if bilinear_all(&f2.data, w, h, c, sx, sy, &mut sampled) {
                        score = dot(feat1, &sampled) * scale;
                    }
                }
                window[j * n + i] = score;
            }
        }
        let (px, py) = reduce_profiles(&window, radius, mode);
        xs.extend(px);
        ys.extend(py);
    }
    Ok((
        CorrelationVolume::new(f1.modality, Axis::X, slice, radius, xs)?,
        CorrelationVolume::new(f1.modality, Axis::Y, slice, radius, ys)?,
    ))
}

/// Quantized displacements in metres, shared by the three axes. Each sample
/// gets its own step so that one index step matches one image pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisOffsets {
    pub radius: usize,
    /// Metres per index step, one per sample.
    pub step: Vec<f64>,
}

impl AxisOffsets {
    /// The same step for every sample.
    pub fn uniform(radius: usize, step: f64, samples: usize) -> Self {
        AxisOffsets {
            radius,
            step: vec![step; samples],
        }
    }

    /// One image pixel at each sample's depth: `z / f`.
    pub fn pixel_matched(radius: usize, cloud: &PointCloud, samples: &SampleSet, f: f64) -> Self {
        AxisOffsets {
            radius,
            step: samples.indices.iter().map(|&i| cloud.points[i][2] / f).collect(),
        }
    }

    pub fn offset(&self, sample: usize, k: usize) -> f64 {
        (k as f64 - self.radius as f64) * self.step[sample]
    }
}

/// LiDAR correlation: `<feat1(p), feat2(nn(p + delta))> / sqrt(C)` over the
/// quantized displacement grid; a neighbor farther than `rho_max` from the
/// displaced point scores the sentinel.
#[allow(clippy::too_many_arguments)]
pub fn build_correlation_3d(
    cloud1: &PointCloud,
    feat1: &FeatureMap,
    grid2: &PointGrid,
    feat2: &FeatureMap,
    samples: &SampleSet,
    offsets: &AxisOffsets,
    rho_max: f64,
    mode: ProfileMode,
) -> Result<[CorrelationVolume; 3]> {
    if grid2.is_empty() {
        return Err(Error::EmptyInput("second LiDAR cloud is empty"));
    }
    if feat1.len() != cloud1.len() || feat2.len() != grid2.len() || feat1.channels != feat2.channels {
        return Err(Error::Shape("LiDAR features do not match their clouds".into()));
    }
    if offsets.step.len() != samples.len() {
        return Err(Error::Shape("one offset step per sample required".into()));
    }
    let r = offsets.radius;
    if r == 0 {
        return Err(Error::Config("correlation radius must be >= 1".into()));
    }
    let n = 2 * r + 1;
    let scale = 1.0 / (feat1.channels as f64).sqrt();
    let mut out: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let score = |p: &[f64; 3], f: &[f64], d: [f64; 3]| -> f64 {
        let q = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
        match grid2.nearest(&q) {
            Some((j, dist)) if dist <= rho_max => dot(f, feat2.at(j)) * scale,
            _ => SENTINEL,
        }
    };
    for (s, &pi) in samples.indices.iter().enumerate() {
        let p = cloud1.points[pi];
        let f = feat1.at(pi);
        match mode {
            ProfileMode::ZeroSlice => {
                for (a, prof) in out.iter_mut().enumerate() {
                    for k in 0..n {
                        let mut d = [0.0; 3];
                        d[a] = offsets.offset(s, k);
                        prof.push(score(&p, f, d));
                    }
                }
            }
            ProfileMode::MaxMarginal => {
                let mut cube = vec![SENTINEL; n * n * n];
                for kz in 0..n {
                    for ky in 0..n {
                        for kx in 0..n {
                            let d = [offsets.offset(s, kx), offsets.offset(s, ky), offsets.offset(s, kz)];
                            cube[(kz * n + ky) * n + kx] = score(&p, f, d);
                        }
                    }
                }
                for (a, prof) in out.iter_mut().enumerate() {
                    for k in 0..n {
                        let mut best = SENTINEL;
                        for i in 0..n {
                            for j in 0..n {
                                let (kx, ky, kz) = match a {
                                    0 => (k, i, j),
                                    1 => (i, k, j),
                                    _ => (i, j, k),
                                };
                                let v = cube[(kz * n + ky) * n + kx];
                                if !is_sentinel(v) && v > best {
                                    best = v;
                                }
                            }
                        }
                        prof.push(best);
                    }
                }
            }
        }
    }
    let [x, y, z] = out;
    Ok([
        CorrelationVolume::new(Modality::Lidar, Axis::X, None, r, x)?,
        CorrelationVolume::new(Modality::Lidar, Axis::Y, None, r, y)?,
        CorrelationVolume::new(Modality::Lidar, Axis::Z, None, r, z)?,
    ])
}

/// Fused per-axis profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedCorrelation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub radius: usize,
}

impl FusedCorrelation {
    pub fn samples(&self) -> usize {
        self.x.len() / (2 * self.radius + 1)
    }

    pub fn profile(&self, axis: Axis, i: usize) -> &[f64] {
        let l = 2 * self.radius + 1;
        let v = match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        };
        &v[i * l..(i + 1) * l]
    }
}

fn same_layout(a: &CorrelationVolume, b: &CorrelationVolume) -> Result<()> {
    if a.radius != b.radius || a.scores.len() != b.scores.len() {
        return Err(Error::Shape(format!(
            "{} {} and {} {} profiles differ in layout",
            a.modality.name(),
            a.axis.name(),
            b.modality.name(),
            b.axis.name()
        )));
    }
    Ok(())
}

/// Average of the RGB, event and LiDAR scores over `T` event slices:
/// `corr = (1/T) sum_i (cv_r + cv_e[i] + cv_l) / 3` for `x` and `y`; the LiDAR
/// `z` profile passes through. A sentinel in any term yields a sentinel.
pub fn fuse_correlation(
    rgb: [&CorrelationVolume; 2],
    events: &[[&CorrelationVolume; 2]],
    lidar: [&CorrelationVolume; 3],
) -> Result<FusedCorrelation> {
    if events.is_empty() {
        return Err(Error::Config("at least one event slice required".into()));
    }
    let mut fused = [Vec::new(), Vec::new()];
    for a in 0..2 {
        same_layout(rgb[a], lidar[a])?;
        for e in events {
            same_layout(rgb[a], e[a])?;
        }
        let t = events.len() as f64;
        fused[a] = (0..rgb[a].scores.len())
            .map(|k| {
                let r = rgb[a].scores[k];
                let l = lidar[a].scores[k];
                if is_sentinel(r) || is_sentinel(l) || events.iter().any(|e| is_sentinel(e[a].scores[k])) {
                    return SENTINEL;
                }
                let mut acc = 0.0;
                for e in events {
                    acc += (r + e[a].scores[k] + l) / 3.0;
                }
                acc / t
            })
            .collect();
    }
    if lidar[2].radius != rgb[0].radius || lidar[2].scores.len() != rgb[0].scores.len() {
        return Err(Error::Shape("LiDAR z profiles differ in layout".into()));
    }
    let [x, y] = fused;
    Ok(FusedCorrelation {
        x,
        y,
        z: lidar[2].scores.clone(),
        radius: rgb[0].radius,
    })
}

/// Debug dump: a header line followed by one row of f32 scores per sample.
pub fn format_correlation(cv: &CorrelationVolume) -> String {
    let mut s = format!(
        "# correlation n={} r={} axis={} modality={}",
        cv.samples(),
        cv.radius,
        cv.axis.name(),
        cv.modality.name()
    );
    if let Some(i) = cv.slice {
        let _ = write!(s, " slice={i}");
    }
    s.push('\n');
    for i in 0..cv.samples() {
        let row: Vec<String> = cv.profile(i).iter().map(|v| format!("{:?}", *v as f32)).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}
