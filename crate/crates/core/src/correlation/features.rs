use serde::{Deserialize, Serialize};

use crate::data::{Image, PointCloud};
use crate::error::{Error, Result};
use crate::numeric::{central_gradient, pairwise_sum};
use crate::spatial::PointGrid;

/// Standard-deviation floor used when standardizing feature channels.
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Vectors shorter than this are treated as zero rather than normalized.
const NORM_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Rgb,
    EventSlice,
    Lidar,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::EventSlice => "event",
            Modality::Lidar => "lidar",
        }
    }
}

/// Hand-crafted feature encoder settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    /// Neighborhood radius in metres for the LiDAR density channel.
    pub density_radius: f64,
    /// Scale every feature vector to unit length after standardization.
    pub unit_normalize: bool,
    /// Half-width of the zero-mean intensity patch used for images; 0 selects
    /// the pointwise `[I, |gx|, |gy|, 3x3 mean]` descriptor.
    #[serde(default)]
    pub patch_radius: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            density_radius: 0.3,
            unit_normalize: false,
            patch_radius: 0,
        }
    }
}

/// Per-pixel (or per-point, with `height == 1`) feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub modality: Modality,
    pub data: Vec<f64>,
}

impl FeatureMap {
    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One channel as a dense plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

fn standardize(planes: &mut [Vec<f64>]) {
    for plane in planes.iter_mut() {
        let n = plane.len() as f64;
        if plane.is_empty() {
            continue;
        }
        let mean = pairwise_sum(plane) / n;
        let sq: Vec<f64> = plane.iter().map(|v| (v - mean) * (v - mean)).collect();
        let sigma = (pairwise_sum(&sq) / n).sqrt().max(SIGMA_FLOOR);
        for v in plane.iter_mut() {
            *v = (*v - mean) / sigma;
        }
    }
}

fn interleave(planes: &[Vec<f64>], unit: bool) -> Vec<f64> {
    let n = planes.first().map_or(0, Vec::len);
    let c = planes.len();
    let mut data = Vec::with_capacity(n * c);
    for i in 0..n {
        let start = data.len();
        data.extend(planes.iter().map(|p| p[i]));
        if unit {
            let norm = data[start..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > NORM_FLOOR {
                data[start..].iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    debug_assert_eq!(data.len(), n * c);
    data
}

fn box_mean3(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    s += data[yy * w + xx];
                }
            }
            out[y * w + x] = s / 9.0;
        }
    }
    out
}

/// Zero-mean `(2r+1)^2` patch around every pixel, borders replicated.
fn patch_planes(data: &[f64], w: usize, h: usize, r: usize) -> Vec<Vec<f64>> {
    let r = r as i64;
    let at = |x: i64, y: i64| data[y.clamp(0, h as i64 - 1) as usize * w + x.clamp(0, w as i64 - 1) as usize];
    let mut planes = vec![Vec::with_capacity(w * h); ((2 * r + 1) * (2 * r + 1)) as usize];
    let mut patch = Vec::with_capacity(planes.len());
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            patch.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    patch.push(at(x + dx, y + dy));
                }
            }
            let mean = pairwise_sum(&patch) / patch.len() as f64;
            for (plane, v) in planes.iter_mut().zip(&patch) {
                plane.push(v - mean);
            }
        }
    }
    planes
}

/// Per-pixel descriptor of a single-channel frame. With `patch_radius > 0`
/// it is the zero-mean intensity patch, so that unit-normalized vectors
/// correlate as normalized cross-correlation. Otherwise it is
/// `[intensity, |d/dx|, |d/dy|, 3x3 mean]`, each channel standardized over
/// the frame.
pub fn encode_image(img: &Image, modality: Modality, spec: &EncoderSpec) -> Result<FeatureMap> {
    if img.channels != 1 {
        return Err(Error::Shape(format!(
            "feature encoder expects one channel, got {}",
            img.channels
        )));
    }
    let (w, h) = (img.width, img.height);
    if spec.patch_radius > 0 {
        let planes = patch_planes(&img.data, w, h, spec.patch_radius);
        return Ok(FeatureMap {
            width: w,
            height: h,
            channels: planes.len(),
            modality,
            data: interleave(&planes, spec.unit_normalize),
        });
    }
    let (gx, gy) = central_gradient(&img.data, w, h);
    let mut planes = vec![
        img.data.clone(),
        gx.into_iter().map(f64::abs).collect(),
        gy.into_iter().map(f64::abs).collect(),
        box_mean3(&img.data, w, h),
    ];
    standardize(&mut planes);
    Ok(FeatureMap {
        width: w,
        height: h,
        channels: 4,
        modality,
        data: interleave(&planes, spec.unit_normalize),
    })
}

/// `[x, y, z, density]` per point, density counting points within
/// `spec.density_radius`; standardized per cloud.
pub fn encode_cloud(pc: &PointCloud, spec: &EncoderSpec) -> Result<FeatureMap> {
    if !(spec.density_radius > 0.0) {
        return Err(Error::Config("density radius must be > 0".into()));
    }
    let grid = PointGrid::new(&pc.points, spec.density_radius);
    encode_cloud_with(&grid, spec)
}

pub(crate) fn encode_cloud_with(grid: &PointGrid, spec: &EncoderSpec) -> Result<FeatureMap> {
    let pts = grid.points();
    let mut planes: Vec<Vec<f64>> = (0..3).map(|a| pts.iter().map(|p| p[a]).collect()).collect();
    planes.push(
        pts.iter()
            .map(|p| grid.count_within(p, spec.density_radius) as f64)
            .collect(),
    );
    standardize(&mut planes);
    Ok(FeatureMap {
        width: pts.len(),
        height: 1,
        channels: 4,
        modality: Modality::Lidar,
        data: interleave(&planes, spec.unit_normalize),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Semantics;

    #[test]
    fn constant_image_has_zero_gradient_channels() {
        let img = Image::filled(6, 5, Semantics::Luma, 0.4);
        let f = encode_image(&img, Modality::Rgb, &EncoderSpec::default()).unwrap();
        assert!(f.plane(1).iter().all(|&v| v == 0.0));
        assert!(f.plane(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoding_is_deterministic() {
        let img = Image::new(3, 2, 1, Semantics::Luma, vec![0.1, 0.5, 0.2, 0.9, 0.3, 0.7]).unwrap();
        let a = encode_image(&img, Modality::Rgb, &EncoderSpec::default()).unwrap();
        let b = encode_image(&img, Modality::Rgb, &EncoderSpec::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkerboard_gradients_peak_on_edges() {
        let (w, h, s) = (16, 16, 4);
        let data: Vec<f64> = (0..w * h)
            .map(|i| if ((i % w) / s + (i / w) / s) % 2 == 0 { 1.0 } else { 0.0 })
            .collect();
        let img = Image::new(w, h, 1, Semantics::Luma, data.clone()).unwrap();
        let f = encode_image(&img, Modality::Rgb, &EncoderSpec::default()).unwrap();
        let gx = f.plane(1);
        let max = gx.iter().cloned().fold(f64::MIN, f64::max);
        for y in 0..h {
            for x in 0..w {
                // Direct oracle: a horizontal edge lies between x and a neighbor.
                let l = data[y * w + x.saturating_sub(1)];
                let r = data[y * w + (x + 1).min(w - 1)];
                let on_edge = l != r;
                assert_eq!(gx[y * w + x] == max, on_edge, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn unit_normalized_vectors_have_unit_length() {
        let img = Image::new(3, 2, 1, Semantics::Luma, vec![0.1, 0.5, 0.2, 0.9, 0.3, 0.7]).unwrap();
        let spec = EncoderSpec {
            unit_normalize: true,
            ..EncoderSpec::default()
        };
        let f = encode_image(&img, Modality::Rgb, &spec).unwrap();
        for i in 0..f.len() {
            let n: f64 = f.at(i).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn patch_descriptor_of_constant_image_is_zero() {
        let img = Image::filled(7, 6, Semantics::Luma, 0.4);
        let spec = EncoderSpec {
            patch_radius: 1,
            unit_normalize: true,
            ..EncoderSpec::default()
        };
        let f = encode_image(&img, Modality::Rgb, &spec).unwrap();
        assert_eq!(f.channels, 9);
        assert!(f.data.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn patch_descriptor_matches_direct_ncc() {
        let (w, h) = (9, 8);
        let data: Vec<f64> = (0..w * h).map(|i| ((i * 37 % 11) as f64) / 11.0).collect();
        let img = Image::new(w, h, 1, Semantics::Luma, data.clone()).unwrap();
        let spec = EncoderSpec {
            patch_radius: 1,
            unit_normalize: true,
            ..EncoderSpec::default()
        };
        let f = encode_image(&img, Modality::Rgb, &spec).unwrap();
        let patch = |x: usize, y: usize| -> Vec<f64> {
            let mut p = Vec::new();
            for yy in y - 1..=y + 1 {
                for xx in x - 1..=x + 1 {
                    p.push(data[yy * w + xx]);
                }
            }
            let m = p.iter().sum::<f64>() / 9.0;
            p.iter().map(|v| v - m).collect()
        };
        let (a, b) = (patch(3, 3), patch(5, 4));
        let ncc = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
            / (a.iter().map(|v| v * v).sum::<f64>().sqrt() * b.iter().map(|v| v * v).sum::<f64>().sqrt());
        let dot: f64 = f.at(3 * w + 3).iter().zip(f.at(4 * w + 5)).map(|(x, y)| x * y).sum();
        assert!((dot - ncc).abs() < 1e-12);
    }

    #[test]
    fn cloud_features_are_translation_invariant() {
        let pc = PointCloud::new(vec![[0.0, 0.0, 5.0], [0.2, 0.0, 5.0], [1.0, 1.0, 6.0], [0.1, 0.1, 5.1]]).unwrap();
        let a = encode_cloud(&pc, &EncoderSpec::default()).unwrap();
        let b = encode_cloud(&pc.translated([0.5, -0.25, 1.0]), &EncoderSpec::default()).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
