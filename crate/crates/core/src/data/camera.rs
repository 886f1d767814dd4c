//! Pinhole camera model and the projection / back-projection pair.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Image, PointCloud, Semantics};
use crate::error::{Error, Result};

/// Intrinsics of an undistorted pinhole camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Focal length in pixels.
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(f: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            f,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f.is_finite() && self.f > 0.0) {
            return Err(Error::Config(format!("focal length must be > 0, got {}", self.f)));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return Err(Error::Config(format!("cx = {} outside (0, {})", self.cx, self.width)));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::Config(format!("cy = {} outside (0, {})", self.cy, self.height)));
        }
        Ok(())
    }

    /// Raw pinhole projection without bounds filtering. `None` when `z <= 0`.
    #[inline]
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if p[2] <= 0.0 {
            return None;
        }
        Some((self.f * p[0] / p[2] + self.cx, self.f * p[1] / p[2] + self.cy))
    }

    #[inline]
    pub fn backproject(&self, u: f64, v: f64, d: f64) -> [f64; 3] {
        [(u - self.cx) * d / self.f, (v - self.cy) * d / self.f, d]
    }

    /// Strict image-plane containment: `0 < u < w` and `0 < v < h`.
    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u > 0.0 && u < self.width as f64 && v > 0.0 && v < self.height as f64
    }

    /// Pixel index of a continuous image coordinate, if it rounds inside the raster.
    #[inline]
    pub fn pixel_of(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let x = u.round();
        let y = v.round();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some((x as usize, y as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub u: f64,
    pub v: f64,
    pub d: f64,
    /// Index into the originating point cloud.
    pub source: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectedPoints {
    pub entries: Vec<ProjectedPoint>,
}

impl ProjectedPoints {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProjectedPoint> {
        self.entries.iter()
    }

    /// Largest depth, or 0 for an empty set.
    pub fn max_depth(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.d))
    }
}

/// Project a cloud into the image plane.
///
/// Points behind the camera or outside `(0, w) x (0, h)` are dropped. When two
/// points round to the same pixel the nearer one is kept, in the slot of the
/// first point that claimed the pixel.
pub fn project_points(pc: &PointCloud, k: &CameraIntrinsics) -> ProjectedPoints {
    let mut entries: Vec<ProjectedPoint> = Vec::with_capacity(pc.len());
    let mut slot: HashMap<(i64, i64), usize> = HashMap::new();
    for (source, p) in pc.points.iter().enumerate() {
        let Some((u, v)) = k.project(*p) else { continue };
        if !k.contains(u, v) {
            continue;
        }
        let entry = ProjectedPoint { u, v, d: p[2], source };
        let key = (u.round() as i64, v.round() as i64);
        match slot.get(&key) {
            Some(&i) => {
                if entry.d < entries[i].d {
                    entries[i] = entry;
                }
            }
            None => {
                slot.insert(key, entries.len());
                entries.push(entry);
            }
        }
    }
    ProjectedPoints { entries }
}

/// Rasterize projected depths into a depth image, nearest depth winning.
pub fn splat_depth(points: &ProjectedPoints, k: &CameraIntrinsics) -> Image {
    let mut depth = Image::zeros(k.width, k.height, 1, Semantics::Depth);
    for e in points.iter() {
        if let Some((x, y)) = k.pixel_of(e.u, e.v) {
            let i = y * k.width + x;
            let cur = depth.data[i];
            if cur == 0.0 || e.d < cur {
                depth.data[i] = e.d;
            }
        }
    }
    depth
}

/// Lift every pixel with positive depth to a camera-frame point (row-major order).
pub fn backproject_depth(depth: &Image, k: &CameraIntrinsics) -> Result<PointCloud> {
    depth.expect_semantics(Semantics::Depth)?;
    if depth.width != k.width || depth.height != k.height {
        return Err(Error::Shape(format!(
            "depth {}x{} vs camera {}x{}",
            depth.width, depth.height, k.width, k.height
        )));
    }
    let mut points = Vec::new();
    for y in 0..depth.height {
        for x in 0..depth.width {
            let d = depth.data[y * depth.width + x];
            if d > 0.0 {
                points.push(k.backproject(x as f64, y as f64, d));
            }
        }
    }
    PointCloud::new(points)
}
