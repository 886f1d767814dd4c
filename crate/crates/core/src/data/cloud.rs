use crate::error::{Error, Result};

/// Unordered 3D points in camera coordinates (metres, +z forward).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Format(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, t: [f64; 3]) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
                .collect(),
        }
    }

    pub fn median_depth(&self) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let mut z: Vec<f64> = self.points.iter().map(|p| p[2]).collect();
        z.sort_by(f64::total_cmp);
        Some(z[z.len() / 2])
    }
}
