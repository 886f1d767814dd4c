use crate::error::{Error, Result};

/// Dense optical flow in pixels per frame with a validity mask.
///
/// Displacements are interleaved `(du, dv)` per pixel, row-major. Invalid
/// pixels always carry `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub valid: Vec<u8>,
}

impl FlowField2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>, valid: Vec<u8>) -> Result<Self> {
        let n = width * height;
        if data.len() != 2 * n || valid.len() != n {
            return Err(Error::Shape(format!(
                "flow buffers ({}, {}) do not match {width}x{height}",
                data.len(),
                valid.len()
            )));
        }
        for (i, &m) in valid.iter().enumerate() {
            if m > 1 {
                return Err(Error::Format(format!("mask value {m} at pixel {i}")));
            }
            let (du, dv) = (data[2 * i], data[2 * i + 1]);
            if !du.is_finite() || !dv.is_finite() {
                return Err(Error::Format(format!("non-finite flow at pixel {i}")));
            }
            if m == 0 && (du != 0.0 || dv != 0.0) {
                return Err(Error::Format(format!("invalid pixel {i} carries nonzero flow")));
            }
        }
        Ok(FlowField2D {
            width,
            height,
            data,
            valid,
        })
    }

    /// Every pixel valid with displacement `(du, dv)`.
    pub fn uniform(width: usize, height: usize, du: f64, dv: f64) -> Self {
        let mut data = Vec::with_capacity(2 * width * height);
        for _ in 0..width * height {
            data.push(du);
            data.push(dv);
        }
        FlowField2D {
            width,
            height,
            data,
            valid: vec![1; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, 0.0, 0.0)
    }

    /// All pixels invalid.
    pub fn empty(width: usize, height: usize) -> Self {
        FlowField2D {
            width,
            height,
            data: vec![0.0; 2 * width * height],
            valid: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.data[2 * i], self.data[2 * i + 1])
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, du: f64, dv: f64) {
        let i = y * self.width + x;
        self.data[2 * i] = du;
        self.data[2 * i + 1] = dv;
        self.valid[i] = 1;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v == 1).count()
    }
}

/// Sparse scene flow, one vector per sampled point, metres per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField3D {
    pub vectors: Vec<[f64; 3]>,
    pub valid: Vec<u8>,
}

impl FlowField3D {
    pub fn new(vectors: Vec<[f64; 3]>, valid: Vec<u8>) -> Result<Self> {
        if vectors.len() != valid.len() {
            return Err(Error::Shape(format!(
                "{} vectors vs {} mask entries",
                vectors.len(),
                valid.len()
            )));
        }
        if valid.iter().any(|&m| m > 1) {
            return Err(Error::Format("mask values must be 0 or 1".into()));
        }
        Ok(FlowField3D { vectors, valid })
    }

    pub fn zeros(n: usize) -> Self {
        FlowField3D {
            vectors: vec![[0.0; 3]; n],
            valid: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Flattened `[dx0, dy0, dz0, dx1, ...]`.
    pub fn flat(&self) -> Vec<f64> {
        self.vectors.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn from_flat(flat: &[f64], valid: Vec<u8>) -> Result<Self> {
        if !flat.len().is_multiple_of(3) {
            return Err(Error::Shape("flat scene flow length not a multiple of 3".into()));
        }
        let vectors = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::new(vectors, valid)
    }
}
