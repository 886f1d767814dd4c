use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the values of an [`Image`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Semantics {
    /// Interleaved RGB in `[0, 1]`.
    Rgb,
    /// YUV planes (full or single chroma plane) in `[0, 1]`.
    Yuv,
    /// Luminance in `[0, 1]`.
    Luma,
    /// Signed event accumulation or any other signed scalar map.
    Intensity,
    /// Metric depth, 0 marks a missing sample.
    Depth,
}

impl Semantics {
    fn check_value(self, v: f64) -> bool {
        match self {
            Semantics::Rgb | Semantics::Yuv | Semantics::Luma => (0.0..=1.0).contains(&v),
            Semantics::Intensity => v.is_finite(),
            Semantics::Depth => v.is_finite() && v >= 0.0,
        }
    }
}

/// Row-major raster with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub semantics: Semantics,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, semantics: Semantics, data: Vec<f64>) -> Result<Self> {
        let img = Image {
            width,
            height,
            channels,
            semantics,
            data,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn zeros(width: usize, height: usize, channels: usize, semantics: Semantics) -> Self {
        Image {
            width,
            height,
            channels,
            semantics,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, semantics: Semantics, value: f64) -> Self {
        Image {
            width,
            height,
            channels: 1,
            semantics,
            data: vec![value; width * height],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let expected_channels = match self.semantics {
            Semantics::Rgb => self.channels == 3,
            Semantics::Yuv => self.channels == 1 || self.channels == 3,
            _ => self.channels == 1,
        };
        if !expected_channels {
            return Err(Error::Format(format!(
                "{:?} image cannot have {} channels",
                self.semantics, self.channels
            )));
        }
        if self.data.len() != self.width * self.height * self.channels {
            return Err(Error::Shape(format!(
                "data length {} != {}x{}x{}",
                self.data.len(),
                self.width,
                self.height,
                self.channels
            )));
        }
        if let Some(i) = self.data.iter().position(|&v| !self.semantics.check_value(v)) {
            return Err(Error::Format(format!(
                "{:?} value {} at index {i} violates range",
                self.semantics, self.data[i]
            )));
        }
        Ok(())
    }

    pub fn expect_semantics(&self, s: Semantics) -> Result<()> {
        if self.semantics != s {
            return Err(Error::Format(format!("expected {s:?} image, got {:?}", self.semantics)));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels]
    }

    #[inline]
    pub fn at_c(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copy of channel `c` as a single-channel image with the given tag.
    pub fn channel(&self, c: usize, semantics: Semantics) -> Image {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            semantics,
            data,
        }
    }

    pub fn with_semantics(mut self, semantics: Semantics) -> Self {
        self.semantics = semantics;
        self
    }
}

/// Binary per-pixel mask (values 0 or 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!("mask length {} != {width}x{height}", data.len())));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Format("mask values must be 0 or 1".into()));
        }
        Ok(Mask { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Mask {
            width,
            height,
            data: vec![value as u8; width * height],
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Shape("mask shapes differ".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a & b).collect();
        Ok(Mask {
            width: self.width,
            height: self.height,
            data,
        })
    }

    /// Square (Chebyshev) dilation of the set pixels by `radius`.
    pub fn dilate(&self, radius: usize) -> Mask {
        let mut out = vec![0u8; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                if self.data[y * self.width + x] == 0 {
                    continue;
                }
                let y0 = y.saturating_sub(radius);
                let y1 = (y + radius).min(self.height - 1);
                let x0 = x.saturating_sub(radius);
                let x1 = (x + radius).min(self.width - 1);
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        out[yy * self.width + xx] = 1;
                    }
                }
            }
        }
        Mask {
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    pub fn invert(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| 1 - v).collect(),
        }
    }
}
