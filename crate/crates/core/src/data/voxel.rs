//! Temporal voxelization of an event stream.
//!
//! Slices hold integer net-polarity counts; the scalar view multiplies by the
//! contrast threshold on read. Summing counts is exact, so the slice sum and a
//! full-window accumulation agree bit for bit.

use super::{EventStream, Image, Semantics};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EventVoxelGrid {
    pub slices: usize,
    pub width: usize,
    pub height: usize,
    pub threshold: f64,
    /// Slice-major net polarity counts, `slices * height * width`.
    pub counts: Vec<i32>,
}

impl EventVoxelGrid {
    fn plane(&self) -> usize {
        self.width * self.height
    }

    pub fn slice_counts(&self, i: usize) -> &[i32] {
        &self.counts[i * self.plane()..(i + 1) * self.plane()]
    }

    /// Slice `i` as `count * C` per pixel.
    pub fn slice(&self, i: usize) -> Image {
        let data = self
            .slice_counts(i)
            .iter()
            .map(|&c| c as f64 * self.threshold)
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            semantics: Semantics::Intensity,
            data,
        }
    }

    pub fn net_counts(&self) -> Vec<i64> {
        let mut out = vec![0i64; self.plane()];
        for i in 0..self.slices {
            for (o, &c) in out.iter_mut().zip(self.slice_counts(i)) {
                *o += c as i64;
            }
        }
        out
    }

    /// Sum over all slices as an intensity frame.
    pub fn sum_image(&self) -> Image {
        let data = self
            .net_counts()
            .into_iter()
            .map(|c| c as f64 * self.threshold)
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            semantics: Semantics::Intensity,
            data,
        }
    }
}

/// Split the stream window into `slices` equal sub-intervals and accumulate
/// `p * C` per pixel in each. An event on a boundary goes to the earlier slice.
/// A zero-length window yields a single slice holding every event.
pub fn voxelize_events(ev: &EventStream, slices: usize, threshold: f64) -> Result<EventVoxelGrid> {
    if slices == 0 {
        return Err(Error::Config("slice count must be >= 1".into()));
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::Config(format!("event threshold must be > 0, got {threshold}")));
    }
    let (t0, t1) = ev.window();
    let span = t1 - t0;
    let slices = if span > 0.0 { slices } else { 1 };
    let plane = ev.width() * ev.height();
    let mut counts = vec![0i32; slices * plane];
    for e in ev.events() {
        let k = if span > 0.0 {
            let pos = (e.t - t0) / span * slices as f64;
            (pos.ceil() as i64 - 1).clamp(0, slices as i64 - 1) as usize
        } else {
            0
        };
        counts[k * plane + e.y as usize * ev.width() + e.x as usize] += e.p.sign() as i32;
    }
    Ok(EventVoxelGrid {
        slices,
        width: ev.width(),
        height: ev.height(),
        threshold,
        counts,
    })
}
