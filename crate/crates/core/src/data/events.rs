use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    #[inline]
    pub fn sign(self) -> i64 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.sign() as f64
    }

    pub fn from_sign(s: i64) -> Option<Self> {
        match s {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: u32,
    pub y: u32,
    /// Seconds.
    pub t: f64,
    pub p: Polarity,
}

/// Time-ordered events from a `width x height` sensor over `[window.0, window.1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    width: usize,
    height: usize,
    window: (f64, f64),
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: usize, height: usize, window: (f64, f64), events: Vec<Event>) -> Result<Self> {
        let (t0, t1) = window;
        if !(t0.is_finite() && t1.is_finite() && t0 <= t1) {
            return Err(Error::Format(format!("bad event window [{t0}, {t1}]")));
        }
        for (i, e) in events.iter().enumerate() {
            if e.x as usize >= width || e.y as usize >= height {
                return Err(Error::Format(format!(
                    "event {i} at ({}, {}) outside {width}x{height}",
                    e.x, e.y
                )));
            }
            if !(e.t >= t0 && e.t <= t1) {
                return Err(Error::Format(format!(
                    "event {i} at t={} outside window [{t0}, {t1}]",
                    e.t
                )));
            }
            if i > 0 && e.t < events[i - 1].t {
                return Err(Error::Format(format!("event {i} breaks time ordering")));
            }
        }
        Ok(EventStream {
            width,
            height,
            window,
            events,
        })
    }

    pub fn empty(width: usize, height: usize, window: (f64, f64)) -> Self {
        EventStream {
            width,
            height,
            window,
            events: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `t0 <= t <= t1`, as a stream over that window.
    pub fn sub_window(&self, t0: f64, t1: f64) -> Result<EventStream> {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = self.events.partition_point(|e| e.t <= t1);
        EventStream::new(self.width, self.height, (t0, t1), self.events[lo..hi.max(lo)].to_vec())
    }

    /// Signed event count per pixel over `window` (inclusive on both ends).
    pub fn net_counts(&self, window: (f64, f64)) -> Vec<i64> {
        let mut counts = vec![0i64; self.width * self.height];
        for e in &self.events {
            if e.t >= window.0 && e.t <= window.1 {
                counts[e.y as usize * self.width + e.x as usize] += e.p.sign();
            }
        }
        counts
    }

    /// 1 where at least one event fired inside `window`.
    pub fn activity(&self, window: (f64, f64)) -> Vec<u8> {
        let mut active = vec![0u8; self.width * self.height];
        for e in &self.events {
            if e.t >= window.0 && e.t <= window.1 {
                active[e.y as usize * self.width + e.x as usize] = 1;
            }
        }
        active
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(x: u32, y: u32, t: f64, s: i64) -> Event {
        Event {
            x,
            y,
            t,
            p: Polarity::from_sign(s).unwrap(),
        }
    }

    #[test]
    fn validates_ordering_and_bounds() {
        assert!(EventStream::new(4, 4, (0.0, 1.0), vec![ev(0, 0, 0.5, 1), ev(1, 1, 0.4, 1)]).is_err());
        assert!(EventStream::new(4, 4, (0.0, 1.0), vec![ev(4, 0, 0.5, 1)]).is_err());
        assert!(EventStream::new(4, 4, (0.0, 1.0), vec![ev(0, 0, 1.5, 1)]).is_err());
        assert!(EventStream::new(4, 4, (0.0, 1.0), vec![ev(0, 0, 0.5, -1), ev(3, 3, 0.5, 1)]).is_ok());
    }

    #[test]
    fn sub_window_is_inclusive() {
        let s = EventStream::new(
            4,
            4,
            (0.0, 1.0),
            vec![ev(0, 0, 0.0, 1), ev(0, 0, 0.5, 1), ev(0, 0, 1.0, -1)],
        )
        .unwrap();
        assert_eq!(s.sub_window(0.0, 0.5).unwrap().len(), 2);
        assert_eq!(s.sub_window(0.5, 1.0).unwrap().len(), 2);
        assert_eq!(s.sub_window(0.6, 0.9).unwrap().len(), 0);
        assert_eq!(s.net_counts((0.0, 1.0))[0], 1);
    }
}
