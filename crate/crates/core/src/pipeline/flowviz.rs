//! Flow color coding with the standard 55-entry hue wheel (red, yellow,
//! green, cyan, blue, magenta segments of 15, 6, 4, 11, 13 and 6 steps).

use crate::data::FlowField2D;

type Segment = (usize, fn(f64) -> [f64; 3]);

fn color_wheel() -> Vec<[f64; 3]> {
    let segments: [Segment; 6] = [
        (15, |t| [255.0, 255.0 * t, 0.0]),
        (6, |t| [255.0 - 255.0 * t, 255.0, 0.0]),
        (4, |t| [0.0, 255.0, 255.0 * t]),
        (11, |t| [0.0, 255.0 - 255.0 * t, 255.0]),
        (13, |t| [255.0 * t, 0.0, 255.0]),
        (6, |t| [255.0, 0.0, 255.0 - 255.0 * t]),
    ];
    let mut wheel = Vec::with_capacity(55);
    for (n, f) in segments {
        for i in 0..n {
            wheel.push(f(i as f64 / n as f64));
        }
    }
    wheel
}

/// One RGB triple per pixel. Magnitudes are normalized by `max_mag` or, if
/// `None`, by the largest valid magnitude. Invalid pixels are black.
pub fn flow_to_rgb(flow: &FlowField2D, max_mag: Option<f64>) -> Vec<[u8; 3]> {
    let wheel = color_wheel();
    let ncols = wheel.len() as f64;
    let n = flow.width * flow.height;
    let largest = (0..n)
        .filter(|&i| flow.valid[i] == 1)
        .map(|i| flow.data[2 * i].hypot(flow.data[2 * i + 1]))
        .fold(0.0, f64::max);
    let scale = max_mag.unwrap_or(largest).max(f64::EPSILON);
    (0..n)
        .map(|i| {
            if flow.valid[i] == 0 {
                return [0, 0, 0];
            }
            let (u, v) = (flow.data[2 * i] / scale, flow.data[2 * i + 1] / scale);
            let rad = u.hypot(v);
            let a = (-v).atan2(-u) / std::f64::consts::PI;
            let fk = (a + 1.0) / 2.0 * (ncols - 1.0);
            let k0 = fk.floor() as usize % wheel.len();
            let k1 = (k0 + 1) % wheel.len();
            let f = fk - fk.floor();
            let mut out = [0u8; 3];
            for c in 0..3 {
                let col = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
                let col = if rad <= 1.0 {
                    1.0 - rad * (1.0 - col)
                } else {
                    col * 0.75
                };
                out[c] = (255.0 * col).round().clamp(0.0, 255.0) as u8;
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wheel_has_55_entries_starting_red() {
        let w = color_wheel();
        assert_eq!(w.len(), 55);
        assert_eq!(w[0], [255.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_flow_is_white_and_invalid_is_black() {
        let mut f = FlowField2D::zeros(2, 1);
        f.valid[1] = 0;
        let c = flow_to_rgb(&f, Some(1.0));
        assert_eq!(c[0], [255, 255, 255]);
        assert_eq!(c[1], [0, 0, 0]);
    }

    #[test]
    fn opposite_directions_get_different_hues() {
        let mut f = FlowField2D::zeros(2, 1);
        f.set(0, 0, 1.0, 0.0);
        f.set(1, 0, -1.0, 0.0);
        let c = flow_to_rgb(&f, None);
        assert_ne!(c[0], c[1]);
    }
}
