//! Small numeric helpers shared by the loss and interpolation code.

const PAIRWISE_BLOCK: usize = 16;

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// slice length, so results are reproducible for a fixed element order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Bilinear sample of a single-channel row-major grid with zero padding.
///
/// Returns `None` when `(x, y)` falls outside `[0, w-1] x [0, h-1]`.
pub fn bilinear(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> Option<f64> {
    bilinear_strided(data, width, height, 1, 0, x, y)
}

/// Bilinear sample of channel `c` of an interleaved grid with `stride` channels.
pub fn bilinear_strided(
    data: &[f64],
    width: usize,
    height: usize,
    stride: usize,
    c: usize,
    x: f64,
    y: f64,
) -> Option<f64> {
    let (x0, y0, fx, fy) = cell(width, height, x, y)?;
    let at = |xi: usize, yi: usize| -> f64 {
        if xi < width && yi < height {
            data[(yi * width + xi) * stride + c]
        } else {
            0.0
        }
    };
    let v00 = at(x0, y0);
    let v10 = at(x0 + 1, y0);
    let v01 = at(x0, y0 + 1);
    let v11 = at(x0 + 1, y0 + 1);
    Some((1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11))
}

/// Bilinear sample of every channel of an interleaved grid at once; `out`
/// must hold `stride` values. Returns `false` outside the grid.
pub fn bilinear_all(data: &[f64], width: usize, height: usize, stride: usize, x: f64, y: f64, out: &mut [f64]) -> bool {
    let Some((x0, y0, fx, fy)) = cell(width, height, x, y) else {
        return false;
    };
    let base =
        |xi: usize, yi: usize| -> Option<usize> { (xi < width && yi < height).then(|| (yi * width + xi) * stride) };
    let corners = [base(x0, y0), base(x0 + 1, y0), base(x0, y0 + 1), base(x0 + 1, y0 + 1)];
    for (c, o) in out.iter_mut().enumerate().take(stride) {
        let [v00, v10, v01, v11] = corners.map(|b| b.map_or(0.0, |b| data[b + c]));
        *o = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
    }
    true
}

/// Bilinear sample together with its partial derivatives in x and y.
pub fn bilinear_with_grad(data: &[f64], width: usize, height: usize, x: f64, y: f64) -> Option<(f64, f64, f64)> {
    let (x0, y0, fx, fy) = cell(width, height, x, y)?;
    let at = |xi: usize, yi: usize| -> f64 {
        if xi < width && yi < height {
            data[yi * width + xi]
        } else {
            0.0
        }
    };
    let v00 = at(x0, y0);
    let v10 = at(x0 + 1, y0);
    let v01 = at(x0, y0 + 1);
    let v11 = at(x0 + 1, y0 + 1);
    let value = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
    let dx = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
    let dy = (1.0 - fx) * (v01 - v00) + fx * (v11 - v10);
    Some((value, dx, dy))
}

fn cell(width: usize, height: usize, x: f64, y: f64) -> Option<(usize, usize, f64, f64)> {
    if width == 0 || height == 0 || !x.is_finite() || !y.is_finite() {
        return None;
    }
    if x < 0.0 || y < 0.0 || x > (width - 1) as f64 || y > (height - 1) as f64 {
        return None;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    Some((x0 as usize, y0 as usize, x - x0, y - y0))
}

/// Central differences with replicated borders. Returns `(d/dx, d/dy)` maps.
pub fn central_gradient(data: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; data.len()];
    let mut gy = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(width - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(height - 1);
            let i = y * width + x;
            gx[i] = 0.5 * (data[y * width + xp] - data[y * width + xm]);
            gy[i] = 0.5 * (data[yp * width + x] - data[ym * width + x]);
        }
    }
    (gx, gy)
}

/// `max(|a|, |b|, floor)`-normalized difference used by the gradient audits.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn bilinear_at_grid_points_is_exact() {
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
        for y in 0..3 {
            for x in 0..4 {
                let v = bilinear(&data, 4, 3, x as f64, y as f64).unwrap();
                assert_eq!(v, data[y * 4 + x]);
            }
        }
        assert!(bilinear(&data, 4, 3, -0.1, 0.0).is_none());
        assert!(bilinear(&data, 4, 3, 3.0001, 0.0).is_none());
    }

    #[test]
    fn bilinear_gradient_matches_plane() {
        // f(x, y) = 2x - 3y is reproduced exactly by bilinear interpolation.
        let data: Vec<f64> = (0..25).map(|i| 2.0 * (i % 5) as f64 - 3.0 * (i / 5) as f64).collect();
        let (v, dx, dy) = bilinear_with_grad(&data, 5, 5, 1.3, 2.6).unwrap();
        assert!((v - (2.6 - 7.8)).abs() < 1e-12);
        assert!((dx - 2.0).abs() < 1e-12);
        assert!((dy + 3.0).abs() < 1e-12);
    }

    #[test]
    fn central_gradient_replicates_borders() {
        let data = vec![0.0, 1.0, 4.0];
        let (gx, gy) = central_gradient(&data, 3, 1);
        assert_eq!(gx, vec![0.5, 2.0, 1.5]);
        assert_eq!(gy, vec![0.0; 3]);
    }
}
