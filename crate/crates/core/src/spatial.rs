//! Uniform bucket grid for nearest-neighbor and radius queries over 3D points.

type Cell = (i64, i64, i64);

/// Point index and Euclidean distance.
pub type Neighbor = (usize, f64);

/// Upper bound on grid cells per point; sparse, far-flung clouds get coarser cells.
const CELLS_PER_POINT: f64 = 8.0;

#[derive(Debug, Clone)]
pub struct PointGrid {
    points: Vec<[f64; 3]>,
    cell: f64,
    /// Bounding box of occupied cells.
    lo: Cell,
    hi: Cell,
    dims: (i64, i64, i64),
    /// Points of dense cell `k` are `ids[starts[k]..starts[k + 1]]`.
    starts: Vec<usize>,
    ids: Vec<usize>,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn bounds(points: &[[f64; 3]], cell: f64) -> (Cell, Cell) {
    let mut lo = (i64::MAX, i64::MAX, i64::MAX);
    let mut hi = (i64::MIN, i64::MIN, i64::MIN);
    for p in points {
        let c = PointGrid::key(cell, p);
        lo = (lo.0.min(c.0), lo.1.min(c.1), lo.2.min(c.2));
        hi = (hi.0.max(c.0), hi.1.max(c.1), hi.2.max(c.2));
    }
    (lo, hi)
}

impl PointGrid {
    /// `cell` is the finest cell edge used; it only affects speed, never
    /// results. Panics if `cell` is not positive.
    pub fn new(points: &[[f64; 3]], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell size must be > 0");
        let budget = CELLS_PER_POINT * points.len() as f64 + 64.0;
        let mut cell = cell;
        let (lo, hi) = loop {
            let (lo, hi) = bounds(points, cell);
            let volume = if points.is_empty() {
                0.0
            } else {
                (hi.0 - lo.0 + 1) as f64 * (hi.1 - lo.1 + 1) as f64 * (hi.2 - lo.2 + 1) as f64
            };
            if volume <= budget {
                break (lo, hi);
            }
            cell *= (volume / budget).cbrt().max(1.5);
        };
        let dims = if points.is_empty() {
            (0, 0, 0)
        } else {
            (hi.0 - lo.0 + 1, hi.1 - lo.1 + 1, hi.2 - lo.2 + 1)
        };
        let ncells = (dims.0 * dims.1 * dims.2) as usize;
        let mut starts = vec![0usize; ncells + 1];
        let slots: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = Self::key(cell, p);
                (((c.2 - lo.2) * dims.1 + (c.1 - lo.1)) * dims.0 + (c.0 - lo.0)) as usize
            })
            .collect();
        for &k in &slots {
            starts[k + 1] += 1;
        }
        for k in 0..ncells {
            starts[k + 1] += starts[k];
        }
        let mut fill = starts.clone();
        let mut ids = vec![0usize; points.len()];
        for (i, &k) in slots.iter().enumerate() {
            ids[fill[k]] = i;
            fill[k] += 1;
        }
        PointGrid {
            points: points.to_vec(),
            cell,
            lo,
            hi,
            dims,
            starts,
            ids,
        }
    }

    fn key(cell: f64, p: &[f64; 3]) -> Cell {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        )
    }

    fn cell_points(&self, c: Cell) -> &[usize] {
        if self.ids.is_empty() {
            return &[];
        }
        let (x, y, z) = (c.0 - self.lo.0, c.1 - self.lo.1, c.2 - self.lo.2);
        if x < 0 || y < 0 || z < 0 || x >= self.dims.0 || y >= self.dims.1 || z >= self.dims.2 {
            return &[];
        }
        let k = ((z * self.dims.1 + y) * self.dims.0 + x) as usize;
        &self.ids[self.starts[k]..self.starts[k + 1]]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    fn visit_shell(&self, c: Cell, ring: i64, f: &mut impl FnMut(usize)) {
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                for dz in -ring..=ring {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                        continue;
                    }
                    self.cell_points((c.0 + dx, c.1 + dy, c.2 + dz))
                        .iter()
                        .for_each(|&i| f(i));
                }
            }
        }
    }

    /// Nearest point as `(index, distance)`; ties go to the lower index.
    /// `None` for an empty grid or a non-finite query.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<Neighbor> {
        if self.points.is_empty() || !q.iter().all(|v| v.is_finite()) {
            return None;
        }
        let c = Self::key(self.cell, q);
        let reach = self.reach(c);
        let mut best = (f64::INFINITY, usize::MAX);
        let keep = |best: &mut (f64, usize), i: usize| {
            let d = dist2(q, &self.points[i]);
            if d < best.0 || (d == best.0 && i < best.1) {
                *best = (d, i);
            }
        };
        let mut ring = 0;
        loop {
            if 24 * ring * ring + 2 > self.points.len() as i64 {
                (0..self.points.len()).for_each(|i| keep(&mut best, i));
                break;
            }
            self.visit_shell(c, ring, &mut |i| keep(&mut best, i));
            let bound = ring as f64 * self.cell;
            if best.0 < bound * bound || ring >= reach {
                break;
            }
            ring += 1;
        }
        Some((best.1, best.0.sqrt()))
    }

    fn reach(&self, c: Cell) -> i64 {
        [
            (c.0 - self.lo.0).abs(),
            (c.0 - self.hi.0).abs(),
            (c.1 - self.lo.1).abs(),
            (c.1 - self.hi.1).abs(),
            (c.2 - self.lo.2).abs(),
            (c.2 - self.hi.2).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }

    /// Nearest and second-nearest points (the second may be absent).
    pub fn nearest_two(&self, q: &[f64; 3]) -> Option<(Neighbor, Option<Neighbor>)> {
        if self.points.is_empty() || !q.iter().all(|v| v.is_finite()) {
            return None;
        }
        let c = Self::key(self.cell, q);
        // Rings needed to cover every occupied cell from the query cell.
        let reach = self.reach(c);
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(2);
        let keep = |best: &mut Vec<(f64, usize)>, i: usize| {
            best.push((dist2(q, &self.points[i]), i));
            best.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            best.truncate(2);
        };
        let mut ring = 0;
        loop {
            // A shell with more cells than there are points is cheaper to replace by a scan.
            if 24 * ring * ring + 2 > self.points.len() as i64 {
                best.clear();
                (0..self.points.len()).for_each(|i| keep(&mut best, i));
                break;
            }
            self.visit_shell(c, ring, &mut |i| keep(&mut best, i));
            // Any point outside the rings seen so far is at least `ring * cell` away.
            let bound = ring as f64 * self.cell;
            let done = best.len() == 2.min(self.points.len()) && best.last().is_some_and(|b| b.0 < bound * bound);
            if done || ring >= reach {
                break;
            }
            ring += 1;
        }
        let first = (best[0].1, best[0].0.sqrt());
        let second = best.get(1).map(|b| (b.1, b.0.sqrt()));
        Some((first, second))
    }

    /// Number of points within `radius` (inclusive) of `q`.
    pub fn count_within(&self, q: &[f64; 3], radius: f64) -> usize {
        if !q.iter().all(|v| v.is_finite()) {
            return 0;
        }
        let c = Self::key(self.cell, q);
        let rings = (radius / self.cell).ceil() as i64;
        let r2 = radius * radius;
        let mut n = 0;
        for ring in 0..=rings {
            self.visit_shell(c, ring, &mut |i| {
                if dist2(q, &self.points[i]) <= r2 {
                    n += 1;
                }
            });
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_nearest(pts: &[[f64; 3]], q: &[f64; 3]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, p) in pts.iter().enumerate() {
            let d = dist2(p, q);
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, best.1.sqrt())
    }

    #[test]
    fn empty_grid_has_no_neighbor() {
        assert!(PointGrid::new(&[], 1.0).nearest(&[0.0; 3]).is_none());
    }

    #[test]
    fn far_query_still_finds_the_point() {
        let g = PointGrid::new(&[[0.0, 0.0, 0.0]], 0.1);
        let (i, d) = g.nearest(&[5.0, 0.0, 0.0]).unwrap();
        assert_eq!(i, 0);
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let g = PointGrid::new(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]], 0.5);
        assert_eq!(g.nearest(&[0.0; 3]).unwrap().0, 0);
    }

    proptest! {
        #[test]
        fn nearest_matches_brute_force(
            pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..60),
            q in prop::array::uniform3(-8.0f64..8.0),
            cell in 0.05f64..3.0,
        ) {
            let g = PointGrid::new(&pts, cell);
            let (_, d) = g.nearest(&q).unwrap();
            let (_, bd) = brute_nearest(&pts, &q);
            prop_assert!((d - bd).abs() < 1e-12);
        }

        #[test]
        fn second_nearest_matches_brute_force(
            pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 2..60),
            q in prop::array::uniform3(-8.0f64..8.0),
        ) {
            let g = PointGrid::new(&pts, 0.7);
            let (_, second) = g.nearest_two(&q).unwrap();
            let mut d: Vec<f64> = pts.iter().map(|p| dist2(p, &q).sqrt()).collect();
            d.sort_by(f64::total_cmp);
            prop_assert!((second.unwrap().1 - d[1]).abs() < 1e-12);
        }

        #[test]
        fn radius_count_matches_brute_force(
            pts in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 0..60),
            q in prop::array::uniform3(-5.0f64..5.0),
            r in 0.0f64..4.0,
        ) {
            let g = PointGrid::new(&pts, 0.9);
            let n = pts.iter().filter(|p| dist2(p, &q) <= r * r).count();
            prop_assert_eq!(g.count_within(&q, r), n);
        }
    }
}
