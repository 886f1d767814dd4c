//! Event-LiDAR fusion in the shared 2D structure space.
//!
//! Events (collapsed over time) and projected LiDAR points are clustered
//! jointly into superpixel-like neighborhoods; inside each neighborhood the
//! sparse LiDAR coordinates are densified with event coordinates and event
//! pixels receive inverse-distance weighted depths, which serve as pseudo
//! depth labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CameraIntrinsics, EventStream, Image, ProjectedPoint, ProjectedPoints};
use crate::error::{Error, Result};
use crate::loss::{l1_sign, LossValue};
use crate::numeric::pairwise_sum;

/// Regularizer of the inverse-distance depth weights.
pub const WEIGHT_EPS: f64 = 1e-6;
/// Objective change below which clustering stops early.
pub const OBJECTIVE_TOL: f64 = 1e-9;

/// One time-collapsed event coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventPoint {
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Event2DPoints {
    pub entries: Vec<EventPoint>,
}

impl Event2DPoints {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Drop timestamps; every event becomes one 2D entry (duplicates kept).
pub fn normalize_event_coords(ev: &EventStream) -> Event2DPoints {
    Event2DPoints {
        entries: ev
            .events()
            .iter()
            .map(|e| EventPoint {
                u: e.x as f64,
                v: e.y as f64,
                p: e.p.value(),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceParams {
    /// Spatial normalizer in pixels.
    pub n_s: f64,
}

impl DistanceParams {
    pub fn new(n_s: f64) -> Result<Self> {
        if !(n_s > 0.0 && n_s.is_finite()) {
            return Err(Error::Config(format!("spatial normalizer must be > 0, got {n_s}")));
        }
        Ok(DistanceParams { n_s })
    }
}

/// A 2D coordinate with a scalar structure attribute: polarity for events,
/// depth over the frame's maximum depth for LiDAR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructPoint {
    pub u: f64,
    pub v: f64,
    pub attr: f64,
}

impl From<EventPoint> for StructPoint {
    fn from(e: EventPoint) -> Self {
        StructPoint {
            u: e.u,
            v: e.v,
            attr: e.p,
        }
    }
}

impl StructPoint {
    pub fn lidar(e: &ProjectedPoint, d_max: f64) -> Self {
        StructPoint {
            u: e.u,
            v: e.v,
            attr: if d_max > 0.0 { e.d / d_max } else { 0.0 },
        }
    }
}

/// `sqrt(d_p^2 + (d_s / N_s)^2)` between two points of the same modality.
pub fn joint_distance(a: &StructPoint, b: &StructPoint, params: &DistanceParams) -> f64 {
    joint_distance_sq(a, b, params).sqrt()
}

fn joint_distance_sq(a: &StructPoint, b: &StructPoint, params: &DistanceParams) -> f64 {
    let dp = a.attr - b.attr;
    let du = a.u - b.u;
    let dv = a.v - b.v;
    dp * dp + (du * du + dv * dv) / (params.n_s * params.n_s)
}

/// Distance between an event and a LiDAR coordinate. Polarity and normalized
/// depth are not comparable quantities, so only the spatial term remains.
pub fn cross_modal_distance(event: &EventPoint, lidar: &ProjectedPoint, params: &DistanceParams) -> f64 {
    let du = event.u - lidar.u;
    let dv = event.v - lidar.v;
    (du * du + dv * dv).sqrt() / params.n_s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCenter {
    pub u: f64,
    pub v: f64,
    /// Mean event polarity.
    pub p: f64,
    /// Mean normalized LiDAR depth.
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMap {
    pub centers: Vec<ClusterCenter>,
    pub event_assignment: Vec<usize>,
    pub lidar_assignment: Vec<usize>,
    /// Sum of squared joint distances of the final assignment.
    pub objective: f64,
    /// Objective after every assignment pass, first pass included.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the requested cluster count exceeded the number of points.
    pub reduced_k: bool,
    /// Maximum depth used to normalize the LiDAR attribute.
    pub d_max: f64,
}

impl ClusterMap {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Member lists per cluster: `(events, lidar)` in insertion order.
    pub fn members(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        let mut out = vec![(Vec::new(), Vec::new()); self.centers.len()];
        for (i, &c) in self.event_assignment.iter().enumerate() {
            out[c].0.push(i);
        }
        for (i, &c) in self.lidar_assignment.iter().enumerate() {
            out[c].1.push(i);
        }
        out
    }

    /// Per-pixel label raster; LiDAR labels are written after event labels.
    /// Unlabeled pixels get `len()`.
    pub fn label_image(
        &self,
        events: &Event2DPoints,
        lidar: &ProjectedPoints,
        width: usize,
        height: usize,
    ) -> Vec<usize> {
        let mut labels = vec![self.centers.len(); width * height];
        let mut put = |u: f64, v: f64, c: usize| {
            let (x, y) = (u.round(), v.round());
            if x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height {
                labels[y as usize * width + x as usize] = c;
            }
        };
        for (e, &c) in events.entries.iter().zip(&self.event_assignment) {
            put(e.u, e.v, c);
        }
        for (l, &c) in lidar.entries.iter().zip(&self.lidar_assignment) {
            put(l.u, l.v, c);
        }
        labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub clusters: usize,
    pub iters: usize,
    pub distance: DistanceParams,
    pub seed: u64,
}

struct Clustering<'a> {
    events: &'a [EventPoint],
    lidar: Vec<StructPoint>,
    params: DistanceParams,
    window: f64,
}

impl Clustering<'_> {
    fn event_cost(&self, i: usize, c: &ClusterCenter) -> f64 {
        let e = &self.events[i];
        joint_distance_sq(
            &StructPoint {
                u: e.u,
                v: e.v,
                attr: e.p,
            },
            &StructPoint {
                u: c.u,
                v: c.v,
                attr: c.p,
            },
            &self.params,
        )
    }

    fn lidar_cost(&self, i: usize, c: &ClusterCenter) -> f64 {
        joint_distance_sq(
            &self.lidar[i],
            &StructPoint {
                u: c.u,
                v: c.v,
                attr: c.d,
            },
            &self.params,
        )
    }

    fn point(&self, i: usize) -> (f64, f64) {
        if i < self.events.len() {
            (self.events[i].u, self.events[i].v)
        } else {
            let l = &self.lidar[i - self.events.len()];
            (l.u, l.v)
        }
    }

    fn cost(&self, i: usize, c: &ClusterCenter) -> f64 {
        if i < self.events.len() {
            self.event_cost(i, c)
        } else {
            self.lidar_cost(i - self.events.len(), c)
        }
    }

    fn len(&self) -> usize {
        self.events.len() + self.lidar.len()
    }

    /// Nearest center within the search window; the current center always
    /// competes and wins ties, so no point's cost can increase.
    fn assign(&self, centers: &[ClusterCenter], current: Option<&[usize]>) -> (Vec<usize>, f64) {
        let mut assignment = Vec::with_capacity(self.len());
        let mut costs = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let (u, v) = self.point(i);
            let mut best: Option<(usize, f64)> = current.map(|a| (a[i], self.cost(i, &centers[a[i]])));
            let mut any = best.is_some();
            for (k, c) in centers.iter().enumerate() {
                if (c.u - u).abs() > self.window || (c.v - v).abs() > self.window {
                    continue;
                }
                any = true;
                let d = self.cost(i, c);
                if best.is_none_or(|(_, b)| d < b) {
                    best = Some((k, d));
                }
            }
            if !any {
                for (k, c) in centers.iter().enumerate() {
                    let d = self.cost(i, c);
                    if best.is_none_or(|(_, b)| d < b) {
                        best = Some((k, d));
                    }
                }
            }
            let (k, d) = best.expect("at least one center");
            assignment.push(k);
            costs.push(d);
        }
        (assignment, pairwise_sum(&costs))
    }

    /// Per-cluster means; clusters without members keep their center, and a
    /// cluster without events (LiDAR) keeps its polarity (depth) attribute.
    fn update(&self, centers: &[ClusterCenter], assignment: &[usize]) -> Vec<ClusterCenter> {
        let k = centers.len();
        let mut su = vec![0.0; k];
        let mut sv = vec![0.0; k];
        let mut n = vec![0usize; k];
        let mut sp = vec![0.0; k];
        let mut ne = vec![0usize; k];
        let mut sd = vec![0.0; k];
        let mut nl = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            let (u, v) = self.point(i);
            su[c] += u;
            sv[c] += v;
            n[c] += 1;
            if i < self.events.len() {
                sp[c] += self.events[i].p;
                ne[c] += 1;
            } else {
                sd[c] += self.lidar[i - self.events.len()].attr;
                nl[c] += 1;
            }
        }
        centers
            .iter()
            .enumerate()
            .map(|(c, old)| {
                if n[c] == 0 {
                    return *old;
                }
                ClusterCenter {
                    u: su[c] / n[c] as f64,
                    v: sv[c] / n[c] as f64,
                    p: if ne[c] > 0 { sp[c] / ne[c] as f64 } else { old.p },
                    d: if nl[c] > 0 { sd[c] / nl[c] as f64 } else { old.d },
                }
            })
            .collect()
    }
}

/// Grid layout `(nx, ny)` with `nx * ny >= k` matched to the image aspect.
fn grid_shape(k: usize, width: f64, height: f64) -> (usize, usize) {
    let nx = ((k as f64 * width / height).sqrt().round() as usize).clamp(1, k);
    let ny = k.div_ceil(nx);
    (nx, ny)
}

/// Grid-seeded centers over the image plane; the final row holds the
/// remainder, spread evenly. Seeds are jittered by up to a tenth of a cell.
fn seed_centers(k: usize, width: f64, height: f64, seed: u64, d_init: f64) -> (Vec<ClusterCenter>, f64) {
    let (nx, ny) = grid_shape(k, width, height);
    let sy = height / ny as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(k);
    for row in 0..ny {
        let in_row = if row + 1 == ny { k - nx * (ny - 1) } else { nx };
        let sx = width / in_row as f64;
        for col in 0..in_row {
            let ju: f64 = rng.random_range(-0.1..=0.1);
            let jv: f64 = rng.random_range(-0.1..=0.1);
            centers.push(ClusterCenter {
                u: (col as f64 + 0.5 + ju) * sx,
                v: (row as f64 + 0.5 + jv) * sy,
                p: 0.0,
                d: d_init,
            });
        }
    }
    let pitch = (width / nx as f64).max(sy);
    (centers, pitch)
}

/// Joint superpixel-style clustering of event and projected LiDAR points.
pub fn cluster_neighbors(
    events: &Event2DPoints,
    lidar: &ProjectedPoints,
    width: usize,
    height: usize,
    params: &ClusterParams,
) -> Result<ClusterMap> {
    if params.clusters == 0 {
        return Err(Error::Config("cluster count must be >= 1".into()));
    }
    DistanceParams::new(params.distance.n_s)?;
    let total = events.len() + lidar.len();
    if total == 0 {
        return Err(Error::EmptyInput("no points to cluster"));
    }
    let reduced_k = params.clusters > total;
    let k = params.clusters.min(total);
    let d_max = lidar.max_depth();
    let lidar_pts: Vec<StructPoint> = lidar.iter().map(|e| StructPoint::lidar(e, d_max)).collect();
    let d_init = if lidar_pts.is_empty() {
        0.0
    } else {
        pairwise_sum(&lidar_pts.iter().map(|p| p.attr).collect::<Vec<_>>()) / lidar_pts.len() as f64
    };
    let (mut centers, pitch) = seed_centers(k, width as f64, height as f64, params.seed, d_init);
    let problem = Clustering {
        events: &events.entries,
        lidar: lidar_pts,
        params: params.distance,
        window: pitch,
    };

    let (mut assignment, mut objective) = problem.assign(&centers, None);
    let mut history = vec![objective];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.iters {
        iterations += 1;
        centers = problem.update(&centers, &assignment);
        let (next, obj) = problem.assign(&centers, Some(&assignment));
        history.push(obj);
        let unchanged = next == assignment;
        let small = (objective - obj).abs() < OBJECTIVE_TOL;
        assignment = next;
        objective = obj;
        if unchanged {
            converged = true;
            break;
        }
        if small {
            break;
        }
    }
    if !converged {
        centers = problem.update(&centers, &assignment);
        objective = pairwise_sum(
            &assignment
                .iter()
                .enumerate()
                .map(|(i, &c)| problem.cost(i, &centers[c]))
                .collect::<Vec<_>>(),
        );
    }

    // Dense relabeling: drop clusters that ended empty.
    let mut remap = vec![usize::MAX; centers.len()];
    for &c in &assignment {
        remap[c] = 0;
    }
    let mut dense = Vec::new();
    for (c, slot) in remap.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = dense.len();
            dense.push(centers[c]);
        }
    }
    let ne = events.len();
    Ok(ClusterMap {
        centers: dense,
        event_assignment: assignment[..ne].iter().map(|&c| remap[c]).collect(),
        lidar_assignment: assignment[ne..].iter().map(|&c| remap[c]).collect(),
        objective,
        history,
        iterations,
        converged,
        reduced_k,
        d_max,
    })
}

fn check_map(events: &Event2DPoints, lidar: &ProjectedPoints, clusters: &ClusterMap, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if clusters.event_assignment.len() != events.len() || clusters.lidar_assignment.len() != lidar.len() {
        return Err(Error::Shape("cluster map does not match the point sets".into()));
    }
    Ok(())
}

/// The `k` smallest `(distance, index)` pairs, ties broken by index order.
fn k_smallest(mut scored: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    scored
}

/// LiDAR coordinates densified with their most similar co-clustered events.
#[derive(Debug, Clone, PartialEq)]
pub struct Densified {
    /// Original LiDAR entries followed by the added event coordinates. Added
    /// entries carry the depth of the LiDAR point that first selected them.
    pub points: ProjectedPoints,
    /// Event index behind each added entry, in order.
    pub added_events: Vec<usize>,
}

/// For every LiDAR coordinate append the `k` nearest co-clustered event
/// coordinates. Each event is added at most once.
pub fn fill_boundary(
    lidar: &ProjectedPoints,
    events: &Event2DPoints,
    clusters: &ClusterMap,
    k: usize,
    params: &DistanceParams,
) -> Result<Densified> {
    check_map(events, lidar, clusters, k)?;
    let members = clusters.members();
    let mut taken = vec![false; events.len()];
    let mut points = lidar.clone();
    let mut added_events = Vec::new();
    for (li, l) in lidar.iter().enumerate() {
        let (ev_members, _) = &members[clusters.lidar_assignment[li]];
        let scored = ev_members
            .iter()
            .map(|&ei| (cross_modal_distance(&events.entries[ei], l, params), ei))
            .collect();
        for (_, ei) in k_smallest(scored, k) {
            if taken[ei] {
                continue;
            }
            taken[ei] = true;
            let e = &events.entries[ei];
            points.entries.push(ProjectedPoint {
                u: e.u,
                v: e.v,
                d: l.d,
                source: l.source,
            });
            added_events.push(ei);
        }
    }
    Ok(Densified { points, added_events })
}

/// Depth assigned to one event coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFill {
    pub event: usize,
    pub x: usize,
    pub y: usize,
    pub depth: f64,
    /// LiDAR entries that contributed, nearest first.
    pub sources: Vec<usize>,
    pub source_min: f64,
    pub source_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedDepth {
    pub depth: Image,
    pub fills: Vec<DepthFill>,
}

impl FusedDepth {
    /// Event-pixel depths and LiDAR depths as projected coordinates.
    pub fn to_points(&self) -> ProjectedPoints {
        let w = self.depth.width;
        ProjectedPoints {
            entries: self
                .depth
                .data
                .iter()
                .enumerate()
                .filter(|(_, d)| **d > 0.0)
                .map(|(i, &d)| ProjectedPoint {
                    u: (i % w) as f64,
                    v: (i / w) as f64,
                    d,
                    source: i,
                })
                .collect(),
        }
    }
}

/// Inverse-distance weighted depth at every event from its `k` nearest
/// co-clustered LiDAR points, splatted together with the LiDAR depths
/// (nearest depth wins per pixel).
pub fn fuse_depth(
    lidar: &ProjectedPoints,
    events: &Event2DPoints,
    clusters: &ClusterMap,
    k: usize,
    params: &DistanceParams,
    cam: &CameraIntrinsics,
) -> Result<FusedDepth> {
    check_map(events, lidar, clusters, k)?;
    let members = clusters.members();
    let mut depth = crate::data::splat_depth(lidar, cam);
    let mut fills = Vec::new();
    for (ei, e) in events.entries.iter().enumerate() {
        let Some((x, y)) = cam.pixel_of(e.u, e.v) else { continue };
        let (_, li_members) = &members[clusters.event_assignment[ei]];
        if li_members.is_empty() {
            continue;
        }
        let scored = li_members
            .iter()
            .map(|&li| (cross_modal_distance(e, &lidar.entries[li], params), li))
            .collect();
        let chosen = k_smallest(scored, k);
        let weights: Vec<f64> = chosen.iter().map(|(d, _)| 1.0 / (d + WEIGHT_EPS)).collect();
        let wsum = pairwise_sum(&weights);
        let terms: Vec<f64> = chosen
            .iter()
            .zip(&weights)
            .map(|((_, li), w)| w * lidar.entries[*li].d)
            .collect();
        let lo = chosen
            .iter()
            .map(|(_, li)| lidar.entries[*li].d)
            .fold(f64::INFINITY, f64::min);
        let hi = chosen
            .iter()
            .map(|(_, li)| lidar.entries[*li].d)
            .fold(f64::NEG_INFINITY, f64::max);
        // Guard against rounding pushing a convex combination past its ends.
        let d = (pairwise_sum(&terms) / wsum).clamp(lo, hi);
        let i = y * cam.width + x;
        if depth.data[i] == 0.0 || d < depth.data[i] {
            depth.data[i] = d;
        }
        fills.push(DepthFill {
            event: ei,
            x,
            y,
            depth: d,
            sources: chosen.iter().map(|(_, li)| *li).collect(),
            source_min: lo,
            source_max: hi,
        });
    }
    Ok(FusedDepth { depth, fills })
}

/// Per-frame mean absolute error over pixels with a positive pseudo label,
/// summed over both frames. The gradient covers `pred_t` then `pred_t2`.
pub fn pseudo_label_loss(pred_t: &Image, pse_t: &Image, pred_t2: &Image, pse_t2: &Image) -> Result<LossValue> {
    pred_t.ensure_same_shape(pse_t, "prediction vs pseudo label (t)")?;
    pred_t2.ensure_same_shape(pse_t2, "prediction vs pseudo label (t2)")?;
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(pred_t.data.len() + pred_t2.data.len());
    let mut any = false;
    for (pred, pse) in [(pred_t, pse_t), (pred_t2, pse_t2)] {
        let count = pse.data.iter().filter(|&&d| d > 0.0).count();
        if count == 0 {
            gradient.extend(std::iter::repeat_n(0.0, pred.data.len()));
            continue;
        }
        any = true;
        let n = count as f64;
        let terms: Vec<f64> = pred
            .data
            .iter()
            .zip(&pse.data)
            .map(|(a, &b)| if b > 0.0 { (a - b).abs() } else { 0.0 })
            .collect();
        value += pairwise_sum(&terms) / n;
        gradient.extend(
            pred.data
                .iter()
                .zip(&pse.data)
                .map(|(a, &b)| if b > 0.0 { l1_sign(a - b) / n } else { 0.0 }),
        );
    }
    if !any {
        return Err(Error::EmptyMask("pseudo-label loss"));
    }
    Ok(LossValue { value, gradient })
}

/// Fraction of event-active pixels carrying a positive depth.
pub fn active_coverage(depth: &Image, active: &[u8]) -> f64 {
    let n = active.iter().filter(|&&a| a == 1).count();
    if n == 0 {
        return 0.0;
    }
    let hit = depth
        .data
        .iter()
        .zip(active)
        .filter(|(d, a)| **a == 1 && **d > 0.0)
        .count();
    hit as f64 / n as f64
}
