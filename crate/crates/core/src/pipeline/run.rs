use std::collections::BTreeMap;
use std::time::Instant;

use super::config::PipelineConfig;
use super::metrics::{metric_acc, metric_epe, ACC_THRESHOLD_2D, ACC_THRESHOLD_3D};
use super::report::{LossReport, MetricsReport, Report, StatsReport};
use super::synth::SyntheticScene;
use crate::correlation::{
    build_correlation_2d, build_correlation_3d, densify_flow, encode_cloud, encode_image, fuse_correlation,
    is_sentinel, kl_alignment_loss, occlusion_mask_2d, occlusion_mask_3d, photometric_loss, sample_points,
    scene_flow_from_samples, soft_argmax_flow, AxisOffsets, CorrelationVolume, FeatureMap, FusedCorrelation, ImageTerm,
    Modality, PointTerm, SampleFlow, SampleSet, SENTINEL,
};
use crate::data::{
    backproject_depth, project_points, rgb_to_yuv, splat_depth, voxelize_events, CameraIntrinsics, EventStream,
    FlowField2D, FlowField3D, Image, Mask, PointCloud, ProjectedPoints, Semantics,
};
use crate::error::{Error, Result};
use crate::luminance::{accumulate_intensity, adversarial_loss, consistency_loss, fuse_rgb, valid_mask};
use crate::spatial::PointGrid;
use crate::structure::{
    active_coverage, cluster_neighbors, fill_boundary, fuse_depth, normalize_event_coords, pseudo_label_loss, DepthFill,
};

/// Ground truth used for metrics.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Optical flow from `t` to `t2` per pixel of frame `t`.
    pub flow: FlowField2D,
    /// 1 where the pixel stays visible at `t2`.
    pub occlusion: Option<Mask>,
    /// Rigid scene translation, for the 3D metrics.
    pub translation: Option<[f64; 3]>,
}

/// One pair of frames with the surrounding sensor data.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub camera: CameraIntrinsics,
    pub frame_t: Image,
    pub frame_t2: Image,
    /// Events over `[w0, t2]`: `[w0, t]` belongs to frame `t`, `[t, t2]` to `t2`.
    pub events: EventStream,
    pub t: f64,
    pub t2: f64,
    pub cloud_t: PointCloud,
    pub cloud_t2: PointCloud,
    /// Discriminator scores for the two fused frames.
    pub discriminator: Option<(Vec<f64>, Vec<f64>)>,
    pub ground_truth: Option<GroundTruth>,
}

impl From<&SyntheticScene> for PipelineInputs {
    fn from(s: &SyntheticScene) -> Self {
        PipelineInputs {
            camera: s.camera,
            frame_t: s.frame_t.clone(),
            frame_t2: s.frame_t2.clone(),
            events: s.events.clone(),
            t: s.t,
            t2: s.t2,
            cloud_t: s.cloud_t.clone(),
            cloud_t2: s.cloud_t2.clone(),
            discriminator: None,
            ground_truth: Some(GroundTruth {
                flow: s.gt_flow.clone(),
                occlusion: Some(s.gt_occlusion.clone()),
                translation: Some(s.translation),
            }),
        }
    }
}

impl PipelineInputs {
    fn validate(&self) -> Result<()> {
        let cam = &self.camera;
        cam.validate()?;
        for f in [&self.frame_t, &self.frame_t2] {
            f.validate()?;
            f.expect_semantics(Semantics::Rgb)?;
            if f.width != cam.width || f.height != cam.height {
                return Err(Error::Shape(format!(
                    "frame {}x{} vs camera {}x{}",
                    f.width, f.height, cam.width, cam.height
                )));
            }
        }
        if self.events.width() != cam.width || self.events.height() != cam.height {
            return Err(Error::Shape("event sensor does not match the camera".into()));
        }
        let (w0, w1) = self.events.window();
        if !(w0 <= self.t && self.t < self.t2 && self.t2 <= w1) {
            return Err(Error::Config(format!(
                "frame times {} < {} must lie inside the event window [{w0}, {w1}]",
                self.t, self.t2
            )));
        }
        if let Some(gt) = &self.ground_truth {
            if gt.flow.width != cam.width || gt.flow.height != cam.height {
                return Err(Error::Shape("ground-truth flow does not match the camera".into()));
            }
            if let Some(m) = &gt.occlusion {
                if m.width != cam.width || m.height != cam.height {
                    return Err(Error::Shape("ground-truth occlusion does not match the camera".into()));
                }
            }
        }
        Ok(())
    }
}

/// Luminance stage products.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceOutput {
    pub rgb_t: Image,
    pub rgb_t2: Image,
    pub luma_t: Image,
    pub luma_t2: Image,
    /// Event intensity frames over `[w0, t]` and `[t, t2]`.
    pub intensity_t: Image,
    pub intensity_t2: Image,
    pub clamped: usize,
}

/// Structure stage products.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureOutput {
    pub pseudo_t: Image,
    pub pseudo_t2: Image,
    /// Clouds handed to the correlation stage.
    pub cloud_t: PointCloud,
    pub cloud_t2: PointCloud,
    /// LiDAR coordinates plus the co-clustered events they selected.
    pub densified: Option<ProjectedPoints>,
    pub cluster_labels: Option<Vec<usize>>,
    /// Event depths interpolated at `t`, with their LiDAR sources.
    pub depth_fills: Vec<DepthFill>,
    pub clusters: usize,
    pub cluster_iterations: usize,
    pub clusters_converged: bool,
    pub coverage_raw: f64,
    pub coverage_fused: f64,
}

/// Correlation stage products in one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionOutput {
    pub samples: SampleSet,
    pub offsets: AxisOffsets,
    pub rgb: [CorrelationVolume; 2],
    pub events: Vec<[CorrelationVolume; 2]>,
    pub lidar: [CorrelationVolume; 3],
    pub fused: FusedCorrelation,
    pub flow: SampleFlow,
    pub dense: FlowField2D,
    pub scene_flow: FlowField3D,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: Report,
    pub luminance: LuminanceOutput,
    pub structure: StructureOutput,
    pub forward: MotionOutput,
    pub backward: MotionOutput,
    pub occlusion: Mask,
    pub occlusion_3d: Vec<u8>,
    /// Wall-clock milliseconds per stage; kept out of the report unless
    /// copied in by the caller.
    pub timing: BTreeMap<String, f64>,
}

fn mode_name(cfg: &PipelineConfig) -> &'static str {
    match (cfg.luminance.enabled, cfg.structure.enabled, cfg.motion.enabled) {
        (true, true, true) => "full",
        (false, false, true) => "motion_only",
        (false, false, false) => "no_fusion",
        _ => "custom",
    }
}

pub fn run_luminance(inp: &PipelineInputs, cfg: &PipelineConfig) -> Result<LuminanceOutput> {
    let (w0, _) = inp.events.window();
    let intensity_t = accumulate_intensity(&inp.events, cfg.threshold, Some((w0, inp.t)))?;
    let intensity_t2 = accumulate_intensity(&inp.events, cfg.threshold, Some((inp.t, inp.t2)))?;
    if cfg.luminance.enabled {
        let w = cfg.fusion_weights();
        let (rgb_t, lt) = fuse_rgb(&inp.frame_t, &intensity_t, w)?;
        let (rgb_t2, lt2) = fuse_rgb(&inp.frame_t2, &intensity_t2, w)?;
        Ok(LuminanceOutput {
            rgb_t,
            rgb_t2,
            clamped: lt.clamped + lt2.clamped,
            luma_t: lt.image,
            luma_t2: lt2.image,
            intensity_t,
            intensity_t2,
        })
    } else {
        Ok(LuminanceOutput {
            rgb_t: inp.frame_t.clone(),
            rgb_t2: inp.frame_t2.clone(),
            luma_t: rgb_to_yuv(&inp.frame_t)?.0,
            luma_t2: rgb_to_yuv(&inp.frame_t2)?.0,
            intensity_t,
            intensity_t2,
            clamped: 0,
        })
    }
}

pub fn run_structure(inp: &PipelineInputs, cfg: &PipelineConfig) -> Result<StructureOutput> {
    let cam = &inp.camera;
    let (w0, _) = inp.events.window();
    let ev_t = inp.events.sub_window(w0, inp.t)?;
    let ev_t2 = inp.events.sub_window(inp.t, inp.t2)?;
    let proj_t = project_points(&inp.cloud_t, cam);
    let proj_t2 = project_points(&inp.cloud_t2, cam);
    let raw_t = splat_depth(&proj_t, cam);
    let active = ev_t.activity(ev_t.window());
    let coverage_raw = active_coverage(&raw_t, &active);
    if !cfg.structure.enabled {
        return Ok(StructureOutput {
            pseudo_t2: splat_depth(&proj_t2, cam),
            pseudo_t: raw_t,
            cloud_t: inp.cloud_t.clone(),
            cloud_t2: inp.cloud_t2.clone(),
            densified: None,
            cluster_labels: None,
            depth_fills: Vec::new(),
            clusters: 0,
            cluster_iterations: 0,
            clusters_converged: false,
            coverage_raw,
            coverage_fused: coverage_raw,
        });
    }
    let params = cfg.cluster_params();
    let k = cfg.structure.k;
    let e_t = normalize_event_coords(&ev_t);
    let e_t2 = normalize_event_coords(&ev_t2);
    let map_t = cluster_neighbors(&e_t, &proj_t, cam.width, cam.height, &params)?;
    let map_t2 = cluster_neighbors(&e_t2, &proj_t2, cam.width, cam.height, &params)?;
    let fused_t = fuse_depth(&proj_t, &e_t, &map_t, k, &params.distance, cam)?;
    let fused_t2 = fuse_depth(&proj_t2, &e_t2, &map_t2, k, &params.distance, cam)?;
    let densified = fill_boundary(&proj_t, &e_t, &map_t, k, &params.distance)?;
    Ok(StructureOutput {
        cloud_t: backproject_depth(&fused_t.depth, cam)?,
        cloud_t2: backproject_depth(&fused_t2.depth, cam)?,
        coverage_fused: active_coverage(&fused_t.depth, &active),
        pseudo_t: fused_t.depth,
        pseudo_t2: fused_t2.depth,
        densified: Some(densified.points),
        cluster_labels: Some(map_t.label_image(&e_t, &proj_t, cam.width, cam.height)),
        depth_fills: fused_t.fills,
        clusters: map_t.len(),
        cluster_iterations: map_t.iterations,
        clusters_converged: map_t.converged,
        coverage_raw,
    })
}

fn event_features(ev: &EventStream, cfg: &PipelineConfig) -> Result<Vec<FeatureMap>> {
    let grid = voxelize_events(ev, cfg.motion.slices, cfg.threshold)?;
    (0..grid.slices)
        .map(|i| encode_image(&grid.slice(i), Modality::EventSlice, &cfg.motion.encoder))
        .collect()
}

/// Element-wise mean of several equally shaped profiles; any sentinel wins.
fn mean_profiles(vols: &[&CorrelationVolume]) -> Vec<f64> {
    let n = vols.len() as f64;
    (0..vols[0].scores.len())
        .map(|k| {
            if vols.iter().any(|v| is_sentinel(v.scores[k])) {
                SENTINEL
            } else {
                vols.iter().map(|v| v.scores[k]).sum::<f64>() / n
            }
        })
        .collect()
}

struct Frames<'a> {
    luma_1: &'a Image,
    luma_2: &'a Image,
    events_1: &'a [FeatureMap],
    events_2: &'a [FeatureMap],
    cloud_1: &'a PointCloud,
    cloud_2: &'a PointCloud,
}

fn run_motion(cam: &CameraIntrinsics, fr: &Frames, cfg: &PipelineConfig, seed: u64) -> Result<MotionOutput> {
    let m = &cfg.motion;
    let samples = sample_points(fr.cloud_1, m.samples, cam, seed)?;
    let anchors = samples.anchors();
    let f1 = encode_image(fr.luma_1, Modality::Rgb, &m.encoder)?;
    let f2 = encode_image(fr.luma_2, Modality::Rgb, &m.encoder)?;
    let (rx, ry) = build_correlation_2d(&f1, &f2, &anchors, None, m.radius, m.profile, None)?;
    let mut events = Vec::with_capacity(fr.events_1.len());
    for (i, (a, b)) in fr.events_1.iter().zip(fr.events_2).enumerate() {
        let (ex, ey) = build_correlation_2d(a, b, &anchors, None, m.radius, m.profile, Some(i))?;
        events.push([ex, ey]);
    }
    if fr.cloud_2.is_empty() {
        return Err(Error::EmptyInput("second LiDAR cloud is empty"));
    }
    let grid2 = PointGrid::new(&fr.cloud_2.points, m.encoder.density_radius);
    let lf1 = encode_cloud(fr.cloud_1, &m.encoder)?;
    let lf2 = crate::correlation::encode_cloud_with(&grid2, &m.encoder)?;
    let offsets = AxisOffsets::pixel_matched(m.radius, fr.cloud_1, &samples, cam.f);
    let [lx, ly, lz] = build_correlation_3d(fr.cloud_1, &lf1, &grid2, &lf2, &samples, &offsets, m.rho_max, m.profile)?;
    let fused = if m.enabled {
        let ev: Vec<[&CorrelationVolume; 2]> = events.iter().map(|e| [&e[0], &e[1]]).collect();
        fuse_correlation([&rx, &ry], &ev, [&lx, &ly, &lz])?
    } else {
        FusedCorrelation {
            x: rx.scores.clone(),
            y: ry.scores.clone(),
            z: lz.scores.clone(),
            radius: m.radius,
        }
    };
    let flow = soft_argmax_flow(&fused, &offsets, m.tau)?;
    let dense = densify_flow(cam.width, cam.height, &anchors, &flow);
    let scene_flow = scene_flow_from_samples(&flow, fr.cloud_1, &samples.indices, &samples.uv, cam);
    Ok(MotionOutput {
        samples,
        offsets,
        rgb: [rx, ry],
        events,
        lidar: [lx, ly, lz],
        fused,
        flow,
        dense,
        scene_flow,
    })
}

/// Readout from one modality's profiles alone.
fn single_modality_flows(mo: &MotionOutput, tau: f64) -> Result<[SampleFlow; 3]> {
    let r = mo.fused.radius;
    let z = mo.lidar[2].scores.clone();
    let ex: Vec<&CorrelationVolume> = mo.events.iter().map(|e| &e[0]).collect();
    let ey: Vec<&CorrelationVolume> = mo.events.iter().map(|e| &e[1]).collect();
    let profiles = [
        (mo.rgb[0].scores.clone(), mo.rgb[1].scores.clone()),
        (mean_profiles(&ex), mean_profiles(&ey)),
        (mo.lidar[0].scores.clone(), mo.lidar[1].scores.clone()),
    ];
    let mut out = Vec::with_capacity(3);
    for (x, y) in profiles {
        let c = FusedCorrelation {
            x,
            y,
            z: z.clone(),
            radius: r,
        };
        out.push(soft_argmax_flow(&c, &mo.offsets, tau)?);
    }
    Ok(out.try_into().expect("three readouts"))
}

/// Depth predicted for each pixel of one frame by following the flow into
/// the other frame's pseudo labels (nearest labelled pixel).
fn warp_depth(flow: &FlowField2D, labels: &Image) -> Image {
    let (w, h) = (labels.width, labels.height);
    let pts: Vec<[f64; 3]> = (0..w * h)
        .filter(|&i| labels.data[i] > 0.0)
        .map(|i| [(i % w) as f64, (i / w) as f64, 0.0])
        .collect();
    let mut out = Image::zeros(w, h, 1, Semantics::Depth);
    if pts.is_empty() {
        return out;
    }
    let grid = PointGrid::new(&pts, 4.0);
    for y in 0..h {
        for x in 0..w {
            let (du, dv) = flow.get(x, y);
            let q = [x as f64 + du, y as f64 + dv, 0.0];
            if let Some((j, _)) = grid.nearest(&q) {
                let p = pts[j];
                out.data[y * w + x] = labels.data[p[1] as usize * w + p[0] as usize];
            }
        }
    }
    out
}

fn empty_as_zero(r: Result<f64>) -> Result<f64> {
    match r {
        Err(Error::EmptyMask(_)) => Ok(0.0),
        other => other,
    }
}

/// L = L_pho + l1 L_adv + l2 L_consis + l3 L_pse + l4 L_kl.
pub fn total_loss(pho: f64, adv: f64, consis: f64, pse: f64, kl: f64, w: &super::config::LossWeights) -> f64 {
    pho + w.adversarial * adv + w.consistency * consis + w.pseudo_label * pse + w.alignment * kl
}

fn timed<T>(timing: &mut BTreeMap<String, f64>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    log::debug!("stage {stage} finished in {ms:.1} ms");
    timing.insert(stage.to_string(), ms);
    Ok(out)
}

/// Luminance fusion, structure fusion, correlation fusion and soft-argmax
/// readout in both directions, then every loss and, with ground truth, the
/// flow metrics.
pub fn run_pipeline(inp: &PipelineInputs, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    inp.validate()?;
    let cam = inp.camera;
    let mut timing = BTreeMap::new();

    let lum = timed(&mut timing, "luminance", || run_luminance(inp, cfg))?;
    let st = timed(&mut timing, "structure", || run_structure(inp, cfg))?;

    let (w0, _) = inp.events.window();
    let (fwd, bwd) = timed(&mut timing, "correlation", || {
        let ev_t = inp.events.sub_window(w0, inp.t)?;
        let ev_t2 = inp.events.sub_window(inp.t, inp.t2)?;
        let fe_t = event_features(&ev_t, cfg)?;
        let fe_t2 = event_features(&ev_t2, cfg)?;
        let fwd = run_motion(
            &cam,
            &Frames {
                luma_1: &lum.luma_t,
                luma_2: &lum.luma_t2,
                events_1: &fe_t,
                events_2: &fe_t2,
                cloud_1: &st.cloud_t,
                cloud_2: &st.cloud_t2,
            },
            cfg,
            cfg.seed,
        )?;
        let bwd = run_motion(
            &cam,
            &Frames {
                luma_1: &lum.luma_t2,
                luma_2: &lum.luma_t,
                events_1: &fe_t2,
                events_2: &fe_t,
                cloud_1: &st.cloud_t2,
                cloud_2: &st.cloud_t,
            },
            cfg,
            cfg.seed.wrapping_add(1),
        )?;
        Ok((fwd, bwd))
    })?;

    let start = Instant::now();
    let losses = (|| -> Result<_> {
        let occlusion = occlusion_mask_2d(&fwd.dense, &bwd.dense, cfg.motion.occlusion_tau)?;
        let pts_t: Vec<[f64; 3]> = fwd.samples.indices.iter().map(|&i| st.cloud_t.points[i]).collect();
        let pts_t2: Vec<[f64; 3]> = bwd.samples.indices.iter().map(|&i| st.cloud_t2.points[i]).collect();
        let cell = cfg.motion.encoder.density_radius;
        let grid_s2 = PointGrid::new(&pts_t2, cell);
        let occlusion_3d = occlusion_mask_3d(
            &pts_t,
            &fwd.scene_flow,
            &grid_s2,
            &bwd.scene_flow,
            cfg.motion.occlusion_tau,
        )?;
        let grid_t2 = PointGrid::new(&st.cloud_t2.points, cell);
        let image = (occlusion.count() > 0).then_some(ImageTerm {
            frame_t: &lum.luma_t,
            frame_t2: &lum.luma_t2,
            flow: &fwd.dense,
            mask: &occlusion,
        });
        let point = occlusion_3d.contains(&1).then_some(PointTerm {
            points_t: &pts_t,
            flow: &fwd.scene_flow,
            cloud_t2: &grid_t2,
            mask: &occlusion_3d,
        });
        let (pho, pho_i, pho_p) = if image.is_some() || point.is_some() {
            let p = photometric_loss(image, point)?;
            (p.value, p.image_term, p.point_term)
        } else {
            (0.0, 0.0, 0.0)
        };

        let adv = match &inp.discriminator {
            Some((a, b)) => Some(adversarial_loss(a, b)?.value),
            None => None,
        };
        let ev_t2 = inp.events.sub_window(inp.t, inp.t2)?;
        let cmask = valid_mask(&fwd.dense, &ev_t2)?;
        let consis =
            empty_as_zero(consistency_loss(&lum.luma_t, &lum.intensity_t2, &fwd.dense, &cmask).map(|l| l.value))?;
        let pred_t = warp_depth(&fwd.dense, &st.pseudo_t2);
        let pred_t2 = warp_depth(&bwd.dense, &st.pseudo_t);
        let pse = empty_as_zero(pseudo_label_loss(&pred_t, &st.pseudo_t, &pred_t2, &st.pseudo_t2).map(|l| l.value))?;
        let ev: Vec<[&CorrelationVolume; 2]> = fwd.events.iter().map(|e| [&e[0], &e[1]]).collect();
        let kl = kl_alignment_loss([&fwd.lidar[0], &fwd.lidar[1]], [&fwd.rgb[0], &fwd.rgb[1]], &ev)?.value;
        let total = total_loss(pho, adv.unwrap_or(0.0), consis, pse, kl, &cfg.loss);
        let report = LossReport {
            total,
            photometric: pho,
            photometric_image: pho_i,
            photometric_point: pho_p,
            adversarial: adv,
            consistency: consis,
            pseudo_label: pse,
            alignment: kl,
        };
        Ok((report, occlusion, occlusion_3d, cmask.count()))
    })()
    .map_err(|e| e.in_stage("losses"))?;
    timing.insert("losses".into(), start.elapsed().as_secs_f64() * 1e3);
    let (loss_report, occlusion, occlusion_3d, consistency_pixels) = losses;

    let metrics = match &inp.ground_truth {
        Some(gt) => Some(evaluate(gt, &fwd, &cfg.motion.tau).map_err(|e| e.in_stage("metrics"))?),
        None => None,
    };

    let stats = StatsReport {
        events_t: inp.events.sub_window(w0, inp.t)?.len(),
        events_t2: inp.events.sub_window(inp.t, inp.t2)?.len(),
        clamped_pixels: lum.clamped,
        lidar_points: inp.cloud_t.len(),
        densified_points: st.cloud_t.len(),
        clusters: st.clusters,
        cluster_iterations: st.cluster_iterations,
        clusters_converged: st.clusters_converged,
        coverage_raw: st.coverage_raw,
        coverage_fused: st.coverage_fused,
        samples: fwd.samples.len(),
        valid_samples: fwd.flow.valid.iter().filter(|&&v| v == 1).count(),
        visible_pixels: occlusion.count(),
        visible_samples: occlusion_3d.iter().filter(|&&v| v == 1).count(),
        consistency_pixels,
    };
    let report = Report {
        mode: mode_name(cfg).to_string(),
        seed: cfg.seed,
        losses: loss_report,
        metrics,
        stats,
        timing: None,
    };
    report.check_finite()?;
    Ok(PipelineOutput {
        report,
        luminance: lum,
        structure: st,
        forward: fwd,
        backward: bwd,
        occlusion,
        occlusion_3d,
        timing,
    })
}

fn sample_epe(flow: &SampleFlow, anchors: &[(usize, usize)], gt: &FlowField2D) -> Result<(f64, f64, usize)> {
    let mut pred = Vec::with_capacity(2 * anchors.len());
    let mut truth = Vec::with_capacity(2 * anchors.len());
    let mut mask = Vec::with_capacity(anchors.len());
    for (s, &(x, y)) in anchors.iter().enumerate() {
        pred.extend([flow.uv[s].0, flow.uv[s].1]);
        let (gu, gv) = gt.get(x, y);
        truth.extend([gu, gv]);
        mask.push((flow.valid[s] == 1 && gt.is_valid(x, y)) as u8);
    }
    let n = mask.iter().filter(|&&m| m == 1).count();
    Ok((
        metric_epe(&pred, &truth, 2, &mask)?,
        metric_acc(&pred, &truth, 2, &mask, ACC_THRESHOLD_2D)?,
        n,
    ))
}

fn evaluate(gt: &GroundTruth, fwd: &MotionOutput, tau: &f64) -> Result<MetricsReport> {
    let anchors = fwd.samples.anchors();
    let (epe_2d, acc_2d, n) = sample_epe(&fwd.flow, &anchors, &gt.flow)?;
    let [rgb, ev, li] = single_modality_flows(fwd, *tau)?;
    let epe_2d_rgb = sample_epe(&rgb, &anchors, &gt.flow)?.0;
    let epe_2d_event = sample_epe(&ev, &anchors, &gt.flow)?.0;
    let epe_2d_lidar = sample_epe(&li, &anchors, &gt.flow)?.0;

    let epe_2d_dense = match &gt.occlusion {
        Some(occ) => {
            let mask: Vec<u8> = (0..occ.data.len())
                .map(|i| occ.data[i] & fwd.dense.valid[i] & gt.flow.valid[i])
                .collect();
            Some(empty_as_zero(metric_epe(&fwd.dense.data, &gt.flow.data, 2, &mask))?)
        }
        None => None,
    };
    let (epe_3d, acc_3d) = match gt.translation {
        Some(s) => {
            let truth: Vec<f64> = (0..fwd.scene_flow.len()).flat_map(|_| s).collect();
            let pred = fwd.scene_flow.flat();
            (
                Some(metric_epe(&pred, &truth, 3, &fwd.scene_flow.valid)?),
                Some(metric_acc(&pred, &truth, 3, &fwd.scene_flow.valid, ACC_THRESHOLD_3D)?),
            )
        }
        None => (None, None),
    };
    Ok(MetricsReport {
        epe_2d,
        acc_2d,
        epe_2d_dense,
        epe_3d,
        acc_3d,
        epe_2d_rgb,
        epe_2d_event,
        epe_2d_lidar,
        evaluated_samples: n,
    })
}
