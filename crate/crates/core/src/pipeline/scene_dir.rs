//! Scene directories and run artifacts on disk.
//!
//! A scene directory holds `scene.toml` (camera, frame times and optional
//! camera translation and discriminator scores), the two frames as 16-bit
//! PPM, `events.txt`, `cloud_t.txt` and `cloud_t2.txt`. Ground truth is
//! optional: `gt_flow.flo`, `gt_flow_bwd.flo`, `gt_occlusion.pgm`,
//! `gt_depth_t.pgm`, `gt_depth_t2.pgm` and `beam_mask.pgm`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::flowviz::flow_to_rgb;
use super::report::Report;
use super::run::{GroundTruth, PipelineInputs, PipelineOutput};
use super::synth::SyntheticScene;
use crate::correlation::format_correlation;
use crate::data::io::{
    encode_label_pgm, encode_ppm_rgb8, format_densified, load_cloud, load_events, load_flow, load_image, save_cloud,
    save_events, save_flow, save_image,
};
use crate::data::{CameraIntrinsics, Image, Mask, Semantics};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "scene.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Discriminator {
    t: Vec<f64>,
    t2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    camera: CameraIntrinsics,
    t: f64,
    t2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    translation: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    discriminator: Option<Discriminator>,
}

fn mask_image(m: &Mask) -> Image {
    Image {
        width: m.width,
        height: m.height,
        channels: 1,
        semantics: Semantics::Luma,
        data: m.data.iter().map(|&v| v as f64).collect(),
    }
}

fn load_mask(path: &Path) -> Result<Mask> {
    let img = load_image(path, Semantics::Luma)?;
    if img.channels != 1 {
        return Err(Error::Format(format!("{}: mask must be a PGM", path.display())));
    }
    Mask::new(
        img.width,
        img.height,
        img.data.iter().map(|&v| u8::from(v >= 0.5)).collect(),
    )
}

/// Write a generated scene, ground truth included.
pub fn save_scene(dir: impl AsRef<Path>, scene: &SyntheticScene) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        camera: scene.camera,
        t: scene.t,
        t2: scene.t2,
        translation: Some(scene.translation),
        discriminator: None,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Format(format!("scene manifest: {e}")))?;
    fs::write(dir.join(MANIFEST), text)?;
    save_image(dir.join("frame_t.ppm"), &scene.frame_t, true)?;
    save_image(dir.join("frame_t2.ppm"), &scene.frame_t2, true)?;
    save_events(dir.join("events.txt"), &scene.events)?;
    save_cloud(dir.join("cloud_t.txt"), &scene.cloud_t)?;
    save_cloud(dir.join("cloud_t2.txt"), &scene.cloud_t2)?;
    save_flow(dir.join("gt_flow.flo"), &scene.gt_flow)?;
    save_flow(dir.join("gt_flow_bwd.flo"), &scene.gt_flow_bwd)?;
    save_image(dir.join("gt_occlusion.pgm"), &mask_image(&scene.gt_occlusion), false)?;
    save_image(dir.join("beam_mask.pgm"), &mask_image(&scene.beam_mask), false)?;
    save_image(dir.join("gt_depth_t.pgm"), &scene.gt_depth_t, true)?;
    save_image(dir.join("gt_depth_t2.pgm"), &scene.gt_depth_t2, true)?;
    Ok(())
}

/// Read a scene directory. Ground truth is attached when `gt_flow.flo`
/// exists.
pub fn load_scene(dir: impl AsRef<Path>) -> Result<PipelineInputs> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let m: Manifest = toml::from_str(&text).map_err(|e| Error::Format(format!("{MANIFEST}: {e}")))?;
    m.camera.validate()?;
    let cam = m.camera;
    let frame_t = load_image(dir.join("frame_t.ppm"), Semantics::Rgb)?;
    let frame_t2 = load_image(dir.join("frame_t2.ppm"), Semantics::Rgb)?;
    let events = load_events(dir.join("events.txt"), Some((cam.width, cam.height)))?;
    let cloud_t = load_cloud(dir.join("cloud_t.txt"))?;
    let cloud_t2 = load_cloud(dir.join("cloud_t2.txt"))?;
    let gt_path = dir.join("gt_flow.flo");
    let ground_truth = if gt_path.exists() {
        let occ_path = dir.join("gt_occlusion.pgm");
        Some(GroundTruth {
            flow: load_flow(&gt_path)?,
            occlusion: if occ_path.exists() {
                Some(load_mask(&occ_path)?)
            } else {
                None
            },
            translation: m.translation,
        })
    } else {
        None
    };
    Ok(PipelineInputs {
        camera: cam,
        frame_t,
        frame_t2,
        events,
        t: m.t,
        t2: m.t2,
        cloud_t,
        cloud_t2,
        discriminator: m.discriminator.map(|d| (d.t, d.t2)),
        ground_truth,
    })
}

/// Write the report (text and JSON), the dense forward flow with its color
/// coding, and the intermediate products of each stage. Forward correlation
/// profiles are dumped to `correlation.txt` when `correlation` is set.
pub fn save_outputs(dir: impl AsRef<Path>, out: &PipelineOutput, report: &Report, correlation: bool) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.txt"), report.to_text())?;
    fs::write(dir.join("report.json"), report.to_json())?;
    let dense = &out.forward.dense;
    save_flow(dir.join("flow.flo"), dense)?;
    fs::write(
        dir.join("flow.ppm"),
        encode_ppm_rgb8(dense.width, dense.height, &flow_to_rgb(dense, None)),
    )?;
    save_image(dir.join("fused_t.ppm"), &out.luminance.rgb_t, true)?;
    save_image(dir.join("pseudo_depth_t.pgm"), &out.structure.pseudo_t, true)?;
    if let Some(labels) = &out.structure.cluster_labels {
        fs::write(
            dir.join("clusters.pgm"),
            encode_label_pgm(labels, dense.width, dense.height),
        )?;
    }
    if let Some(points) = &out.structure.densified {
        fs::write(dir.join("densified.txt"), format_densified(points))?;
    }
    if !correlation {
        return Ok(());
    }
    let mut dump = String::new();
    for v in out.forward.rgb.iter().chain(&out.forward.lidar) {
        dump.push_str(&format_correlation(v));
    }
    for e in &out.forward.events {
        for v in e {
            dump.push_str(&format_correlation(v));
        }
    }
    fs::write(dir.join("correlation.txt"), dump)?;
    Ok(())
}
