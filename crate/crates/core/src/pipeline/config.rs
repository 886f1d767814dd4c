use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::correlation::{EncoderSpec, ProfileMode};
use crate::error::{Error, Result};
use crate::luminance::FusionWeights;
use crate::structure::{ClusterParams, DistanceParams};

/// Weights of the four loss terms in the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub adversarial: f64,
    pub consistency: f64,
    pub pseudo_label: f64,
    pub alignment: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adversarial: 1.0,
            consistency: 0.1,
            pseudo_label: 1.0,
            alignment: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LuminanceConfig {
    pub enabled: bool,
    pub event_weight: f64,
    pub rgb_weight: f64,
}

impl Default for LuminanceConfig {
    fn default() -> Self {
        LuminanceConfig {
            enabled: true,
            event_weight: 1.0,
            rgb_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureConfig {
    pub enabled: bool,
    pub clusters: usize,
    pub iters: usize,
    /// Spatial normalizer of the joint distance.
    pub n_s: f64,
    /// Neighbors used for boundary filling and depth fusion.
    pub k: usize,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            enabled: true,
            clusters: 256,
            iters: 10,
            n_s: 8.0,
            k: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Fuse event and LiDAR correlations into the RGB profiles. When off the
    /// `x`/`y` readout uses the RGB correlation alone.
    pub enabled: bool,
    pub samples: usize,
    pub radius: usize,
    pub slices: usize,
    /// Soft-argmax temperature.
    pub tau: f64,
    /// Forward-backward tolerance; absent means the motion-adaptive default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub occlusion_tau: Option<f64>,
    /// LiDAR neighbor acceptance radius in metres.
    pub rho_max: f64,
    pub profile: ProfileMode,
    pub encoder: EncoderSpec,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            enabled: true,
            samples: 1000,
            radius: 4,
            slices: 10,
            tau: 1e-6,
            occlusion_tau: None,
            rho_max: 0.5,
            profile: ProfileMode::MaxMarginal,
            encoder: EncoderSpec {
                density_radius: 0.35,
                unit_normalize: true,
                patch_radius: 2,
            },
        }
    }
}

/// Synthetic scene: a textured plane behind an optional textured quad,
/// moving rigidly relative to the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub plane_depth: f64,
    /// Depth change of the plane per metre of height (`dz/dY`).
    pub plane_tilt: f64,
    pub occluder: bool,
    pub occluder_depth: f64,
    /// Occluder footprint in frame `t` pixels: `[u0, v0, u1, v1]`.
    pub occluder_rect: [f64; 4],
    /// Scene displacement between consecutive frames, camera coordinates, metres.
    pub translation: [f64; 3],
    /// Keep every `beam_stride`-th row as a LiDAR beam.
    pub beam_stride: usize,
    /// Fraction of the image height, from the top, without LiDAR returns.
    pub sparse_top: f64,
    pub low_light: bool,
    /// Brightness scale of low-light frames.
    pub gamma: f64,
    pub noise_sigma: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 128,
            height: 128,
            focal: 100.0,
            plane_depth: 10.0,
            plane_tilt: 0.0,
            occluder: true,
            occluder_depth: 5.0,
            occluder_rect: [40.0, 36.0, 84.0, 80.0],
            translation: [0.2, 0.0, 0.0],
            beam_stride: 4,
            sparse_top: 0.0,
            low_light: false,
            gamma: 0.25,
            noise_sigma: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Event contrast threshold `C`.
    pub threshold: f64,
    pub loss: LossWeights,
    pub luminance: LuminanceConfig,
    pub structure: StructureConfig,
    pub motion: MotionConfig,
    pub scene: SceneConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            threshold: 0.03,
            loss: LossWeights::default(),
            luminance: LuminanceConfig::default(),
            structure: StructureConfig::default(),
            motion: MotionConfig::default(),
            scene: SceneConfig::default(),
        }
    }
}

/// Stage toggles used by the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// RGB-only correlation on the raw frames and the raw cloud.
    NoFusion,
    /// Fused correlation on the raw frames and the raw cloud.
    MotionOnly,
    Full,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoFusion => "no_fusion",
            Ablation::MotionOnly => "motion_only",
            Ablation::Full => "full",
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Apply `key=value` overrides with dotted keys, e.g. `motion.tau=1e-3`.
    /// Values are parsed as TOML, falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let value = parse_value(raw.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            set_path(&mut table, &path, value).map_err(|e| Error::Config(format!("override `{item}`: {e}")))?;
        }
        let cfg: PipelineConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fusion_weights(&self) -> FusionWeights {
        FusionWeights {
            event: self.luminance.event_weight,
            rgb: self.luminance.rgb_weight,
        }
    }

    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            clusters: self.structure.clusters,
            iters: self.structure.iters,
            distance: DistanceParams {
                n_s: self.structure.n_s,
            },
            seed: self.seed,
        }
    }

    /// Set the stage toggles for one ablation arm.
    pub fn ablated(&self, arm: Ablation) -> Self {
        let mut cfg = self.clone();
        let (lum, st, mo) = match arm {
            Ablation::NoFusion => (false, false, false),
            Ablation::MotionOnly => (false, false, true),
            Ablation::Full => (true, true, true),
        };
        cfg.luminance.enabled = lum;
        cfg.structure.enabled = st;
        cfg.motion.enabled = mo;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return bad(format!("threshold must be > 0, got {}", self.threshold));
        }
        let l = &self.loss;
        for (name, v) in [
            ("adversarial", l.adversarial),
            ("consistency", l.consistency),
            ("pseudo_label", l.pseudo_label),
            ("alignment", l.alignment),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("loss.{name} must be finite and >= 0, got {v}"));
            }
        }
        self.fusion_weights().validate()?;
        let s = &self.structure;
        if s.clusters == 0 || s.k == 0 {
            return bad("structure.clusters and structure.k must be >= 1".into());
        }
        DistanceParams::new(s.n_s)?;
        let m = &self.motion;
        if m.samples == 0 || m.radius == 0 || m.slices == 0 {
            return bad("motion.samples, motion.radius and motion.slices must be >= 1".into());
        }
        if !(m.tau > 0.0 && m.tau.is_finite()) {
            return bad(format!("motion.tau must be > 0, got {}", m.tau));
        }
        if let Some(t) = m.occlusion_tau {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("motion.occlusion_tau must be > 0, got {t}"));
            }
        }
        if !(m.rho_max > 0.0) {
            return bad(format!("motion.rho_max must be > 0, got {}", m.rho_max));
        }
        if !(m.encoder.density_radius > 0.0) {
            return bad("motion.encoder.density_radius must be > 0".into());
        }
        self.scene.validate()
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width < 2 || self.height < 2 {
            return bad(format!(
                "scene must be at least 2x2, got {}x{}",
                self.width, self.height
            ));
        }
        if !(self.focal > 0.0) || !(self.plane_depth > 0.0) || !(self.occluder_depth > 0.0) {
            return bad("scene focal length and depths must be > 0".into());
        }
        if self.occluder && self.occluder_depth >= self.plane_depth {
            return bad("occluder must be in front of the plane".into());
        }
        if self.beam_stride == 0 {
            return bad("scene.beam_stride must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.sparse_top) {
            return bad(format!("scene.sparse_top must be in [0, 1), got {}", self.sparse_top));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.noise_sigma >= 0.0) {
            return bad("scene.gamma must be in (0, 1] and scene.noise_sigma >= 0".into());
        }
        let cy = self.height as f64 / 2.0;
        let slope = self.plane_tilt / self.focal;
        // The plane must stay in front of the camera on every row.
        for v in [0.0, self.height as f64 - 1.0] {
            if 1.0 - slope * (v - cy) <= 0.0 {
                return bad(format!(
                    "plane tilt {} puts the plane behind the camera",
                    self.plane_tilt
                ));
            }
        }
        if self.translation.iter().any(|t| !t.is_finite()) || self.plane_tilt.is_nan() {
            return bad("scene translation and tilt must be finite".into());
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, path: &[&str], value: toml::Value) -> std::result::Result<(), String> {
    let (last, parents) = path.split_last().ok_or("empty key")?;
    let mut cur = table;
    for p in parents {
        cur = match cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        {
            toml::Value::Table(t) => t,
            _ => return Err(format!("`{p}` is not a table")),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let cfg = PipelineConfig::from_toml("seed = 7\n[motion]\ntau = 0.01\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.motion.tau, 0.01);
        assert_eq!(cfg.motion.radius, 4);
    }

    #[test]
    fn overrides_apply_dotted_keys() {
        let cfg = PipelineConfig::default()
            .with_overrides(&["motion.samples=50", "scene.low_light=true", "profile=x"][..2])
            .unwrap();
        assert_eq!(cfg.motion.samples, 50);
        assert!(cfg.scene.low_light);
        let cfg = cfg.with_overrides(&["motion.profile=zero_slice"]).unwrap();
        assert_eq!(cfg.motion.profile, ProfileMode::ZeroSlice);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
        let d = PipelineConfig::default();
        assert!(d.with_overrides(&["motion.nope=1"]).is_err());
        assert!(d.with_overrides(&["threshold=0"]).is_err());
        assert!(d
            .with_overrides(&["luminance.event_weight=0", "luminance.rgb_weight=0"])
            .is_err());
        assert!(d.with_overrides(&["no_equals"]).is_err());
        assert!(d.with_overrides(&["scene.occluder_depth=20"]).is_err());
    }

    #[test]
    fn ablation_arms_toggle_stages() {
        let d = PipelineConfig::default();
        let n = d.ablated(Ablation::NoFusion);
        assert!(!n.luminance.enabled && !n.structure.enabled && !n.motion.enabled);
        let m = d.ablated(Ablation::MotionOnly);
        assert!(!m.luminance.enabled && !m.structure.enabled && m.motion.enabled);
        assert_eq!(d.ablated(Ablation::Full), d);
    }
}
