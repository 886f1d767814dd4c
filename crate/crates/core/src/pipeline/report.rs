use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub photometric: f64,
    pub photometric_image: f64,
    pub photometric_point: f64,
    /// Present only when discriminator scores were supplied.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adversarial: Option<f64>,
    pub consistency: f64,
    pub pseudo_label: f64,
    pub alignment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// End-point error of the sampled 2D readout, pixels.
    pub epe_2d: f64,
    /// Percentage of samples within 1 px.
    pub acc_2d: f64,
    /// Densified flow over pixels visible in both frames.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epe_2d_dense: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epe_3d: Option<f64>,
    /// Percentage of samples within 5 cm.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acc_3d: Option<f64>,
    /// Readouts of each modality on its own.
    pub epe_2d_rgb: f64,
    pub epe_2d_event: f64,
    pub epe_2d_lidar: f64,
    pub evaluated_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub events_t: usize,
    pub events_t2: usize,
    /// Pixels clamped to `[0, 1]` by luminance fusion, both frames.
    pub clamped_pixels: usize,
    pub lidar_points: usize,
    pub densified_points: usize,
    pub clusters: usize,
    pub cluster_iterations: usize,
    pub clusters_converged: bool,
    /// Share of event-active pixels with depth before and after fusion.
    pub coverage_raw: f64,
    pub coverage_fused: f64,
    pub samples: usize,
    pub valid_samples: usize,
    pub visible_pixels: usize,
    pub visible_samples: usize,
    pub consistency_pixels: usize,
}

/// Everything a run reports. Identical inputs give identical reports as
/// long as `timing` stays unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: String,
    pub seed: u64,
    pub losses: LossReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<MetricsReport>,
    pub stats: StatsReport,
    /// Wall-clock milliseconds per stage.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<BTreeMap<String, f64>>,
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut String) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, child, out);
            }
        }
        other => {
            let _ = writeln!(out, "{prefix}: {other}");
        }
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
    }

    /// `key: value` lines with dotted keys, sorted within each section.
    pub fn to_text(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        let mut out = String::new();
        flatten("", &v, &mut out);
        out
    }

    /// Fail on any NaN or infinity and on accuracies outside `[0, 100]`.
    pub fn check_finite(&self) -> Result<()> {
        let l = &self.losses;
        let mut named = vec![
            ("losses.total", l.total),
            ("losses.photometric", l.photometric),
            ("losses.consistency", l.consistency),
            ("losses.pseudo_label", l.pseudo_label),
            ("losses.alignment", l.alignment),
            ("stats.coverage_raw", self.stats.coverage_raw),
            ("stats.coverage_fused", self.stats.coverage_fused),
        ];
        if let Some(a) = l.adversarial {
            named.push(("losses.adversarial", a));
        }
        if let Some(m) = &self.metrics {
            named.extend([
                ("metrics.epe_2d", m.epe_2d),
                ("metrics.acc_2d", m.acc_2d),
                ("metrics.epe_2d_rgb", m.epe_2d_rgb),
                ("metrics.epe_2d_event", m.epe_2d_event),
                ("metrics.epe_2d_lidar", m.epe_2d_lidar),
            ]);
            named.extend(m.epe_2d_dense.map(|v| ("metrics.epe_2d_dense", v)));
            named.extend(m.epe_3d.map(|v| ("metrics.epe_3d", v)));
            named.extend(m.acc_3d.map(|v| ("metrics.acc_3d", v)));
            for acc in [Some(m.acc_2d), m.acc_3d].into_iter().flatten() {
                if !(0.0..=100.0).contains(&acc) {
                    return Err(Error::Domain(format!("accuracy {acc} outside [0, 100]")));
                }
            }
        }
        match named.iter().find(|(_, v)| !v.is_finite()) {
            Some((k, v)) => Err(Error::NonFinite(format!("{k} = {v}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            mode: "full".into(),
            seed: 3,
            losses: LossReport {
                total: 1.5,
                photometric: 0.5,
                photometric_image: 0.25,
                photometric_point: 0.25,
                adversarial: None,
                consistency: 0.1,
                pseudo_label: 0.2,
                alignment: 0.3,
            },
            metrics: None,
            stats: StatsReport {
                events_t: 10,
                events_t2: 12,
                clamped_pixels: 0,
                lidar_points: 5,
                densified_points: 9,
                clusters: 2,
                cluster_iterations: 3,
                clusters_converged: true,
                coverage_raw: 0.1,
                coverage_fused: 0.9,
                samples: 4,
                valid_samples: 4,
                visible_pixels: 100,
                visible_samples: 4,
                consistency_pixels: 7,
            },
            timing: None,
        }
    }

    #[test]
    fn text_lines_are_dotted_key_values() {
        let t = sample().to_text();
        assert!(t.contains("losses.total: 1.5\n"));
        assert!(t.contains("mode: \"full\"\n"));
        assert!(!t.contains("adversarial"));
        assert!(!t.contains("timing"));
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn non_finite_values_are_flagged() {
        let mut r = sample();
        r.losses.alignment = f64::NAN;
        assert!(matches!(r.check_finite(), Err(Error::NonFinite(_))));
        assert!(sample().check_finite().is_ok());
    }
}
