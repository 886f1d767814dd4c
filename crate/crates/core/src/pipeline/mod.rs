//! Configuration, synthetic scenes, end-to-end orchestration, metrics and
//! reports.

mod config;
mod flowviz;
mod metrics;
mod report;
mod run;
mod scene_dir;
mod synth;

pub use config::{Ablation, LossWeights, LuminanceConfig, MotionConfig, PipelineConfig, SceneConfig, StructureConfig};
pub use flowviz::flow_to_rgb;
pub use metrics::{metric_acc, metric_epe, ACC_THRESHOLD_2D, ACC_THRESHOLD_3D};
pub use report::{LossReport, MetricsReport, Report, StatsReport};
pub use run::{
    run_luminance, run_pipeline, run_structure, total_loss, GroundTruth, LuminanceOutput, MotionOutput, PipelineInputs,
    PipelineOutput, StructureOutput,
};
pub use scene_dir::{load_scene, save_outputs, save_scene, MANIFEST};
pub use synth::{generate_synthetic, SyntheticScene, FRAME_TIMES};
