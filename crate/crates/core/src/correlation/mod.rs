//! Motion correlation in the shared correlation space: per-modality
//! correlation volumes, their KL alignment and fusion, the soft-argmax flow
//! readout, warping, occlusion checks and the photometric loss.

mod features;
mod kl;
mod photometric;
mod readout;
mod volume;

pub(crate) use features::encode_cloud_with;
pub use features::{encode_cloud, encode_image, EncoderSpec, FeatureMap, Modality, SIGMA_FLOOR};
pub use kl::{kl_alignment_loss, kl_softmax, softmax, KlLoss};
pub use photometric::{
    photometric_loss, point_residual, psi, psi_prime, ImageTerm, PhotometricLoss, PointTerm, PSI_EPS, PSI_P,
};
pub use readout::{
    default_occlusion_tolerance, densify_flow, occlusion_mask_2d, occlusion_mask_3d, scene_flow_from_samples,
    soft_argmax, soft_argmax_flow, warp_image, warp_points, SampleFlow,
};
pub use volume::{
    build_correlation_2d, build_correlation_3d, format_correlation, fuse_correlation, is_sentinel, sample_points, Axis,
    AxisOffsets, CorrelationVolume, FusedCorrelation, ProfileMode, SampleSet, SENTINEL,
};
