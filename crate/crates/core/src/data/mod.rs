//! Domain types, camera geometry, color conversion, event voxelization and
//! file formats shared by every stage.

mod camera;
mod cloud;
pub mod color;
mod events;
mod flow;
mod image;
pub mod io;
mod voxel;

pub use camera::{backproject_depth, project_points, splat_depth, CameraIntrinsics, ProjectedPoint, ProjectedPoints};
pub use cloud::PointCloud;
pub use color::{rgb_to_yuv, yuv_to_rgb};
pub use events::{Event, EventStream, Polarity};
pub use flow::{FlowField2D, FlowField3D};
pub use image::{Image, Mask, Semantics};
pub use voxel::{voxelize_events, EventVoxelGrid};
