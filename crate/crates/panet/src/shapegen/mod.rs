//! Synthetic labeled multi-view datasets: procedural SDF shapes, viewpoint
//! sampling, pose regimes, depth rendering, augmentation, and file I/O.

pub mod augment;
pub mod dataset;
pub mod render;
pub mod sdf;
pub mod shape;
pub mod viewpoints;

pub use augment::augment;
pub use dataset::{
    build_dataset, read_dataset, write_dataset, DatasetFile, MultiViewSample, Regime, Sampler,
};
pub use render::render_view;
pub use sdf::{Primitive, Quat};
pub use shape::{apply_pose_regime, generate_shape, PoseRegime, Shape, NUM_CLASSES};
pub use viewpoints::{sample_viewpoints_fps, sample_viewpoints_random};
