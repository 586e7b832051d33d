//! Virtual LiDAR synthesis with LiDAR-guided depth sampling, a toy
//! domain-adaptation loss stack with reverse-mode gradients, and
//! KITTI-style evaluation.

pub mod geometry;
pub mod scene_sim;
pub mod sampling;
pub mod dataset_io;
pub mod eval;
pub mod da;
pub mod plot;
