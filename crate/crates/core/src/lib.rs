//! Voxelized 3D feature aggregation for calibrated multiview detection.
//!
//! The crate is organized along the pipeline:
//!
//! * [`geometry`]: pinhole cameras, projection, plane homographies.
//! * [`voxel`]: voxel grids, projection tables, box pooling (the aggregation
//!   operator), vertical collapse and the homography baselines.
//! * [`encoding`]: BEV training targets (confidence, offsets, dimensions,
//!   circular smooth labels) and the heatmap focal loss.
//! * [`decoding`]: BEV maps back to oriented boxes.
//! * [`metrics`]: MODA/MODP, rotated IoU, AP3D/AOS/OS.
//! * [`scenegen`]: synthetic calibrated scenes and analytic feature views.
//! * [`analysis`]: measurements on aggregated features (distortion spread,
//!   occupancy detection).
//!
//! ```
//! use vfa::geometry::{Camera, Extrinsics, Intrinsics, WorldPoint};
//!
//! let k = Intrinsics::new(100.0, 100.0, 320.0, 240.0).unwrap();
//! let cam = Camera::new(0, k, Extrinsics::identity(), 640, 480).unwrap();
//! let px = cam.project_point(WorldPoint::new(1.0, 0.0, 2.0)).unwrap();
//! assert_eq!((px.u, px.v), (370.0, 240.0));
//! ```

// Parameter checks use negated comparisons so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod decoding;
pub mod encoding;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod sampling;
pub mod scenegen;
pub mod tensor;
pub mod voxel;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/aggregation.md")]
    mod aggregation {}
    #[doc = include_str!("../../../book/src/targets.md")]
    mod targets {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
