use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal with unit determinant (orthogonality residual {residual:.3e}, det {det})")]
    InvalidRotation { residual: f64, det: f64 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("point is at or behind the image plane")]
    BehindCamera,
    #[error("plane homography is singular (|det| = {0:.3e})")]
    SingularHomography(f64),
    #[error("viewing ray does not intersect the plane in front of the camera")]
    NoIntersection,
    #[error("invalid voxel grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("object {id} at ({x:.3}, {y:.3}) lies outside the grid")]
    OutOfGrid { id: i64, x: f64, y: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("orientation vector is all zero")]
    DegenerateVector,
    #[error("box has non-positive dimensions")]
    DegenerateBox,
    #[error("could not place {placed} of {requested} objects within {attempts} attempts")]
    PlacementFailure {
        placed: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
