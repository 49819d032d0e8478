//! Voxel grids, their per-camera projection tables, and the feature
//! aggregation operators built on them.

mod homography;
mod pooling;
mod table;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::WorldPoint;

pub use homography::homography_aggregate;
pub use pooling::{
    aggregate_features, collapse_to_bev, collapsed_channels, CollapseMode, VoxelFeature,
};
pub use table::{build_projection_table, ProjectionTable, VoxelBox2D};

/// Axis-aligned voxel grid standing on the ground plane.
///
/// Voxel `(i, j, k)` spans `origin + [i, i+1) * voxel_l` along `x`,
/// `[j, j+1) * voxel_w` along `y` and `[k, k+1) * voxel_h` along `z`. The
/// flat index is `(k * ny + j) * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGridSpec {
    pub origin: WorldPoint,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub voxel_l: f64,
    pub voxel_w: f64,
    pub voxel_h: f64,
}

impl VoxelGridSpec {
    pub fn new(
        origin: WorldPoint,
        (nx, ny, nz): (usize, usize, usize),
        (voxel_l, voxel_w, voxel_h): (f64, f64, f64),
    ) -> Result<Self> {
        let grid = Self {
            origin,
            nx,
            ny,
            nz,
            voxel_l,
            voxel_w,
            voxel_h,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// 39 m x 39 m cattle pen: 156 x 156 x 5 voxels of 0.25 x 0.25 x 0.32 m
    /// (grid height 1.6 m).
    pub fn multiviewc() -> Self {
        Self {
            origin: WorldPoint::new(0.0, 0.0, 0.0),
            nx: 156,
            ny: 156,
            nz: 5,
            voxel_l: 0.25,
            voxel_w: 0.25,
            voxel_h: 0.32,
        }
    }

    /// Pedestrian-scale preset: 25 m x 16 m at 0.1 m cells with 8 layers of
    /// 0.2 m.
    pub fn multiviewx() -> Self {
        Self {
            origin: WorldPoint::new(0.0, 0.0, 0.0),
            nx: 250,
            ny: 160,
            nz: 8,
            voxel_l: 0.1,
            voxel_w: 0.1,
            voxel_h: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidGrid(format!(
                "voxel counts must be at least 1, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        for (name, v) in [
            ("l", self.voxel_l),
            ("w", self.voxel_w),
            ("h", self.voxel_h),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "voxel_{name} must be positive, got {v}"
                )));
            }
        }
        if !self.origin.is_finite() {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    /// Same ground footprint split into `layers` slabs covering `height`.
    pub fn with_layers(&self, layers: usize, height: f64) -> Result<Self> {
        let mut g = *self;
        g.nz = layers;
        g.voxel_h = height / layers.max(1) as f64;
        g.validate()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn extent(&self) -> (f64, f64, f64) {
        (
            self.nx as f64 * self.voxel_l,
            self.ny as f64 * self.voxel_w,
            self.nz as f64 * self.voxel_h,
        )
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize, usize) {
        let i = index % self.nx;
        let j = (index / self.nx) % self.ny;
        let k = index / (self.nx * self.ny);
        (i, j, k)
    }

    /// The eight corners of voxel `(i, j, k)`.
    pub fn corners(&self, i: usize, j: usize, k: usize) -> [WorldPoint; 8] {
        let x0 = self.origin.x + i as f64 * self.voxel_l;
        let y0 = self.origin.y + j as f64 * self.voxel_w;
        let z0 = self.origin.z + k as f64 * self.voxel_h;
        std::array::from_fn(|c| {
            WorldPoint::new(
                x0 + if c & 1 != 0 { self.voxel_l } else { 0.0 },
                y0 + if c & 2 != 0 { self.voxel_w } else { 0.0 },
                z0 + if c & 4 != 0 { self.voxel_h } else { 0.0 },
            )
        })
    }

    /// Ground position of the center of BEV cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.x + (i as f64 + 0.5) * self.voxel_l,
            self.origin.y + (j as f64 + 0.5) * self.voxel_w,
        )
    }

    /// Continuous cell coordinates of a ground position (cell `(i, j)`
    /// spans `[i, i+1) x [j, j+1)`).
    pub fn to_cell_coords(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin.x) / self.voxel_l,
            (y - self.origin.y) / self.voxel_w,
        )
    }

    pub fn from_cell_coords(&self, cx: f64, cy: f64) -> (f64, f64) {
        (
            self.origin.x + cx * self.voxel_l,
            self.origin.y + cy * self.voxel_w,
        )
    }

    /// Cell containing a ground position, if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (cx, cy) = self.to_cell_coords(x, y);
        if cx >= 0.0 && cy >= 0.0 && cx < self.nx as f64 && cy < self.ny as f64 {
            Some((cx.floor() as usize, cy.floor() as usize))
        } else {
            None
        }
    }
}
