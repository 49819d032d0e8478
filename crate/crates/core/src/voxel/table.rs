use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::VoxelGridSpec;
use crate::error::{Error, Result};
use crate::geometry::{Camera, WorldPoint};

const MAGIC: &[u8; 8] = b"VFAPTBL\0";
const VERSION: u32 = 1;

/// Inclusive integer pixel box of one projected voxel, clamped to the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VoxelBox2D {
    pub u_min: u16,
    pub v_min: u16,
    pub u_max: u16,
    pub v_max: u16,
    pub valid: bool,
}

impl VoxelBox2D {
    pub const INVALID: VoxelBox2D = VoxelBox2D {
        u_min: 0,
        v_min: 0,
        u_max: 0,
        v_max: 0,
        valid: false,
    };

    pub fn pixel_count(&self) -> usize {
        if !self.valid {
            return 0;
        }
        (self.u_max - self.u_min + 1) as usize * (self.v_max - self.v_min + 1) as usize
    }

    /// Box in the coordinates of a feature map downsampled by `stride`:
    /// floor for the min corner, ceil for the max corner, clamped to the map.
    pub fn scaled(
        &self,
        stride: u32,
        map_width: usize,
        map_height: usize,
    ) -> Option<(usize, usize, usize, usize)> {
        if !self.valid || map_width == 0 || map_height == 0 {
            return None;
        }
        let s = stride as usize;
        let u0 = (self.u_min as usize / s).min(map_width - 1);
        let v0 = (self.v_min as usize / s).min(map_height - 1);
        let u1 = (self.u_max as usize).div_ceil(s).min(map_width - 1);
        let v1 = (self.v_max as usize).div_ceil(s).min(map_height - 1);
        Some((u0, v0, u1, v1))
    }
}

/// Rasterizes the continuous box spanned by a voxel's projected corners.
///
/// Any corner behind the camera invalidates the whole voxel; otherwise the
/// lattice `[floor(u_min), ceil(u_max)]` is intersected with the image.
pub(crate) fn rasterize_corners(camera: &Camera, corners: &[WorldPoint; 8]) -> VoxelBox2D {
    let (mut u_lo, mut v_lo) = (f64::INFINITY, f64::INFINITY);
    let (mut u_hi, mut v_hi) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in corners {
        let Some(p) = camera.project_raw(c.x, c.y, c.z) else {
            return VoxelBox2D::INVALID;
        };
        u_lo = u_lo.min(p.u);
        u_hi = u_hi.max(p.u);
        v_lo = v_lo.min(p.v);
        v_hi = v_hi.max(p.v);
    }
    let w = camera.image_width() as f64;
    let h = camera.image_height() as f64;
    let u0 = u_lo.floor().max(0.0);
    let u1 = u_hi.ceil().min(w - 1.0);
    let v0 = v_lo.floor().max(0.0);
    let v1 = v_hi.ceil().min(h - 1.0);
    if !(u0 <= u1 && v0 <= v1) {
        return VoxelBox2D::INVALID;
    }
    VoxelBox2D {
        u_min: u0 as u16,
        v_min: v0 as u16,
        u_max: u1 as u16,
        v_max: v1 as u16,
        valid: true,
    }
}

/// Per-camera pixel boxes of every voxel in a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionTable {
    grid: VoxelGridSpec,
    image_sizes: Vec<(u32, u32)>,
    stride: u32,
    entries: Vec<VoxelBox2D>,
}

/// Projects the eight corners of every voxel into every camera and records
/// the clamped bounding box. `stride` declares the downsampling factor of the
/// feature maps that will later be pooled with this table.
pub fn build_projection_table(
    grid: &VoxelGridSpec,
    cameras: &[Camera],
    stride: u32,
) -> Result<ProjectionTable> {
    grid.validate()?;
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    for cam in cameras {
        if cam.image_width() > u16::MAX as u32 + 1 || cam.image_height() > u16::MAX as u32 + 1 {
            return Err(Error::InvalidCamera(format!(
                "camera {} image too large for 16-bit boxes",
                cam.id
            )));
        }
    }
    let n = grid.len();
    let mut entries = Vec::with_capacity(n * cameras.len());
    for cam in cameras {
        let boxes: Vec<VoxelBox2D> = (0..n)
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = grid.coords(idx);
                rasterize_corners(cam, &grid.corners(i, j, k))
            })
            .collect();
        entries.extend(boxes);
    }
    Ok(ProjectionTable {
        grid: *grid,
        image_sizes: cameras
            .iter()
            .map(|c| (c.image_width(), c.image_height()))
            .collect(),
        stride,
        entries,
    })
}

impl ProjectionTable {
    /// Assembles a table from precomputed boxes, `entries[cam * grid.len() + voxel]`.
    pub fn from_parts(
        grid: VoxelGridSpec,
        image_sizes: Vec<(u32, u32)>,
        stride: u32,
        entries: Vec<VoxelBox2D>,
    ) -> Result<Self> {
        grid.validate()?;
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        if entries.len() != grid.len() * image_sizes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} cameras x {} voxels needs {} entries, got {}",
                image_sizes.len(),
                grid.len(),
                grid.len() * image_sizes.len(),
                entries.len()
            )));
        }
        for (n, b) in entries.iter().enumerate() {
            let (w, h) = image_sizes[n / grid.len()];
            if b.valid
                && !(b.u_min <= b.u_max
                    && b.v_min <= b.v_max
                    && (b.u_max as u32) < w
                    && (b.v_max as u32) < h)
            {
                return Err(Error::Format(format!(
                    "entry {n} is not a valid in-image box"
                )));
            }
        }
        Ok(Self {
            grid,
            image_sizes,
            stride,
            entries,
        })
    }

    pub fn grid(&self) -> &VoxelGridSpec {
        &self.grid
    }

    pub fn camera_count(&self) -> usize {
        self.image_sizes.len()
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    /// `(width, height)` in full-resolution pixels for each camera.
    pub fn image_sizes(&self) -> &[(u32, u32)] {
        &self.image_sizes
    }

    /// Feature-map size `(width, height)` expected for camera `cam`.
    pub fn map_size(&self, cam: usize) -> (usize, usize) {
        let (w, h) = self.image_sizes[cam];
        ((w / self.stride) as usize, (h / self.stride) as usize)
    }

    pub fn get(&self, cam: usize, voxel: usize) -> VoxelBox2D {
        self.entries[cam * self.grid.len() + voxel]
    }

    pub fn camera_entries(&self, cam: usize) -> &[VoxelBox2D] {
        let n = self.grid.len();
        &self.entries[cam * n..(cam + 1) * n]
    }

    pub fn valid_count(&self, cam: usize) -> usize {
        self.camera_entries(cam).iter().filter(|b| b.valid).count()
    }

    /// Same boxes, re-declared for feature maps at a different stride.
    pub fn with_stride(mut self, stride: u32) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        self.stride = stride;
        Ok(self)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let g = &self.grid;
        for v in [g.origin.x, g.origin.y, g.origin.z] {
            w.write_all(&v.to_le_bytes())?;
        }
        for n in [g.nx, g.ny, g.nz] {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        for v in [g.voxel_l, g.voxel_w, g.voxel_h] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.stride.to_le_bytes())?;
        w.write_all(&(self.image_sizes.len() as u32).to_le_bytes())?;
        for &(iw, ih) in &self.image_sizes {
            w.write_all(&iw.to_le_bytes())?;
            w.write_all(&ih.to_le_bytes())?;
        }
        for b in &self.entries {
            for v in [b.u_min, b.v_min, b.u_max, b.v_max] {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&[b.valid as u8])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a projection table cache".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported table version {version}"
            )));
        }
        let origin = WorldPoint::new(read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
        let (nx, ny, nz) = (
            read_u32(&mut r)? as usize,
            read_u32(&mut r)? as usize,
            read_u32(&mut r)? as usize,
        );
        let dims = (read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?);
        let grid = VoxelGridSpec::new(origin, (nx, ny, nz), dims)?;
        let stride = read_u32(&mut r)?;
        if stride == 0 {
            return Err(Error::Format("zero stride".into()));
        }
        let n_cams = read_u32(&mut r)? as usize;
        let mut image_sizes = Vec::with_capacity(n_cams);
        for _ in 0..n_cams {
            image_sizes.push((read_u32(&mut r)?, read_u32(&mut r)?));
        }
        let total = n_cams * grid.len();
        let mut entries = Vec::with_capacity(total);
        let mut rec = [0u8; 9];
        for _ in 0..total {
            r.read_exact(&mut rec)?;
            let f = |o: usize| u16::from_le_bytes([rec[o], rec[o + 1]]);
            let valid = match rec[8] {
                0 => false,
                1 => true,
                other => return Err(Error::Format(format!("bad validity byte {other}"))),
            };
            entries.push(VoxelBox2D {
                u_min: f(0),
                v_min: f(2),
                u_max: f(4),
                v_max: f(6),
                valid,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after table".into()));
        }
        Self::from_parts(grid, image_sizes, stride, entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
