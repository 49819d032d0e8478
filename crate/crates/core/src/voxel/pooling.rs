use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ProjectionTable, VoxelGridSpec};
use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, GroundFeature, Tensor};

/// Voxel features of one camera, layout `[C][nz][ny][nx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelFeature {
    pub channels: usize,
    pub nz: usize,
    pub ny: usize,
    pub nx: usize,
    pub data: Vec<f32>,
}

impl VoxelFeature {
    pub fn voxels(&self) -> usize {
        self.nz * self.ny * self.nx
    }

    /// Feature of channel `c` at voxel flat index `voxel` (grid ordering).
    #[inline]
    pub fn get(&self, c: usize, voxel: usize) -> f32 {
        self.data[c * self.voxels() + voxel]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.channels, self.nz, self.ny, self.nx],
            data: self.data.clone(),
        }
    }
}

/// Summed-area table of one channel, `(h + 1) x (w + 1)`, in f64.
struct Integral {
    w1: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(plane: &[f32], w: usize, h: usize) -> Self {
        let w1 = w + 1;
        let mut sums = vec![0.0f64; w1 * (h + 1)];
        for y in 0..h {
            let mut row = 0.0f64;
            for x in 0..w {
                row += plane[y * w + x] as f64;
                sums[(y + 1) * w1 + x + 1] = sums[y * w1 + x + 1] + row;
            }
        }
        Self { w1, sums }
    }

    /// Sum over the inclusive box `[u0, u1] x [v0, v1]`.
    #[inline]
    fn box_sum(&self, u0: usize, v0: usize, u1: usize, v1: usize) -> f64 {
        let w1 = self.w1;
        self.sums[(v1 + 1) * w1 + u1 + 1]
            - self.sums[v0 * w1 + u1 + 1]
            - self.sums[(v1 + 1) * w1 + u0]
            + self.sums[v0 * w1 + u0]
    }
}

/// Average-pools every camera's feature map over each voxel's projected box.
///
/// The mean is taken over the integer pixel lattice inside the box (the
/// pooled-pixel count is the denominator). Voxels with invalid boxes get the
/// zero vector.
pub fn aggregate_features(
    table: &ProjectionTable,
    maps: &[FeatureMap],
) -> Result<Vec<VoxelFeature>> {
    if maps.len() != table.camera_count() {
        return Err(Error::ShapeMismatch(format!(
            "table covers {} cameras, got {} feature maps",
            table.camera_count(),
            maps.len()
        )));
    }
    let grid = table.grid();
    let n = grid.len();
    let stride = table.stride();
    let mut out = Vec::with_capacity(maps.len());
    for (cam, map) in maps.iter().enumerate() {
        let (iw, ih) = table.image_sizes()[cam];
        let (mw, mh) = table.map_size(cam);
        if iw % stride != 0 || ih % stride != 0 || map.width != mw || map.height != mh {
            return Err(Error::ShapeMismatch(format!(
                "camera {cam}: {iw}x{ih} image at stride {stride} needs a {mw}x{mh} map, got {}x{}",
                map.width, map.height
            )));
        }
        let boxes: Vec<Option<(usize, usize, usize, usize)>> = table
            .camera_entries(cam)
            .iter()
            .map(|b| b.scaled(stride, mw, mh))
            .collect();
        let mut data = vec![0.0f32; map.channels * n];
        for (c, dst) in data.chunks_mut(n).enumerate() {
            let integral = Integral::new(map.channel(c), mw, mh);
            dst.par_iter_mut().zip(boxes.par_iter()).for_each(|(d, b)| {
                if let Some((u0, v0, u1, v1)) = *b {
                    let count = ((u1 - u0 + 1) * (v1 - v0 + 1)) as f64;
                    *d = (integral.box_sum(u0, v0, u1, v1) / count) as f32;
                }
            });
        }
        out.push(VoxelFeature {
            channels: map.channels,
            nz: grid.nz,
            ny: grid.ny,
            nx: grid.nx,
            data,
        });
    }
    Ok(out)
}

/// How voxel features are collapsed along the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollapseMode {
    /// Every (camera, layer) pair becomes its own block of `C` channels.
    Concat,
    Mean,
    Max,
}

impl std::str::FromStr for CollapseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(Self::Concat),
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(Error::InvalidParameter(format!(
                "unknown collapse mode {other:?}"
            ))),
        }
    }
}

/// Channel layout of the output:
///
/// * `Concat`: channel `(cam * nz + k) * C + c`, i.e. `N * nz * C` channels.
/// * `Mean` / `Max`: channel `cam * C + c`, reduced over the `nz` layers.
pub fn collapse_to_bev(vox: &[VoxelFeature], mode: CollapseMode) -> Result<GroundFeature> {
    let Some(first) = vox.first() else {
        return Err(Error::ShapeMismatch("no voxel features to collapse".into()));
    };
    let (c, nz, ny, nx) = (first.channels, first.nz, first.ny, first.nx);
    if let Some(bad) = vox
        .iter()
        .position(|v| (v.channels, v.nz, v.ny, v.nx) != (c, nz, ny, nx))
    {
        return Err(Error::ShapeMismatch(format!(
            "camera {bad} voxel features differ in shape from camera 0"
        )));
    }
    let plane = ny * nx;
    let layer_block = nz * plane;
    match mode {
        CollapseMode::Concat => {
            let mut data = Vec::with_capacity(vox.len() * nz * c * plane);
            for v in vox {
                for k in 0..nz {
                    for ch in 0..c {
                        let start = ch * layer_block + k * plane;
                        data.extend_from_slice(&v.data[start..start + plane]);
                    }
                }
            }
            GroundFeature::from_vec(vox.len() * nz * c, ny, nx, data)
        }
        CollapseMode::Mean | CollapseMode::Max => {
            let mut data = Vec::with_capacity(vox.len() * c * plane);
            for v in vox {
                for ch in 0..c {
                    let layers = &v.data[ch * layer_block..(ch + 1) * layer_block];
                    data.extend((0..plane).map(|p| {
                        let column = (0..nz).map(|k| layers[k * plane + p]);
                        if mode == CollapseMode::Mean {
                            column.sum::<f32>() / nz as f32
                        } else {
                            column.fold(f32::NEG_INFINITY, f32::max)
                        }
                    }));
                }
            }
            GroundFeature::from_vec(vox.len() * c, ny, nx, data)
        }
    }
}

/// Number of BEV channels produced for a grid, camera count, map channels and
/// collapse mode.
pub fn collapsed_channels(
    grid: &VoxelGridSpec,
    cameras: usize,
    channels: usize,
    mode: CollapseMode,
) -> usize {
    match mode {
        CollapseMode::Concat => cameras * grid.nz * channels,
        _ => cameras * channels,
    }
}
