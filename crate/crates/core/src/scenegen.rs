//! Synthetic calibrated scenes: a camera rig around a rectangular pen, a
//! seeded population of box-shaped animals, and an analytic stand-in for a
//! feature extractor that paints each object's signature over its
//! silhouette.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{Annotation, GroundTruthObject, MeanDims};
use crate::error::{Error, Result};
use crate::geometry::{Camera, Extrinsics, ImagePoint, Intrinsics, Rig, WorldPoint, DEPTH_EPSILON};
use crate::tensor::FeatureMap;
use crate::voxel::VoxelGridSpec;

/// Amplitude of the per-channel noise added to signatures.
pub const SIGNATURE_NOISE: f32 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    /// Pen size `(x, y)` in meters.
    pub extent: [f64; 2],
    /// 1 to 7: four corner cameras first, then up to three over the trough.
    pub n_cameras: usize,
    pub n_objects: usize,
    pub length_range: [f64; 2],
    pub width_range: [f64; 2],
    pub height_range: [f64; 2],
    pub image_width: u32,
    pub image_height: u32,
    /// Focal length in pixels.
    pub focal: f64,
    /// Minimum distance between object centers in meters.
    pub min_separation: f64,
    /// Rejection-sampling budget per object.
    pub max_attempts: usize,
    pub seed: u64,
    pub frame: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            extent: [39.0, 39.0],
            n_cameras: 7,
            n_objects: 15,
            length_range: [2.48, 2.78],
            width_range: [1.1, 1.5],
            height_range: [1.1, 1.5],
            image_width: 1280,
            image_height: 720,
            focal: 640.0,
            min_separation: 3.5,
            max_attempts: 10_000,
            seed: 0,
            frame: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} range {r:?} must be positive and ordered"
        )))
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("length", self.length_range)?;
        check_range("width", self.width_range)?;
        check_range("height", self.height_range)?;
        if !(1..=7).contains(&self.n_cameras) {
            return Err(Error::InvalidParameter(format!(
                "camera count must be between 1 and 7, got {}",
                self.n_cameras
            )));
        }
        let margin = self.margin();
        if !(self.extent[0] > 2.0 * margin && self.extent[1] > 2.0 * margin) {
            return Err(Error::InvalidParameter(format!(
                "extent {:?} cannot hold objects up to {} m long",
                self.extent, self.length_range[1]
            )));
        }
        if self.image_width == 0 || self.image_height == 0 || !(self.focal > 0.0) {
            return Err(Error::InvalidParameter(
                "image size and focal length must be positive".into(),
            ));
        }
        if !(self.min_separation >= 0.0) {
            return Err(Error::InvalidParameter(
                "minimum separation must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn margin(&self) -> f64 {
        self.length_range[1] / 2.0
    }

    /// Midpoints of the dimension ranges.
    pub fn mean_dims(&self) -> MeanDims {
        MeanDims {
            l: (self.length_range[0] + self.length_range[1]) / 2.0,
            w: (self.width_range[0] + self.width_range[1]) / 2.0,
            h: (self.height_range[0] + self.height_range[1]) / 2.0,
        }
    }

    /// 0.25 m cells over the pen, five 0.32 m layers.
    pub fn grid(&self) -> VoxelGridSpec {
        VoxelGridSpec {
            origin: WorldPoint::new(0.0, 0.0, 0.0),
            nx: (self.extent[0] / 0.25).ceil() as usize,
            ny: (self.extent[1] / 0.25).ceil() as usize,
            nz: 5,
            voxel_l: 0.25,
            voxel_w: 0.25,
            voxel_h: 0.32,
        }
    }

    /// Camera rig: corner cameras 1 m outside the pen at 6 m looking at the
    /// center, trough cameras at 4 m along the south edge looking north.
    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let [ex, ey] = self.extent;
        let center = WorldPoint::new(ex / 2.0, ey / 2.0, 0.0);
        let mut poses = vec![
            (WorldPoint::new(-1.0, -1.0, 6.0), center),
            (WorldPoint::new(ex + 1.0, -1.0, 6.0), center),
            (WorldPoint::new(ex + 1.0, ey + 1.0, 6.0), center),
            (WorldPoint::new(-1.0, ey + 1.0, 6.0), center),
        ];
        for x in [ex / 3.0, ex / 2.0, 2.0 * ex / 3.0] {
            poses.push((
                WorldPoint::new(x, -1.0, 4.0),
                WorldPoint::new(x, ey / 3.0, 0.0),
            ));
        }
        let k = Intrinsics::new(
            self.focal,
            self.focal,
            self.image_width as f64 / 2.0,
            self.image_height as f64 / 2.0,
        )?;
        poses
            .into_iter()
            .take(self.n_cameras)
            .enumerate()
            .map(|(id, (eye, target))| {
                Camera::new(
                    id as u32,
                    k,
                    Extrinsics::look_at(eye, target)?,
                    self.image_width,
                    self.image_height,
                )
            })
            .collect()
    }
}

/// One synthetic frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub frame: u64,
    pub cameras: Vec<Camera>,
    pub objects: Vec<GroundTruthObject>,
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Seeded scene: positions uniform in the pen (keeping the longest object
/// inside), rejected when closer than `min_separation` to an earlier object;
/// dims uniform in their ranges, yaw uniform in `[0, 2π)`.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let cameras = cfg.cameras()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.margin();
    let mut objects: Vec<GroundTruthObject> = Vec::with_capacity(cfg.n_objects);
    let mut attempts = 0usize;
    while objects.len() < cfg.n_objects {
        let x = rng.random_range(m..cfg.extent[0] - m);
        let y = rng.random_range(m..cfg.extent[1] - m);
        attempts += 1;
        let clear = objects
            .iter()
            .all(|o| (o.center[0] - x).hypot(o.center[1] - y) >= cfg.min_separation);
        if !clear {
            if attempts >= cfg.max_attempts * cfg.n_objects {
                return Err(Error::PlacementFailure {
                    placed: objects.len(),
                    requested: cfg.n_objects,
                    attempts,
                });
            }
            continue;
        }
        let dims = [
            uniform(&mut rng, cfg.length_range),
            uniform(&mut rng, cfg.width_range),
            uniform(&mut rng, cfg.height_range),
        ];
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        objects.push(GroundTruthObject {
            id: objects.len() as i64,
            center: [x, y],
            dims,
            yaw,
        });
    }
    Ok(Scene {
        frame: cfg.frame,
        cameras,
        objects,
    })
}

/// Channel signature of an object: one-hot at `id mod channels` plus small
/// non-negative noise seeded by the id.
pub fn signature(id: i64, channels: usize) -> Vec<f32> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(0x5157_u64 ^ (id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut s: Vec<f32> = (0..channels)
        .map(|_| SIGNATURE_NOISE * rng.random::<f32>())
        .collect();
    if channels > 0 {
        s[id.rem_euclid(channels as i64) as usize] += 1.0;
    }
    s
}

/// Ray parameter at which a ray enters an object's box, if it does so in
/// front of the origin.
pub fn ray_box_entry(
    origin: Vector3<f64>,
    dir: Vector3<f64>,
    o: &GroundTruthObject,
) -> Option<f64> {
    let (s, c) = o.yaw.sin_cos();
    let rel = origin - Vector3::new(o.center[0], o.center[1], o.dims[2] / 2.0);
    // World to object frame: rotate by -yaw about z.
    let lo = Vector3::new(c * rel.x + s * rel.y, -s * rel.x + c * rel.y, rel.z);
    let ld = Vector3::new(c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z);
    let half = [o.dims[0] / 2.0, o.dims[1] / 2.0, o.dims[2] / 2.0];
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        if ld[a].abs() < 1e-15 {
            if lo[a].abs() > half[a] {
                return None;
            }
            continue;
        }
        let (ta, tb) = ((-half[a] - lo[a]) / ld[a], (half[a] - lo[a]) / ld[a]);
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    (t0 <= t1 && t0 > DEPTH_EPSILON).then_some(t0)
}

/// Pixel bounding box `[u0, u1, v0, v1]` of an object's projected corners,
/// padded by one pixel. `None` when a corner is not in front of the camera.
fn image_bounds(camera: &Camera, o: &GroundTruthObject) -> Option<[f64; 4]> {
    let (s, c) = o.yaw.sin_cos();
    let mut b = [
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    ];
    for (a, bb) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        let (lx, ly) = (a * o.dims[0] / 2.0, bb * o.dims[1] / 2.0);
        for z in [0.0, o.dims[2]] {
            let p = WorldPoint::new(
                o.center[0] + c * lx - s * ly,
                o.center[1] + s * lx + c * ly,
                z,
            );
            let px = camera.project_point(p).ok()?;
            b = [
                b[0].min(px.u),
                b[1].max(px.u),
                b[2].min(px.v),
                b[3].max(px.v),
            ];
        }
    }
    Some([b[0] - 1.0, b[1] + 1.0, b[2] - 1.0, b[3] + 1.0])
}

/// Renders one view at `1 / stride` resolution. Feature pixel `(x, y)`
/// samples the image point `(x * stride, y * stride)` and takes the
/// signature of the first box its ray enters; background is zero.
pub fn render_view(
    camera: &Camera,
    objects: &[GroundTruthObject],
    channels: usize,
    stride: u32,
) -> Result<FeatureMap> {
    if stride == 0
        || !camera.image_width().is_multiple_of(stride)
        || !camera.image_height().is_multiple_of(stride)
    {
        return Err(Error::ShapeMismatch(format!(
            "stride {stride} does not divide the {}x{} image of camera {}",
            camera.image_width(),
            camera.image_height(),
            camera.id
        )));
    }
    let (w, h) = (
        (camera.image_width() / stride) as usize,
        (camera.image_height() / stride) as usize,
    );
    let sigs: Vec<Vec<f32>> = objects.iter().map(|o| signature(o.id, channels)).collect();
    let origin = camera.center().to_vector();
    let s = stride as f64;
    let mut out = FeatureMap::zeros(channels, h, w);
    let plane = w * h;
    let bounds: Vec<Option<[f64; 4]>> = objects.iter().map(|o| image_bounds(camera, o)).collect();
    let hits: Vec<Option<usize>> = (0..plane)
        .into_par_iter()
        .map(|p| {
            let (u, v) = ((p % w) as f64 * s, (p / w) as f64 * s);
            let dir = camera.ray(ImagePoint::new(u, v));
            objects
                .iter()
                .enumerate()
                .filter(|(k, _)| {
                    bounds[*k].is_none_or(|b| u >= b[0] && u <= b[1] && v >= b[2] && v <= b[3])
                })
                .filter_map(|(k, o)| ray_box_entry(origin, dir, o).map(|t| (t, k)))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, k)| k)
        })
        .collect();
    for (p, hit) in hits.into_iter().enumerate() {
        if let Some(k) = hit {
            for (c, v) in sigs[k].iter().enumerate() {
                out.data[c * plane + p] = *v;
            }
        }
    }
    Ok(out)
}

/// Renders every camera of a scene.
pub fn render_feature_views(
    scene: &Scene,
    channels: usize,
    stride: u32,
) -> Result<Vec<FeatureMap>> {
    scene
        .cameras
        .iter()
        .map(|cam| render_view(cam, &scene.objects, channels, stride))
        .collect()
}

/// Paths written by [`export_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedScene {
    pub calibration: PathBuf,
    pub annotation: PathBuf,
    pub features: Vec<PathBuf>,
}

pub const CALIBRATION_FILE: &str = "calibration.json";
pub const ANNOTATION_FILE: &str = "annotation.json";

pub fn feature_file(camera_id: u32) -> String {
    format!("view_{camera_id}.tensor")
}

/// Writes `calibration.json`, `annotation.json` and, when given, one
/// `view_<id>.tensor` per camera.
pub fn export_scene(
    scene: &Scene,
    dir: impl AsRef<Path>,
    features: Option<&[FeatureMap]>,
) -> Result<ExportedScene> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let calibration = dir.join(CALIBRATION_FILE);
    Rig {
        cameras: scene.cameras.clone(),
    }
    .save(&calibration)?;
    let annotation = dir.join(ANNOTATION_FILE);
    Annotation {
        frame: scene.frame,
        objects: scene.objects.clone(),
    }
    .save(&annotation)?;
    let mut paths = Vec::new();
    if let Some(maps) = features {
        if maps.len() != scene.cameras.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature maps for {} cameras",
                maps.len(),
                scene.cameras.len()
            )));
        }
        for (cam, map) in scene.cameras.iter().zip(maps) {
            let p = dir.join(feature_file(cam.id));
            map.to_tensor().save(&p)?;
            paths.push(p);
        }
    }
    Ok(ExportedScene {
        calibration,
        annotation,
        features: paths,
    })
}

/// Reads back a scene written by [`export_scene`].
pub fn load_scene(dir: impl AsRef<Path>) -> Result<Scene> {
    let dir = dir.as_ref();
    let rig = Rig::load(dir.join(CALIBRATION_FILE))?;
    let ann = Annotation::load(dir.join(ANNOTATION_FILE))?;
    Ok(Scene {
        frame: ann.frame,
        cameras: rig.cameras,
        objects: ann.objects,
    })
}

/// Reads the feature tensors of an exported scene, in camera order.
pub fn load_features(dir: impl AsRef<Path>, scene: &Scene) -> Result<Vec<FeatureMap>> {
    scene
        .cameras
        .iter()
        .map(|c| {
            FeatureMap::from_tensor(crate::tensor::Tensor::load(
                dir.as_ref().join(feature_file(c.id)),
            )?)
        })
        .collect()
}
