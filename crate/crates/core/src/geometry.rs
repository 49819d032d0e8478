//! Calibrated pinhole cameras, world/image projection and planar homographies.
//!
//! World frame is right-handed with `z` up and the ground at `z = 0`. Camera
//! frames follow the usual computer-vision convention: `x` right, `y` down,
//! `z` along the optical axis.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points whose camera-frame depth is at or below this value (meters) are
/// treated as behind the camera.
pub const DEPTH_EPSILON: f64 = 1e-6;

/// Tolerance on `RᵀR − I` (max-abs entry) and on `det R − 1`.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

const HOMOGRAPHY_MIN_DET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(self, other: ImagePoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::with_skew(fx, fy, cx, cy, 0.0)
    }

    pub fn with_skew(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self> {
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive and finite, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite() && skew.is_finite()) {
            return Err(Error::InvalidIntrinsics(
                "principal point and skew must be finite".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            skew,
        })
    }

    /// Parses an upper-triangular calibration matrix with `K[2][2] = 1`.
    pub fn from_matrix(k: &Matrix3<f64>) -> Result<Self> {
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return Err(Error::InvalidIntrinsics(
                "K must be upper triangular with K[2][2] = 1".into(),
            ));
        }
        Self::with_skew(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)], k[(0, 1)])
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }
}

/// World-to-camera rigid transform, `X_cam = R X_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let residual = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if !(residual < ROTATION_TOLERANCE) || !((det - 1.0).abs() < ROTATION_TOLERANCE) {
            return Err(Error::InvalidRotation { residual, det });
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("translation must be finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera placed at `eye` looking at `target`, with image "up" as close to
    /// world `+z` as possible.
    pub fn look_at(eye: WorldPoint, target: WorldPoint) -> Result<Self> {
        let forward = target.to_vector() - eye.to_vector();
        if forward.norm() < 1e-12 {
            return Err(Error::InvalidCamera("eye and target coincide".into()));
        }
        let forward = forward.normalize();
        let up = Vector3::z();
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            // Looking straight up or down: pick world +x as image right.
            right = Vector3::x();
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation =
            Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye.to_vector());
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates, `-Rᵀt`.
    pub fn center(&self) -> WorldPoint {
        WorldPoint::from_vector(-(self.rotation.transpose() * self.translation))
    }

    fn matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        rt.set_column(3, &self.translation);
        rt
    }
}

/// A calibrated view: intrinsics, pose, image size and the composed
/// projection `P = K [R | t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    pub id: u32,
    intrinsics: Intrinsics,
    extrinsics: Extrinsics,
    image_width: u32,
    image_height: u32,
    projection: Matrix3x4<f64>,
    k_inv: Matrix3<f64>,
}

impl Camera {
    pub fn new(
        id: u32,
        intrinsics: Intrinsics,
        extrinsics: Extrinsics,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        if image_width == 0 || image_height == 0 {
            return Err(Error::InvalidCamera(format!(
                "image size must be at least 1x1, got {image_width}x{image_height}"
            )));
        }
        let k = intrinsics.matrix();
        let projection = k * extrinsics.matrix();
        // The left 3x3 block is K R; its determinant is fx * fy.
        let left = projection.fixed_view::<3, 3>(0, 0).into_owned();
        if left.determinant().abs() < 1e-12 {
            return Err(Error::InvalidCamera(
                "projection matrix is rank deficient".into(),
            ));
        }
        let k_inv = k
            .try_inverse()
            .ok_or_else(|| Error::InvalidIntrinsics("K is not invertible".into()))?;
        Ok(Self {
            id,
            intrinsics,
            extrinsics,
            image_width,
            image_height,
            projection,
            k_inv,
        })
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &Extrinsics {
        &self.extrinsics
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn projection(&self) -> &Matrix3x4<f64> {
        &self.projection
    }

    pub fn center(&self) -> WorldPoint {
        self.extrinsics.center()
    }

    /// Camera-frame depth of a world point (third homogeneous coordinate of
    /// `P X`).
    pub fn depth(&self, p: WorldPoint) -> f64 {
        let r = self.extrinsics.rotation.row(2);
        r[0] * p.x + r[1] * p.y + r[2] * p.z + self.extrinsics.translation.z
    }

    /// Projects a world point to continuous pixel coordinates.
    ///
    /// Returns [`Error::BehindCamera`] when the depth is at most
    /// [`DEPTH_EPSILON`].
    pub fn project_point(&self, p: WorldPoint) -> Result<ImagePoint> {
        self.project_raw(p.x, p.y, p.z).ok_or(Error::BehindCamera)
    }

    #[inline]
    pub(crate) fn project_raw(&self, x: f64, y: f64, z: f64) -> Option<ImagePoint> {
        let h = self.projection * Vector4::new(x, y, z, 1.0);
        if h.z <= DEPTH_EPSILON {
            return None;
        }
        Some(ImagePoint::new(h.x / h.z, h.y / h.z))
    }

    /// True when the pixel lies inside `[0, W) x [0, H)`.
    pub fn in_image(&self, pt: ImagePoint) -> bool {
        pt.u >= 0.0
            && pt.v >= 0.0
            && pt.u < self.image_width as f64
            && pt.v < self.image_height as f64
    }

    /// Homography taking `(x, y, 1)` on the plane `z = plane_height` to
    /// homogeneous pixels.
    pub fn ground_homography(&self, plane_height: f64) -> Result<Matrix3<f64>> {
        let p = &self.projection;
        let third = p.column(2) * plane_height + p.column(3);
        let h = Matrix3::from_columns(&[p.column(0).into_owned(), p.column(1).into_owned(), third]);
        let det = h.determinant();
        if !(det.abs() >= HOMOGRAPHY_MIN_DET) {
            return Err(Error::SingularHomography(det.abs()));
        }
        Ok(h)
    }

    /// World direction of the viewing ray through `pt`, scaled so that the
    /// ray parameter equals camera-frame depth.
    pub fn ray(&self, pt: ImagePoint) -> Vector3<f64> {
        self.extrinsics.rotation.transpose() * (self.k_inv * Vector3::new(pt.u, pt.v, 1.0))
    }

    /// Intersects the viewing ray through `pt` with the plane
    /// `z = plane_height`.
    pub fn backproject_to_plane(&self, pt: ImagePoint, plane_height: f64) -> Result<WorldPoint> {
        let dir = self.ray(pt);
        let origin = self.center().to_vector();
        if dir.z.abs() < 1e-12 {
            return Err(Error::NoIntersection);
        }
        let depth = (plane_height - origin.z) / dir.z;
        if !(depth > DEPTH_EPSILON) || !depth.is_finite() {
            return Err(Error::NoIntersection);
        }
        let hit = origin + dir * depth;
        Ok(WorldPoint::new(hit.x, hit.y, plane_height))
    }
}

/// Applies a plane homography to `(x, y)`; `None` when the mapped point is at
/// or behind the image plane.
pub fn apply_homography(h: &Matrix3<f64>, x: f64, y: f64) -> Option<ImagePoint> {
    let p = h * Vector3::new(x, y, 1.0);
    if p.z <= DEPTH_EPSILON {
        return None;
    }
    Some(ImagePoint::new(p.x / p.z, p.y / p.z))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CameraRecord {
    id: u32,
    image_size: [u32; 2],
    #[serde(rename = "K")]
    k: [[f64; 3]; 3],
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    t: [f64; 3],
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn from_rows(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

impl TryFrom<CameraRecord> for Camera {
    type Error = Error;

    fn try_from(rec: CameraRecord) -> Result<Self> {
        let intrinsics = Intrinsics::from_matrix(&from_rows(&rec.k))?;
        let extrinsics = Extrinsics::new(from_rows(&rec.r), Vector3::from(rec.t))?;
        Camera::new(
            rec.id,
            intrinsics,
            extrinsics,
            rec.image_size[0],
            rec.image_size[1],
        )
    }
}

impl From<Camera> for CameraRecord {
    fn from(cam: Camera) -> Self {
        CameraRecord {
            id: cam.id,
            image_size: [cam.image_width, cam.image_height],
            k: to_rows(&cam.intrinsics.matrix()),
            r: to_rows(&cam.extrinsics.rotation),
            t: cam.extrinsics.translation.into(),
        }
    }
}

/// A calibrated camera rig, serialized as
/// `{"cameras": [{"id", "image_size": [W, H], "K", "R", "t"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rig {
    pub cameras: Vec<Camera>,
}

impl Rig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera(fx: f64, cx: f64, cy: f64, ext: Extrinsics) -> Camera {
        Camera::new(0, Intrinsics::new(fx, fx, cx, cy).unwrap(), ext, 640, 480).unwrap()
    }

    fn oblique() -> Camera {
        let ext = Extrinsics::look_at(
            WorldPoint::new(0.0, 0.0, 6.0),
            WorldPoint::new(15.0, 12.0, 0.0),
        )
        .unwrap();
        camera(500.0, 320.0, 240.0, ext)
    }

    #[test]
    fn optical_axis_point_hits_principal_point() {
        let cam = camera(1.0, 0.0, 0.0, Extrinsics::identity());
        let p = cam.project_point(WorldPoint::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(p, ImagePoint::new(0.0, 0.0));
    }

    #[test]
    fn simple_pinhole_projection() {
        let cam = camera(100.0, 320.0, 240.0, Extrinsics::identity());
        let p = cam.project_point(WorldPoint::new(1.0, 0.0, 2.0)).unwrap();
        assert_eq!(p, ImagePoint::new(370.0, 240.0));
    }

    #[test]
    fn behind_camera_is_rejected() {
        let cam = camera(100.0, 320.0, 240.0, Extrinsics::identity());
        assert!(matches!(
            cam.project_point(WorldPoint::new(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera)
        ));
        assert!(matches!(
            cam.project_point(WorldPoint::new(1.0, 1.0, 0.0)),
            Err(Error::BehindCamera)
        ));
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let mut r = Matrix3::identity();
        r[(0, 1)] = 1e-6;
        assert!(matches!(
            Extrinsics::new(r, Vector3::zeros()),
            Err(Error::InvalidRotation { .. })
        ));
        // Reflection: orthogonal but det = -1.
        let refl = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Extrinsics::new(refl, Vector3::zeros()).is_err());
    }

    #[test]
    fn rejects_bad_intrinsics_and_sizes() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(1.0, 1.0, f64::NAN, 0.0).is_err());
        let k = Intrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(Camera::new(0, k, Extrinsics::identity(), 0, 10).is_err());
    }

    #[test]
    fn homography_matches_projection_on_plane() {
        let cam = oblique();
        for &h in &[0.0, 0.7, 1.4] {
            let hm = cam.ground_homography(h).unwrap();
            for &(x, y) in &[(5.0, 5.0), (12.0, 3.0), (9.5, 14.25)] {
                let a = apply_homography(&hm, x, y).unwrap();
                let b = cam.project_point(WorldPoint::new(x, y, h)).unwrap();
                assert!(a.distance(b) < 1e-9, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn backprojection_inverts_projection() {
        let cam = oblique();
        let p = WorldPoint::new(5.0, 5.0, 0.0);
        let px = cam.project_point(p).unwrap();
        let back = cam.backproject_to_plane(px, 0.0).unwrap();
        assert!((back.x - 5.0).abs() < 1e-9 && (back.y - 5.0).abs() < 1e-9);
        assert_eq!(back.z, 0.0);
    }

    #[test]
    fn elevated_point_lands_elsewhere_on_ground() {
        let cam = oblique();
        let top = WorldPoint::new(8.0, 6.0, 1.4);
        let px = cam.project_point(top).unwrap();
        let ground = cam.backproject_to_plane(px, 0.0).unwrap();
        let shift = (ground.x - top.x).hypot(ground.y - top.y);
        assert!(shift > 0.5, "shift {shift}");
        // A different plane height gives a different ground position.
        let hm0 = cam.ground_homography(0.0).unwrap();
        let hm1 = cam.ground_homography(1.0).unwrap();
        let foot = apply_homography(&hm0, 8.0, 6.0).unwrap();
        let lifted = apply_homography(&hm1, 8.0, 6.0).unwrap();
        assert!(foot.distance(lifted) > 1.0);
    }

    #[test]
    fn ray_parallel_to_plane_has_no_intersection() {
        // Camera at height 2 looking horizontally along +x; the principal
        // ray is parallel to every horizontal plane.
        let ext = Extrinsics::look_at(
            WorldPoint::new(0.0, 0.0, 2.0),
            WorldPoint::new(10.0, 0.0, 2.0),
        )
        .unwrap();
        let cam = camera(500.0, 320.0, 240.0, ext);
        assert!(matches!(
            cam.backproject_to_plane(ImagePoint::new(320.0, 240.0), 0.0),
            Err(Error::NoIntersection)
        ));
        // Pixels above the horizon hit the ground behind the camera.
        assert!(matches!(
            cam.backproject_to_plane(ImagePoint::new(320.0, 100.0), 0.0),
            Err(Error::NoIntersection)
        ));
    }

    #[test]
    fn plane_through_camera_center_is_singular() {
        let ext = Extrinsics::look_at(
            WorldPoint::new(0.0, 0.0, 2.0),
            WorldPoint::new(10.0, 0.0, 0.0),
        )
        .unwrap();
        let cam = camera(500.0, 320.0, 240.0, ext);
        assert!(matches!(
            cam.ground_homography(2.0),
            Err(Error::SingularHomography(_))
        ));
    }

    #[test]
    fn look_at_puts_target_on_principal_point() {
        let cam = oblique();
        let p = cam.project_point(WorldPoint::new(15.0, 12.0, 0.0)).unwrap();
        assert!(p.distance(ImagePoint::new(320.0, 240.0)) < 1e-9);
        // Image "up" is world up: a point above the target projects higher.
        let above = cam.project_point(WorldPoint::new(15.0, 12.0, 1.0)).unwrap();
        assert!(above.v < p.v);
    }

    #[test]
    fn rig_json_round_trip_is_exact() {
        let rig = Rig {
            cameras: vec![oblique()],
        };
        let text = rig.to_json().unwrap();
        assert!(text.contains("\"image_size\""));
        assert!(text.contains("\"K\""));
        let back = Rig::from_json(&text).unwrap();
        assert_eq!(back, rig);
    }

    #[test]
    fn rig_json_rejects_lower_triangular_k() {
        let text = r#"{"cameras":[{"id":0,"image_size":[10,10],
            "K":[[1,0,0],[1,1,0],[0,0,1]],"R":[[1,0,0],[0,1,0],[0,0,1]],"t":[0,0,0]}]}"#;
        assert!(Rig::from_json(text).is_err());
    }
}
