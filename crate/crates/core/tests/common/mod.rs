#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use vfa::geometry::{Camera, Extrinsics, Intrinsics, WorldPoint};

/// `K [R | t] X` by explicit sums, independent of the library's matrix path.
pub fn oracle_project(cam: &Camera, p: [f64; 3]) -> Option<[f64; 2]> {
    let r = cam.extrinsics().rotation();
    let t = cam.extrinsics().translation();
    let mut xc = [0.0; 3];
    for i in 0..3 {
        xc[i] = t[i];
        for j in 0..3 {
            xc[i] += r[(i, j)] * p[j];
        }
    }
    if xc[2] <= 1e-6 {
        return None;
    }
    let k = cam.intrinsics();
    Some([
        (k.fx * xc[0] + k.skew * xc[1] + k.cx * xc[2]) / xc[2],
        (k.fy * xc[1] + k.cy * xc[2]) / xc[2],
    ])
}

pub fn camera(eye: [f64; 3], target: [f64; 3], f: f64, w: u32, h: u32) -> Camera {
    let k = Intrinsics::new(f, f, w as f64 / 2.0, h as f64 / 2.0).unwrap();
    let ext = Extrinsics::look_at(
        WorldPoint::new(eye[0], eye[1], eye[2]),
        WorldPoint::new(target[0], target[1], target[2]),
    )
    .unwrap();
    Camera::new(0, k, ext, w, h).unwrap()
}

/// Elevated camera looking down at a point of a 20 m square, with random
/// skewed intrinsics.
pub fn arb_camera() -> impl Strategy<Value = Camera> {
    (
        (-5.0f64..25.0, -5.0f64..25.0, 2.0f64..10.0),
        (2.0f64..18.0, 2.0f64..18.0),
        (300.0f64..1200.0, 0.8f64..1.25, -2.0f64..2.0),
    )
        .prop_filter_map(
            "degenerate pose",
            |((ex, ey, ez), (tx, ty), (f, aspect, skew))| {
                let k = Intrinsics::with_skew(f, f * aspect, 640.0, 360.0, skew).ok()?;
                let ext =
                    Extrinsics::look_at(WorldPoint::new(ex, ey, ez), WorldPoint::new(tx, ty, 0.0))
                        .ok()?;
                Camera::new(0, k, ext, 1280, 720).ok()
            },
        )
}

pub fn rotation_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}
