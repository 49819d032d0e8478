mod common;

use common::{arb_camera, camera, oracle_project};
use proptest::prelude::*;
use vfa::encoding::GroundTruthObject;
use vfa::geometry::WorldPoint;
use vfa::scenegen::{render_view, SceneConfig};
use vfa::tensor::FeatureMap;
use vfa::voxel::{
    aggregate_features, build_projection_table, collapse_to_bev, homography_aggregate,
    CollapseMode, ProjectionTable, VoxelBox2D, VoxelGridSpec,
};

/// Lattice bound of a continuous coordinate, tolerant to values within
/// `1e-7` of an integer where floor/ceil is decided by rounding noise.
fn bound_ok(lib: u16, x: f64, ceil: bool, limit: f64) -> bool {
    let mut ok = vec![if ceil { x.ceil() } else { x.floor() }];
    if (x - x.round()).abs() < 1e-7 {
        ok.extend([x.round() - 1.0, x.round(), x.round() + 1.0]);
    }
    ok.iter().any(|v| {
        let clamped = if ceil { v.min(limit) } else { v.max(0.0) };
        clamped == lib as f64
    })
}

#[test]
fn default_table_matches_corner_oracle() {
    let grid = VoxelGridSpec::multiviewc();
    let cams = SceneConfig::default().cameras().unwrap();
    let table = build_projection_table(&grid, &cams, 4).unwrap();
    let mut valid = 0usize;
    for (c, cam) in cams.iter().enumerate() {
        for v in 0..grid.len() {
            let (i, j, k) = grid.coords(v);
            let pts: Option<Vec<[f64; 2]>> = grid
                .corners(i, j, k)
                .iter()
                .map(|p| oracle_project(cam, [p.x, p.y, p.z]))
                .collect();
            let b = table.get(c, v);
            let Some(pts) = pts else {
                assert!(
                    !b.valid,
                    "camera {c} voxel {v} has a corner behind the camera"
                );
                continue;
            };
            let lo_u = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi_u = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let lo_v = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let hi_v = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            let (w, h) = (
                cam.image_width() as f64 - 1.0,
                cam.image_height() as f64 - 1.0,
            );
            let inside = lo_u.floor().max(0.0) <= hi_u.ceil().min(w)
                && lo_v.floor().max(0.0) <= hi_v.ceil().min(h);
            if !inside {
                assert!(!b.valid);
                continue;
            }
            assert!(b.valid, "camera {c} voxel {v}");
            valid += 1;
            assert!(
                bound_ok(b.u_min, lo_u, false, w),
                "camera {c} voxel {v}: {b:?} vs {lo_u}"
            );
            assert!(
                bound_ok(b.u_max, hi_u, true, w),
                "camera {c} voxel {v}: {b:?} vs {hi_u}"
            );
            assert!(
                bound_ok(b.v_min, lo_v, false, h),
                "camera {c} voxel {v}: {b:?} vs {lo_v}"
            );
            assert!(
                bound_ok(b.v_max, hi_v, true, h),
                "camera {c} voxel {v}: {b:?} vs {hi_v}"
            );
        }
    }
    assert!(valid > grid.len());
}

/// Dense double loop over the feature pixels covered by `b` at `stride`.
fn dense_mean(map: &FeatureMap, c: usize, b: &VoxelBox2D, stride: u32) -> f64 {
    let s = stride as f64;
    let u0 = (b.u_min as f64 / s).floor() as usize;
    let v0 = (b.v_min as f64 / s).floor() as usize;
    let u1 = ((b.u_max as f64 / s).ceil() as usize).min(map.width - 1);
    let v1 = ((b.v_max as f64 / s).ceil() as usize).min(map.height - 1);
    let (mut sum, mut n) = (0.0f64, 0usize);
    for v in v0..=v1 {
        for u in u0..=u1 {
            sum += map.get(c, v, u) as f64;
            n += 1;
        }
    }
    sum / n as f64
}

fn arb_box(w: u16, h: u16) -> impl Strategy<Value = VoxelBox2D> {
    (0..w, 0..w, 0..h, 0..h).prop_map(|(a, b, c, d)| VoxelBox2D {
        u_min: a.min(b),
        u_max: a.max(b),
        v_min: c.min(d),
        v_max: c.max(d),
        valid: true,
    })
}

fn one_voxel() -> VoxelGridSpec {
    VoxelGridSpec::new(WorldPoint::new(0.0, 0.0, 0.0), (1, 1, 1), (1.0, 1.0, 1.0)).unwrap()
}

proptest! {
    #[test]
    fn pooling_matches_dense_mean(
        stride in prop::sample::select(vec![1u32, 2, 4]),
        seed in any::<u64>(),
        b in arb_box(256, 256),
    ) {
        let (mw, mh) = (64usize, 64usize);
        let s = stride as u16;
        let b = VoxelBox2D {
            u_min: b.u_min % (64 * s),
            u_max: (b.u_max % (64 * s)).max(b.u_min % (64 * s)),
            v_min: b.v_min % (64 * s),
            v_max: (b.v_max % (64 * s)).max(b.v_min % (64 * s)),
            valid: true,
        };
        let mut state = seed | 1;
        let data: Vec<f32> = (0..2 * mw * mh)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % 10_000) as f32 / 1000.0 - 3.0
            })
            .collect();
        let map = FeatureMap::from_vec(2, mh, mw, data).unwrap();
        let size = (64 * stride, 64 * stride);
        let table = ProjectionTable::from_parts(one_voxel(), vec![size], stride, vec![b]).unwrap();
        let out = aggregate_features(&table, std::slice::from_ref(&map)).unwrap();
        for c in 0..2 {
            let want = dense_mean(&map, c, &b, stride);
            let got = out[0].get(c, 0) as f64;
            prop_assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn shrinking_a_voxel_never_grows_its_box(
        cam in arb_camera(),
        origin in (0.0f64..18.0, 0.0f64..18.0, 0.0f64..1.0),
        size in (0.1f64..2.0, 0.1f64..2.0, 0.1f64..1.0),
        shrink in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.05f64..1.0),
    ) {
        let outer = VoxelGridSpec::new(
            WorldPoint::new(origin.0, origin.1, origin.2), (1, 1, 1), (size.0, size.1, size.2)).unwrap();
        let f = shrink.3;
        let inner = VoxelGridSpec::new(
            WorldPoint::new(
                origin.0 + shrink.0 * (1.0 - f) * size.0,
                origin.1 + shrink.1 * (1.0 - f) * size.1,
                origin.2 + shrink.2 * (1.0 - f) * size.2,
            ),
            (1, 1, 1),
            (f * size.0, f * size.1, f * size.2),
        ).unwrap();
        let a = build_projection_table(&outer, std::slice::from_ref(&cam), 1).unwrap().get(0, 0);
        let b = build_projection_table(&inner, std::slice::from_ref(&cam), 1).unwrap().get(0, 0);
        // An empty box (off-image) is smaller than anything.
        if a.valid && b.valid {
            prop_assert!(b.u_min >= a.u_min && b.v_min >= a.v_min && b.u_max <= a.u_max && b.v_max <= a.v_max);
        }
        if !a.valid && a != VoxelBox2D::INVALID {
            prop_assert!(false, "invalid boxes are canonical");
        }
    }
}

#[test]
fn adding_a_camera_never_loses_coverage() {
    let grid =
        VoxelGridSpec::new(WorldPoint::new(0.0, 0.0, 0.0), (39, 39, 2), (1.0, 1.0, 0.8)).unwrap();
    let cams = SceneConfig::default().cameras().unwrap();
    let covered = |cams: &[vfa::geometry::Camera]| -> Vec<bool> {
        let t = build_projection_table(&grid, cams, 4).unwrap();
        (0..grid.len())
            .map(|v| (0..cams.len()).any(|c| t.get(c, v).valid))
            .collect()
    };
    let full = covered(&cams);
    for drop in 0..cams.len() {
        let subset: Vec<_> = cams
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != drop)
            .map(|(_, c)| c.clone())
            .collect();
        let part = covered(&subset);
        assert!(part.iter().zip(&full).all(|(p, f)| !p || *f));
    }
}

#[test]
fn table_and_ground_features_are_deterministic() {
    let cfg = SceneConfig {
        extent: [12.0, 12.0],
        n_objects: 3,
        seed: 5,
        ..Default::default()
    };
    let scene = vfa::scenegen::generate_scene(&cfg).unwrap();
    let maps = vfa::scenegen::render_feature_views(&scene, 8, 4).unwrap();
    let grid = cfg.grid();
    let run = || {
        let t = build_projection_table(&grid, &scene.cameras, 4).unwrap();
        let mut bytes = Vec::new();
        t.write_to(&mut bytes).unwrap();
        let g = collapse_to_bev(
            &aggregate_features(&t, &maps).unwrap(),
            CollapseMode::Concat,
        )
        .unwrap();
        (
            bytes,
            g.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        )
    };
    assert_eq!(run(), run());
}

/// Response-weighted centroid of a `[H][W]` map on `grid`.
fn centroid(grid: &VoxelGridSpec, r: &[f64]) -> (f64, f64) {
    let (mut m, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let w = r[j * grid.nx + i];
            let (x, y) = grid.cell_center(i, j);
            m += w;
            sx += w * x;
            sy += w * y;
        }
    }
    (sx / m, sy / m)
}

fn channel_sum(g: &vfa::tensor::GroundFeature) -> Vec<f64> {
    let plane = g.width * g.height;
    (0..plane)
        .map(|p| (0..g.channels).map(|c| g.data[c * plane + p] as f64).sum())
        .collect()
}

#[test]
fn vertical_column_concentrates_under_voxel_pooling() {
    let (x0, y0) = (18.0, 16.0);
    let column = GroundTruthObject {
        id: 0,
        center: [x0, y0],
        dims: [0.1, 0.1, 1.4],
        yaw: 0.0,
    };
    let grid = SceneConfig::default().grid();
    let cams = SceneConfig::default().cameras().unwrap();
    let mut consensus: Option<Vec<f64>> = None;
    for cam in &cams {
        let map = render_view(cam, std::slice::from_ref(&column), 4, 4).unwrap();
        assert!(
            map.data.iter().any(|v| *v > 0.0),
            "camera {} misses the column",
            cam.id
        );
        let hom = homography_aggregate(
            std::slice::from_ref(cam),
            std::slice::from_ref(&map),
            &[0.0],
            &grid,
            4,
        )
        .unwrap();
        let table = build_projection_table(&grid, std::slice::from_ref(cam), 4).unwrap();
        let vox = collapse_to_bev(
            &aggregate_features(&table, std::slice::from_ref(&map)).unwrap(),
            CollapseMode::Mean,
        )
        .unwrap();
        let (rh, rv) = (channel_sum(&hom), channel_sum(&vox));
        let (hx, hy) = centroid(&grid, &rh);
        let (vx, vy) = centroid(&grid, &rv);
        let (dh, dv) = ((hx - x0).hypot(hy - y0), (vx - x0).hypot(vy - y0));
        assert!(dh > dv, "camera {}: homography {dh} vs voxel {dv}", cam.id);
        let peak = rv.iter().cloned().fold(0.0, f64::max);
        let norm: Vec<f64> = rv.iter().map(|v| v / peak).collect();
        consensus = Some(match consensus {
            None => norm,
            Some(c) => c.iter().zip(&norm).map(|(a, b)| a.min(*b)).collect(),
        });
    }
    let (cx, cy) = centroid(&grid, &consensus.unwrap());
    assert!((cx - x0).hypot(cy - y0) <= grid.voxel_l, "({cx}, {cy})");
}

#[test]
fn nadir_camera_sees_no_vertical_parallax_at_the_center() {
    let cam = camera([10.0, 10.0, 8.0], [10.0, 10.0, 0.0], 600.0, 640, 480);
    let grid = VoxelGridSpec::new(
        WorldPoint::new(5.0, 5.0, 0.0),
        (40, 40, 4),
        (0.25, 0.25, 0.4),
    )
    .unwrap();
    let table = build_projection_table(&grid, std::slice::from_ref(&cam), 1).unwrap();
    // The column straight below the camera projects to the same pixel at every height.
    let (i, j) = grid.cell_of(10.0, 10.0).unwrap();
    let boxes: Vec<VoxelBox2D> = (0..grid.nz)
        .map(|k| table.get(0, grid.index(i, j, k)))
        .collect();
    for b in &boxes {
        assert!(b.valid && b.u_min <= 320 && b.u_max >= 320 && b.v_min <= 240 && b.v_max >= 240);
    }
}
