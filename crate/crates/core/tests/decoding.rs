use std::f64::consts::TAU;

use proptest::prelude::*;
use vfa::decoding::{decode, DecoderConfig, Detection};
use vfa::encoding::{encode_targets, EncodingParams, GroundTruthObject, MeanDims};
use vfa::geometry::WorldPoint;
use vfa::voxel::VoxelGridSpec;

fn grid() -> VoxelGridSpec {
    VoxelGridSpec::new(
        WorldPoint::new(0.0, 0.0, 0.0),
        (80, 80, 1),
        (0.25, 0.25, 1.6),
    )
    .unwrap()
}

fn mean() -> MeanDims {
    MeanDims::new(2.63, 1.3, 1.3).unwrap()
}

/// Objects on a 5 m lattice with jitter: never closer than the suppression radius.
fn herd() -> impl Strategy<Value = Vec<GroundTruthObject>> {
    prop::collection::btree_set((0usize..3, 0usize..3), 1..=6).prop_flat_map(|slots| {
        let n = slots.len();
        (
            Just(slots),
            prop::collection::vec(
                (
                    -1.0f64..1.0,
                    -1.0f64..1.0,
                    0.0f64..TAU,
                    2.48f64..2.78,
                    1.1f64..1.5,
                    1.1f64..1.5,
                ),
                n,
            ),
        )
            .prop_map(|(slots, params)| {
                slots
                    .into_iter()
                    .zip(params)
                    .enumerate()
                    .map(|(id, ((a, b), (dx, dy, yaw, l, w, h)))| GroundTruthObject {
                        id: id as i64,
                        center: [4.0 + 5.0 * a as f64 + dx, 4.0 + 5.0 * b as f64 + dy],
                        dims: [l, w, h],
                        yaw,
                    })
                    .collect()
            })
    })
}

fn yaw_err(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decode_inverts_encode(objects in herd()) {
        let params = EncodingParams::default();
        let maps = encode_targets(&objects, &grid(), &mean(), &params).unwrap();
        let cfg = DecoderConfig { score_threshold: 0.5, ..Default::default() };
        let dets = decode(&maps, &grid(), &mean(), params.gamma, &cfg).unwrap();
        prop_assert_eq!(dets.len(), objects.len());
        let half_cell = grid().voxel_l / 2.0;
        for o in &objects {
            let d = dets
                .iter()
                .min_by(|a, b| {
                    let da = (a.center[0] - o.center[0]).hypot(a.center[1] - o.center[1]);
                    let db = (b.center[0] - o.center[0]).hypot(b.center[1] - o.center[1]);
                    da.total_cmp(&db)
                })
                .unwrap();
            prop_assert!((d.center[0] - o.center[0]).abs() <= half_cell);
            prop_assert!((d.center[1] - o.center[1]).abs() <= half_cell);
            for a in 0..3 {
                prop_assert!((d.dims[a] - o.dims[a]).abs() <= 1e-6 * o.dims[a]);
            }
            prop_assert!(yaw_err(d.yaw, o.yaw).to_degrees() <= 0.5);
            prop_assert_eq!(d.score, 1.0);
        }
    }

    #[test]
    fn raising_the_threshold_never_adds_detections(
        objects in herd(),
        noise in prop::collection::vec(0.0f32..0.9, 80 * 80),
        lo in 0.0f64..1.0,
        hi in 0.0f64..1.0,
    ) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let mut maps = encode_targets(&objects, &grid(), &mean(), &EncodingParams::default()).unwrap();
        for (c, n) in maps.confidence.iter_mut().zip(&noise) {
            *c = c.max(*n * 0.6);
        }
        let run = |t: f64| -> Vec<Detection> {
            let cfg = DecoderConfig { score_threshold: t, ..Default::default() };
            decode(&maps, &grid(), &mean(), 25.0, &cfg).unwrap()
        };
        let (a, b) = (run(lo), run(hi));
        prop_assert!(b.len() <= a.len());
        for d in &b {
            prop_assert!(a.contains(d));
        }
        // Identical inputs, identical ordering.
        prop_assert_eq!(&a, &run(lo));
    }
}

#[test]
fn detections_are_ranked_by_score() {
    let objects: Vec<GroundTruthObject> = (0..4)
        .map(|k| GroundTruthObject {
            id: k,
            center: [4.0 + 4.0 * k as f64, 10.0],
            dims: [2.6, 1.3, 1.3],
            yaw: 0.3 * k as f64,
        })
        .collect();
    let mut maps = encode_targets(&objects, &grid(), &mean(), &EncodingParams::default()).unwrap();
    let scale = [0.6f32, 0.9, 0.7, 0.8];
    for (o, s) in objects.iter().zip(scale) {
        let (i, j) = vfa::encoding::center_cell(&grid(), 25.0, o).unwrap();
        for dj in -8i64..=8 {
            for di in -8i64..=8 {
                let idx = ((j as i64 + dj) * 80 + i as i64 + di) as usize;
                maps.confidence[idx] *= s;
            }
        }
    }
    let dets = decode(&maps, &grid(), &mean(), 25.0, &DecoderConfig::default()).unwrap();
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    assert_eq!(scores.len(), 4);
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "{scores:?}");
    assert!((dets[0].center[0] - 8.0).abs() < 0.2);
}
