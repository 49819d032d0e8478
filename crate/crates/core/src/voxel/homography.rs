use rayon::prelude::*;

use super::VoxelGridSpec;
use crate::error::{Error, Result};
use crate::geometry::{apply_homography, Camera};
use crate::sampling::Taps;
use crate::tensor::{FeatureMap, GroundFeature};

/// Plane-homography baseline: every BEV cell center `(x, y)` is mapped into
/// each view through the homography of each plane height and the feature map
/// is sampled bilinearly at that pixel (divided by `stride`).
///
/// A single height of `0.0` is the classic ground-plane projection; several
/// heights give the multi-height variant. Output channel
/// `(cam * heights.len() + h) * C + c`.
pub fn homography_aggregate(
    cameras: &[Camera],
    maps: &[FeatureMap],
    heights: &[f64],
    bev: &VoxelGridSpec,
    stride: u32,
) -> Result<GroundFeature> {
    bev.validate()?;
    if cameras.len() != maps.len() || cameras.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} cameras but {} feature maps",
            cameras.len(),
            maps.len()
        )));
    }
    if heights.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one plane height is required".into(),
        ));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    let channels = maps[0].channels;
    for (cam, map) in cameras.iter().zip(maps) {
        let (mw, mh) = (
            (cam.image_width() / stride) as usize,
            (cam.image_height() / stride) as usize,
        );
        if map.channels != channels || map.width != mw || map.height != mh {
            return Err(Error::ShapeMismatch(format!(
                "camera {} expects a {channels}x{mh}x{mw} map, got {}x{}x{}",
                cam.id, map.channels, map.height, map.width
            )));
        }
    }
    let plane = bev.cells();
    let s = stride as f64;
    let mut blocks: Vec<Vec<f32>> = Vec::with_capacity(cameras.len() * heights.len());
    for (cam, map) in cameras.iter().zip(maps) {
        for &h in heights {
            let hm = cam.ground_homography(h)?;
            // Sampling taps are shared by all channels.
            let taps: Vec<Option<Taps>> = (0..plane)
                .into_par_iter()
                .map(|p| {
                    let (x, y) = bev.cell_center(p % bev.nx, p / bev.nx);
                    apply_homography(&hm, x, y)
                        .and_then(|px| Taps::new(map.width, map.height, px.u / s, px.v / s))
                })
                .collect();
            let mut block = vec![0.0f32; channels * plane];
            for (c, dst) in block.chunks_mut(plane).enumerate() {
                let src = map.channel(c);
                dst.par_iter_mut().zip(taps.par_iter()).for_each(|(d, t)| {
                    if let Some(t) = t {
                        *d = t.sample(src) as f32;
                    }
                });
            }
            blocks.push(block);
        }
    }
    GroundFeature::from_vec(blocks.len() * channels, bev.ny, bev.nx, blocks.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Extrinsics, Intrinsics, WorldPoint};

    fn oblique_camera() -> Camera {
        let ext = Extrinsics::look_at(
            WorldPoint::new(-4.0, -3.0, 5.0),
            WorldPoint::new(5.0, 5.0, 0.0),
        )
        .unwrap();
        Camera::new(
            0,
            Intrinsics::new(300.0, 300.0, 160.0, 120.0).unwrap(),
            ext,
            320,
            240,
        )
        .unwrap()
    }

    #[test]
    fn ground_disc_peaks_at_its_cell() {
        let cam = oblique_camera();
        let bev = VoxelGridSpec::new(
            WorldPoint::new(0.0, 0.0, 0.0),
            (40, 40, 1),
            (0.25, 0.25, 1.0),
        )
        .unwrap();
        let (x0, y0) = (5.125, 4.875);
        // Render a ground-level disc of radius 0.4 m: a pixel is lit when its
        // ground back-projection falls inside the disc.
        let mut map = FeatureMap::zeros(1, 240, 320);
        for v in 0..240 {
            for u in 0..320 {
                if let Ok(g) = cam
                    .backproject_to_plane(crate::geometry::ImagePoint::new(u as f64, v as f64), 0.0)
                {
                    if (g.x - x0).hypot(g.y - y0) < 0.4 {
                        map.set(0, v, u, 1.0);
                    }
                }
            }
        }
        let g = homography_aggregate(&[cam], &[map], &[0.0], &bev, 1).unwrap();
        let max = g.data.iter().cloned().fold(f32::MIN, f32::max);
        let (ci, cj) = bev.cell_of(x0, y0).unwrap();
        assert_eq!(g.get(0, cj, ci), max);
        // Cells well outside the disc read nothing.
        assert_eq!(g.get(0, cj, ci + 4), 0.0);
    }

    #[test]
    fn channel_layout_and_errors() {
        let cam = oblique_camera();
        let bev =
            VoxelGridSpec::new(WorldPoint::new(0.0, 0.0, 0.0), (8, 6, 1), (1.0, 1.0, 1.0)).unwrap();
        let map =
            FeatureMap::from_vec(2, 60, 80, [vec![1.0; 4800], vec![2.0; 4800]].concat()).unwrap();
        let g = homography_aggregate(
            std::slice::from_ref(&cam),
            std::slice::from_ref(&map),
            &[0.0, 0.5, 1.0],
            &bev,
            4,
        )
        .unwrap();
        assert_eq!((g.channels, g.height, g.width), (6, 6, 8));
        // A cell seen in the image interior reads the constant of its channel.
        let (i, j) = (5, 5);
        for h in 0..3 {
            assert!((g.get(h * 2, j, i) - 1.0).abs() < 1e-6);
            assert!((g.get(h * 2 + 1, j, i) - 2.0).abs() < 1e-6);
        }
        assert!(homography_aggregate(
            std::slice::from_ref(&cam),
            std::slice::from_ref(&map),
            &[],
            &bev,
            4
        )
        .is_err());
        assert!(homography_aggregate(
            std::slice::from_ref(&cam),
            std::slice::from_ref(&map),
            &[0.0],
            &bev,
            1
        )
        .is_err());
        assert!(homography_aggregate(&[cam], &[], &[0.0], &bev, 4).is_err());
    }
}
