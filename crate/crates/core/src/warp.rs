//! Inverse warping of an auxiliary frame into the reference view.
//!
//! For every reference pixel `x` with depth `z`, the point `z K^-1 [x; 1]` is
//! moved into the auxiliary camera by the pose, projected with `K`, and the
//! auxiliary image is sampled there. Besides the reconstruction this returns
//! the warped coordinates and their derivatives with respect to `z`, which the
//! objective combines with image gradients.

use crate::error::Result;
use crate::grid::{
    bilinear_sample, ensure_same_dims, CameraModel, ColorImage, DepthMap, Mask, RigidPose,
    ScalarGrid,
};

/// Transformed depths at or below this are treated as behind the camera.
pub const MIN_TRANSFORMED_DEPTH: f64 = 1e-6;

/// Coordinates stored for pixels whose point lands behind the camera.
const BEHIND_CAMERA_COORD: f64 = -1.0;

#[derive(Clone, Debug)]
pub struct WarpResult {
    /// The auxiliary image resampled onto the reference pixel grid.
    pub reconstructed: ColorImage,
    /// True where the warped position is inside the auxiliary image and in
    /// front of its camera.
    pub in_bounds: Mask,
    /// Warped horizontal coordinate in the auxiliary image.
    pub u: ScalarGrid,
    /// Warped vertical coordinate in the auxiliary image.
    pub v: ScalarGrid,
    /// d(u)/d(depth), pixels per meter.
    pub du_dz: ScalarGrid,
    /// d(v)/d(depth), pixels per meter.
    pub dv_dz: ScalarGrid,
}

/// Per-pixel warp geometry without image sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpedPoint {
    pub u: f64,
    pub v: f64,
    pub du_dz: f64,
    pub dv_dz: f64,
    /// Depth of the point in the auxiliary camera.
    pub depth: f64,
    pub in_front: bool,
}

/// Warps reference pixel `(x, y)` at depth `z` into the auxiliary camera.
#[inline]
pub fn warp_point(x: f64, y: f64, z: f64, cam: &CameraModel, pose: &RigidPose) -> WarpedPoint {
    let ray = [(x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0];
    let m = pose.rotate(ray);
    let t = pose.translation();
    let q = [z * m[0] + t[0], z * m[1] + t[1], z * m[2] + t[2]];
    if q[2] <= MIN_TRANSFORMED_DEPTH {
        return WarpedPoint {
            u: BEHIND_CAMERA_COORD,
            v: BEHIND_CAMERA_COORD,
            du_dz: 0.0,
            dv_dz: 0.0,
            depth: q[2],
            in_front: false,
        };
    }
    let inv = 1.0 / q[2];
    let inv2 = inv * inv;
    // q = z m + t, so d(qx/qz)/dz = (mx tz - tx mz) / qz^2
    WarpedPoint {
        u: cam.fx * q[0] * inv + cam.cx,
        v: cam.fy * q[1] * inv + cam.cy,
        du_dz: cam.fx * (m[0] * t[2] - t[0] * m[2]) * inv2,
        dv_dz: cam.fy * (m[1] * t[2] - t[1] * m[2]) * inv2,
        depth: q[2],
        in_front: true,
    }
}

/// Reconstructs the reference view from `target_aux` using `depth`.
pub fn reconstruct(
    target_aux: &ColorImage,
    depth: &DepthMap,
    cam: &CameraModel,
    pose: &RigidPose,
) -> Result<WarpResult> {
    ensure_same_dims(target_aux.dims(), depth.dims())?;
    let (w, h) = depth.dims();
    let n = w * h;
    let mut rgb = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut in_bounds = vec![false; n];
    let mut us = vec![0.0; n];
    let mut vs = vec![0.0; n];
    let mut dus = vec![0.0; n];
    let mut dvs = vec![0.0; n];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let p = warp_point(x as f64, y as f64, depth.values()[i], cam, pose);
            let s = bilinear_sample(target_aux, p.u, p.v);
            for c in 0..3 {
                rgb[c][i] = s.rgb[c];
            }
            in_bounds[i] = s.in_bounds && p.in_front;
            us[i] = p.u;
            vs[i] = p.v;
            dus[i] = p.du_dz;
            dvs[i] = p.dv_dz;
        }
    }

    let [r, g, b] = rgb;
    Ok(WarpResult {
        reconstructed: ColorImage::new([
            ScalarGrid::from_values(w, h, r),
            ScalarGrid::from_values(w, h, g),
            ScalarGrid::from_values(w, h, b),
        ])?,
        in_bounds: Mask::new(w, h, in_bounds)?,
        u: ScalarGrid::from_values(w, h, us),
        v: ScalarGrid::from_values(w, h, vs),
        du_dz: ScalarGrid::from_values(w, h, dus),
        dv_dz: ScalarGrid::from_values(w, h, dvs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> CameraModel {
        CameraModel::new(80.0, 80.0, 15.5, 11.5).unwrap()
    }

    fn random_image(w: usize, h: usize, seed: u64) -> ColorImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ch = || ScalarGrid::from_fn(w, h, |_, _| rng.random::<f64>());
        ColorImage::new([ch(), ch(), ch()]).unwrap()
    }

    #[test]
    fn identity_pose_reproduces_image() {
        let img = random_image(32, 24, 1);
        let depth = DepthMap::new(ScalarGrid::from_fn(32, 24, |x, y| {
            1.0 + 0.1 * (x + y) as f64
        }))
        .unwrap();
        let r = reconstruct(&img, &depth, &cam(), &RigidPose::identity()).unwrap();
        assert_eq!(r.in_bounds.count(), 32 * 24);
        assert!(r
            .du_dz
            .values()
            .iter()
            .chain(r.dv_dz.values())
            .all(|&d| d == 0.0));
        for c in 0..3 {
            for (a, b) in r
                .reconstructed
                .channel(c)
                .values()
                .iter()
                .zip(img.channel(c).values())
            {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lateral_translation_gives_uniform_disparity() {
        let c = cam();
        let (tx, d) = (0.25, 5.0);
        let pose = RigidPose::from_translation([tx, 0.0, 0.0]);
        let img = random_image(32, 24, 2);
        let depth = DepthMap::filled(32, 24, d).unwrap();
        let r = reconstruct(&img, &depth, &c, &pose).unwrap();
        let disparity = c.fx * tx / d;
        for y in 0..24 {
            for x in 0..32 {
                // brute force: back-project, translate, project
                let p = c.backproject(x as f64, y as f64, d);
                let (u, v) = c.project([p[0] + tx, p[1], p[2]]);
                assert!((r.u.get(x, y) - u).abs() < 1e-9);
                assert!((r.v.get(x, y) - v).abs() < 1e-9);
                assert!((r.u.get(x, y) - x as f64 - disparity).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn coordinate_derivatives_match_finite_differences() {
        let c = cam();
        let pose = RigidPose::from_axis_angle([0.1, 1.0, 0.2], 0.05, [0.2, -0.05, 0.1]).unwrap();
        let h = 1e-4;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (x, y) = (rng.random_range(0.0..32.0), rng.random_range(0.0..24.0));
            let z = rng.random_range(1.0..10.0);
            let p = warp_point(x, y, z, &c, &pose);
            let a = warp_point(x, y, z + h, &c, &pose);
            let b = warp_point(x, y, z - h, &c, &pose);
            let fu = (a.u - b.u) / (2.0 * h);
            let fv = (a.v - b.v) / (2.0 * h);
            assert!(
                (p.du_dz - fu).abs() <= 1e-5 * fu.abs().max(1e-6),
                "{} vs {}",
                p.du_dz,
                fu
            );
            assert!(
                (p.dv_dz - fv).abs() <= 1e-5 * fv.abs().max(1e-6),
                "{} vs {}",
                p.dv_dz,
                fv
            );
        }
    }

    #[test]
    fn behind_camera_is_out_of_bounds() {
        let c = cam();
        let pose = RigidPose::from_translation([0.0, 0.0, -3.0]);
        let img = random_image(8, 6, 4);
        let depth = DepthMap::filled(8, 6, 2.0).unwrap();
        let r = reconstruct(&img, &depth, &c, &pose).unwrap();
        assert_eq!(r.in_bounds.count(), 0);
        assert!(r.du_dz.values().iter().all(|d| d.is_finite()));
    }

    #[test]
    fn pose_then_inverse_returns_to_origin() {
        let c = cam();
        let pose = RigidPose::from_axis_angle([0.3, 1.0, 0.0], 0.02, [0.1, 0.02, -0.05]).unwrap();
        let inv = pose.inverse();
        for (x, y, z) in [(3.2, 4.1, 2.0), (20.0, 11.0, 4.5), (10.7, 19.9, 7.0)] {
            let p = warp_point(x, y, z, &c, &pose);
            let back = warp_point(p.u, p.v, p.depth, &c, &inv);
            assert!((back.u - x).abs() < 1e-6 && (back.v - y).abs() < 1e-6);
        }
    }

    #[test]
    fn joint_scaling_preserves_coordinates() {
        let c = cam();
        let t = [0.2, -0.1, 0.05];
        let pose = RigidPose::from_axis_angle([0.0, 1.0, 0.0], 0.03, t).unwrap();
        for s in [0.5, 2.0, 7.5] {
            let scaled = RigidPose::new(*pose.rotation(), t.map(|v| v * s)).unwrap();
            let a = warp_point(5.5, 7.25, 3.0, &c, &pose);
            let b = warp_point(5.5, 7.25, 3.0 * s, &c, &scaled);
            assert!((a.u - b.u).abs() < 1e-9 && (a.v - b.v).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let img = random_image(8, 6, 5);
        let depth = DepthMap::filled(6, 8, 2.0).unwrap();
        assert!(reconstruct(&img, &depth, &cam(), &RigidPose::identity()).is_err());
    }
}
