//! Photometric and sparse-depth residuals and their normalization.

use crate::error::{Error, Result};
use crate::grid::{ensure_same_dims, ColorImage, DepthMap, Mask, ScalarGrid, SparseDepthMap};
use crate::warp::WarpResult;

/// Residual assigned to pixels whose warp left the auxiliary image.
pub const OUT_OF_BOUNDS_RESIDUAL: f64 = 1.0;

/// Standardized residual field together with the statistics used to build it.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedResidual {
    pub rho: ScalarGrid,
    /// Mean residual over the whole domain.
    pub mu: f64,
    /// Population variance of the residual.
    pub sigma2: f64,
}

/// Channel mean of `|reference - recon|` per pixel, in `[0, 1]`.
pub fn photometric_residual(reference: &ColorImage, recon: &ColorImage) -> Result<ScalarGrid> {
    ensure_same_dims(reference.dims(), recon.dims())?;
    let (w, h) = reference.dims();
    let mut out = vec![0.0; w * h];
    for c in 0..3 {
        let a = reference.channel(c).values();
        let b = recon.channel(c).values();
        for i in 0..out.len() {
            out[i] += (a[i] - b[i]).abs();
        }
    }
    Ok(ScalarGrid::from_values(
        w,
        h,
        out.into_iter().map(|s| s / 3.0).collect(),
    ))
}

/// Photometric residual of a warp, with out-of-bounds pixels set to
/// [`OUT_OF_BOUNDS_RESIDUAL`].
pub fn warp_residual(reference: &ColorImage, warp: &WarpResult) -> Result<ScalarGrid> {
    let delta = photometric_residual(reference, &warp.reconstructed)?;
    let (w, h) = delta.dims();
    Ok(ScalarGrid::from_values(
        w,
        h,
        delta
            .values()
            .iter()
            .zip(warp.in_bounds.bits())
            .map(|(&d, &ok)| if ok { d } else { OUT_OF_BOUNDS_RESIDUAL })
            .collect(),
    ))
}

/// Standardizes `delta` to zero mean and (nearly) unit variance.
pub fn normalize(delta: &ScalarGrid, eps: f64) -> NormalizedResidual {
    let n = delta.len() as f64;
    let mu = delta.values().iter().sum::<f64>() / n;
    if delta.min() == delta.max() {
        // the rounded mean of a constant field can differ from its value
        let (w, h) = delta.dims();
        return NormalizedResidual {
            rho: ScalarGrid::zeros(w, h),
            mu: delta.min(),
            sigma2: 0.0,
        };
    }
    let sigma2 = delta
        .values()
        .iter()
        .map(|d| (d - mu) * (d - mu))
        .sum::<f64>()
        / n;
    let scale = 1.0 / (sigma2 + eps).sqrt();
    NormalizedResidual {
        rho: delta.map(|d| (d - mu) * scale),
        mu,
        sigma2,
    }
}

/// Elementwise minimum over the per-frame residuals.
pub fn min_image_residual(deltas: &[ScalarGrid]) -> Result<ScalarGrid> {
    let (first, rest) = deltas
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("no residual grids to combine".into()))?;
    let mut out = first.clone();
    for d in rest {
        out = out.zip_map(d, f64::min)?;
    }
    Ok(out)
}

/// `|pred - sparse|` on the sparse support, zero elsewhere.
pub fn sparse_depth_residual(pred: &DepthMap, sparse: &SparseDepthMap) -> Result<ScalarGrid> {
    ensure_same_dims(pred.dims(), sparse.dims())?;
    let (w, h) = pred.dims();
    let valid: &Mask = sparse.valid();
    Ok(ScalarGrid::from_values(
        w,
        h,
        pred.values()
            .iter()
            .zip(sparse.depth().values())
            .zip(valid.bits())
            .map(|((&p, &z), &ok)| if ok { (p - z).abs() } else { 0.0 })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(w: usize, h: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> ColorImage {
        ColorImage::new([0, 1, 2].map(|c| ScalarGrid::from_fn(w, h, |x, y| f(x, y, c)))).unwrap()
    }

    #[test]
    fn photometric_residual_examples() {
        let a = img(4, 3, |x, y, c| ((x + y + c) % 5) as f64 / 5.0);
        assert!(photometric_residual(&a, &a)
            .unwrap()
            .values()
            .iter()
            .all(|&d| d == 0.0));

        let ones = ColorImage::filled(4, 3, [1.0; 3]).unwrap();
        let zeros = ColorImage::filled(4, 3, [0.0; 3]).unwrap();
        assert!(photometric_residual(&ones, &zeros)
            .unwrap()
            .values()
            .iter()
            .all(|&d| d == 1.0));

        let p = ColorImage::filled(1, 1, [0.2, 0.4, 0.9]).unwrap();
        let q = ColorImage::filled(1, 1, [0.5, 0.4, 0.3]).unwrap();
        let d = photometric_residual(&p, &q).unwrap().values()[0];
        assert!((d - 0.3).abs() < 1e-15);

        assert!(photometric_residual(&p, &ones).is_err());
    }

    #[test]
    fn normalize_examples() {
        let c = ScalarGrid::filled(5, 4, 0.37);
        let n = normalize(&c, 1e-8);
        assert!(n.rho.values().iter().all(|&r| r == 0.0));
        assert_eq!(n.mu, 0.37);
        assert_eq!(n.sigma2, 0.0);

        let two = ScalarGrid::new(2, 1, vec![0.0, 1.0]).unwrap();
        let n = normalize(&two, 1e-8);
        assert_eq!(n.mu, 0.5);
        assert_eq!(n.sigma2, 0.25);
        assert!((n.rho.values()[0] + 1.0).abs() < 1e-7);
        assert!((n.rho.values()[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn min_image_residual_examples() {
        let a = ScalarGrid::filled(2, 2, 0.3);
        let b = ScalarGrid::filled(2, 2, 0.1);
        assert_eq!(min_image_residual(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(min_image_residual(&[a.clone(), b.clone()]).unwrap(), b);
        assert!(min_image_residual(&[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r1 = ScalarGrid::from_fn(6, 5, |_, _| rng.random());
        let r2 = ScalarGrid::from_fn(6, 5, |_, _| rng.random());
        let m = min_image_residual(&[r1.clone(), r2.clone()]).unwrap();
        for i in 0..30 {
            let expected = if r1.values()[i] < r2.values()[i] {
                r1.values()[i]
            } else {
                r2.values()[i]
            };
            assert_eq!(m.values()[i], expected);
        }
        assert_eq!(min_image_residual(&[r1.clone(), r1.clone()]).unwrap(), r1);
    }

    #[test]
    fn sparse_depth_residual_examples() {
        let mut valid = Mask::empty(3, 3);
        valid.set(1, 2, true);
        let sparse = SparseDepthMap::new(ScalarGrid::filled(3, 3, 3.0), valid.clone()).unwrap();
        let pred = DepthMap::filled(3, 3, 5.0).unwrap();
        let r = sparse_depth_residual(&pred, &sparse).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(r.get(x, y), if (x, y) == (1, 2) { 2.0 } else { 0.0 });
            }
        }
        let exact = DepthMap::filled(3, 3, 3.0).unwrap();
        assert!(sparse_depth_residual(&exact, &sparse)
            .unwrap()
            .values()
            .iter()
            .all(|&d| d == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mask = Mask::from_fn(7, 5, |_, _| rng.random_bool(0.3));
        let z = ScalarGrid::from_fn(7, 5, |_, _| rng.random_range(1.0..10.0));
        let p = DepthMap::new(ScalarGrid::from_fn(7, 5, |_, _| {
            rng.random_range(1.0..10.0)
        }))
        .unwrap();
        let sparse = SparseDepthMap::new(z.clone(), mask.clone()).unwrap();
        let r = sparse_depth_residual(&p, &sparse).unwrap();
        for y in 0..5 {
            for x in 0..7 {
                let expected = if mask.get(x, y) {
                    (p.get(x, y) - z.get(x, y)).abs()
                } else {
                    0.0
                };
                assert_eq!(r.get(x, y), expected);
            }
        }
    }

    fn grid_strategy() -> impl Strategy<Value = ScalarGrid> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0.0f64..1.0, w * h)
                .prop_map(move |v| ScalarGrid::new(w, h, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn photometric_residual_is_symmetric_and_bounded(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = img(5, 4, |_, _, _| rng.random());
            let b = img(5, 4, |_, _, _| rng.random::<f64>());
            let ab = photometric_residual(&a, &b).unwrap();
            let ba = photometric_residual(&b, &a).unwrap();
            prop_assert_eq!(&ab, &ba);
            prop_assert!(ab.values().iter().all(|&d| (0.0..=1.0).contains(&d)));
        }

        #[test]
        fn normalize_is_centered(g in grid_strategy()) {
            let n = normalize(&g, 1e-8);
            prop_assert!(n.rho.mean().abs() < 1e-9);
            if n.sigma2 > 1e-6 {
                let var = n.rho.values().iter().map(|r| r * r).sum::<f64>() / g.len() as f64;
                prop_assert!((var - 1.0).abs() < 1e-3);
            }
        }

        #[test]
        fn normalize_ignores_constant_offsets(g in grid_strategy(), c in -0.5f64..0.5) {
            let shifted = g.map(|d| d + c);
            let a = normalize(&g, 1e-8);
            let b = normalize(&shifted, 1e-8);
            for (x, y) in a.rho.values().iter().zip(b.rho.values()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
