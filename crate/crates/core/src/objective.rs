//! Weighted depth-completion objective and its gradient in log-depth.
//!
//! ```text
//! L(z) = w_ph * mean_tau (1/|O|) sum_x alpha_tau(x) delta_tau(x)
//!      + w_z  * (1/|O_z|) sum_{x in O_z} |z(x) - z_sparse(x)|
//!      + w_sm * (1/|O|) sum_x gamma(x) |grad z(x)|^2
//! ```
//!
//! The weights `alpha_tau` and `gamma` are frozen while the gradient is taken.

use crate::adaweight::WeightBundle;
use crate::error::{Error, Result};
use crate::grid::{
    bilinear_sample_with_gradient, ensure_same_dims, forward_gradient, masked_mean, CameraModel,
    ColorImage, DepthMap, Mask, RigidPose, ScalarGrid, SparseDepthMap,
};
use crate::residual::{sparse_depth_residual, warp_residual};
use crate::warp::{reconstruct, WarpResult};

/// Static trade-off multipliers of the three loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub w_ph: f64,
    pub w_z: f64,
    pub w_sm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_ph: 1.0,
            w_z: 0.5,
            w_sm: 0.002,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [("w_ph", self.w_ph), ("w_z", self.w_z), ("w_sm", self.w_sm)];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if all.iter().all(|(_, v)| *v == 0.0) {
            return Err(Error::InvalidArgument(
                "at least one loss weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub photometric: f64,
    pub sparse: f64,
    pub smoothness: f64,
    pub per_frame_photometric: Vec<f64>,
}

/// An auxiliary view: its image and the pose taking reference-camera points
/// into its camera frame.
#[derive(Clone, Debug)]
pub struct AuxFrame {
    pub image: ColorImage,
    pub pose: RigidPose,
}

/// Everything the objective needs besides the depth being optimized.
#[derive(Clone, Debug)]
pub struct Problem {
    pub reference: ColorImage,
    pub aux: Vec<AuxFrame>,
    pub cam: CameraModel,
    pub sparse: SparseDepthMap,
}

impl Problem {
    pub fn new(
        reference: ColorImage,
        aux: Vec<AuxFrame>,
        cam: CameraModel,
        sparse: SparseDepthMap,
    ) -> Result<Self> {
        if aux.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one auxiliary frame is required".into(),
            ));
        }
        for f in &aux {
            ensure_same_dims(reference.dims(), f.image.dims())?;
        }
        ensure_same_dims(reference.dims(), sparse.dims())?;
        Ok(Self {
            reference,
            aux,
            cam,
            sparse,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.reference.dims()
    }
}

/// Warps and residuals of one depth estimate.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub depth: DepthMap,
    pub warps: Vec<WarpResult>,
    pub deltas: Vec<ScalarGrid>,
    pub delta_z: ScalarGrid,
}

impl Evaluation {
    pub fn new(problem: &Problem, depth: DepthMap) -> Result<Self> {
        ensure_same_dims(problem.dims(), depth.dims())?;
        let warps = problem
            .aux
            .iter()
            .map(|f| reconstruct(&f.image, &depth, &problem.cam, &f.pose))
            .collect::<Result<Vec<_>>>()?;
        let deltas = warps
            .iter()
            .map(|w| warp_residual(&problem.reference, w))
            .collect::<Result<Vec<_>>>()?;
        let delta_z = sparse_depth_residual(&depth, &problem.sparse)?;
        Ok(Self {
            depth,
            warps,
            deltas,
            delta_z,
        })
    }
}

/// Per-pixel weights held fixed during a depth update.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenWeights {
    pub alphas: Vec<ScalarGrid>,
    pub gamma: ScalarGrid,
}

impl FrozenWeights {
    /// `alpha = 1` for every frame and `gamma = 1`: the static objective.
    pub fn uniform(frames: usize, width: usize, height: usize) -> Self {
        Self {
            alphas: vec![ScalarGrid::filled(width, height, 1.0); frames],
            gamma: ScalarGrid::filled(width, height, 1.0),
        }
    }
}

impl From<&WeightBundle> for FrozenWeights {
    fn from(wb: &WeightBundle) -> Self {
        Self {
            alphas: wb.frames.iter().map(|f| f.alpha.clone()).collect(),
            gamma: wb.gamma.clone(),
        }
    }
}

fn per_frame_terms(deltas: &[ScalarGrid], alphas: &[ScalarGrid]) -> Result<Vec<f64>> {
    if deltas.len() != alphas.len() || deltas.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need one weight map per residual, got {} residuals and {} weights",
            deltas.len(),
            alphas.len()
        )));
    }
    deltas
        .iter()
        .zip(alphas)
        .map(|(d, a)| {
            ensure_same_dims(d.dims(), a.dims())?;
            let s: f64 = d.values().iter().zip(a.values()).map(|(d, a)| a * d).sum();
            Ok(s / d.len() as f64)
        })
        .collect()
}

/// Mean over frames of the visibility-weighted mean photometric residual.
pub fn photometric_term(deltas: &[ScalarGrid], alphas: &[ScalarGrid]) -> Result<f64> {
    let terms = per_frame_terms(deltas, alphas)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Mean absolute sparse-depth residual over the sparse support.
pub fn sparse_term(delta_z: &ScalarGrid, valid: &Mask) -> Result<f64> {
    masked_mean(delta_z, valid)
}

/// Mean of `gamma |grad z|^2` with forward differences.
pub fn smoothness_term(depth: &DepthMap, gamma: &ScalarGrid) -> Result<f64> {
    ensure_same_dims(depth.dims(), gamma.dims())?;
    let (gx, gy) = forward_gradient(depth.grid());
    let s: f64 = gamma
        .values()
        .iter()
        .zip(gx.values().iter().zip(gy.values()))
        .map(|(g, (x, y))| g * (x * x + y * y))
        .sum();
    Ok(s / depth.grid().len() as f64)
}

pub fn total_loss(
    problem: &Problem,
    eval: &Evaluation,
    weights: &FrozenWeights,
    lw: &LossWeights,
) -> Result<LossBreakdown> {
    let per_frame_photometric = per_frame_terms(&eval.deltas, &weights.alphas)?;
    let photometric =
        per_frame_photometric.iter().sum::<f64>() / per_frame_photometric.len() as f64;
    let sparse = sparse_term(&eval.delta_z, problem.sparse.valid())?;
    let smoothness = smoothness_term(&eval.depth, &weights.gamma)?;
    Ok(LossBreakdown {
        total: lw.w_ph * photometric + lw.w_z * sparse + lw.w_sm * smoothness,
        photometric,
        sparse,
        smoothness,
        per_frame_photometric,
    })
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of [`total_loss`] with respect to `log z` at every pixel, with
/// the weights held fixed.
pub fn loss_gradient(
    problem: &Problem,
    eval: &Evaluation,
    weights: &FrozenWeights,
    lw: &LossWeights,
) -> Result<ScalarGrid> {
    let (w, h) = problem.dims();
    let n = (w * h) as f64;
    if weights.alphas.len() != problem.aux.len() {
        return Err(Error::InvalidArgument(format!(
            "need {} visibility maps, got {}",
            problem.aux.len(),
            weights.alphas.len()
        )));
    }
    ensure_same_dims((w, h), weights.gamma.dims())?;
    let z = eval.depth.values();
    // gradient with respect to z; converted to log-depth at the end
    let mut grad = vec![0.0; w * h];

    if lw.w_ph != 0.0 {
        let k = lw.w_ph / (problem.aux.len() as f64 * n);
        for ((frame, warp), alpha) in problem.aux.iter().zip(&eval.warps).zip(&weights.alphas) {
            ensure_same_dims((w, h), alpha.dims())?;
            for i in 0..w * h {
                if !warp.in_bounds.bits()[i] {
                    continue;
                }
                let s = bilinear_sample_with_gradient(
                    &frame.image,
                    warp.u.values()[i],
                    warp.v.values()[i],
                );
                let (x, y) = (i % w, i / w);
                let du = warp.du_dz.values()[i];
                let dv = warp.dv_dz.values()[i];
                let mut d_delta = 0.0;
                for c in 0..3 {
                    let r = problem.reference.channel(c).get(x, y) - s.rgb[c];
                    d_delta -= sign(r) * (s.d_du[c] * du + s.d_dv[c] * dv);
                }
                grad[i] += k * alpha.values()[i] * d_delta / 3.0;
            }
        }
    }

    if lw.w_z != 0.0 {
        let valid = problem.sparse.valid();
        let k = lw.w_z / valid.count() as f64;
        for (i, &ok) in valid.bits().iter().enumerate() {
            if ok {
                grad[i] += k * sign(z[i] - problem.sparse.depth().values()[i]);
            }
        }
    }

    if lw.w_sm != 0.0 {
        let k = 2.0 * lw.w_sm / n;
        let gamma = weights.gamma.values();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let g = k * gamma[i];
                if x + 1 < w {
                    let d = g * (z[i + 1] - z[i]);
                    grad[i + 1] += d;
                    grad[i] -= d;
                }
                if y + 1 < h {
                    let d = g * (z[i + w] - z[i]);
                    grad[i + w] += d;
                    grad[i] -= d;
                }
            }
        }
    }

    for (g, &zi) in grad.iter_mut().zip(z) {
        *g *= zi;
    }
    ScalarGrid::new(w, h, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ScalarGrid {
        ScalarGrid::from_fn(w, h, |_, _| rng.random())
    }

    #[test]
    fn photometric_term_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let zeros = vec![ScalarGrid::zeros(4, 3); 2];
        let alphas = vec![random_grid(4, 3, &mut rng), random_grid(4, 3, &mut rng)];
        assert_eq!(photometric_term(&zeros, &alphas).unwrap(), 0.0);

        let d = vec![ScalarGrid::filled(4, 3, 0.3); 2];
        let ones = vec![ScalarGrid::filled(4, 3, 1.0); 2];
        assert!((photometric_term(&d, &ones).unwrap() - 0.3).abs() < 1e-15);

        let d = vec![random_grid(9, 7, &mut rng), random_grid(9, 7, &mut rng)];
        let a = vec![random_grid(9, 7, &mut rng), random_grid(9, 7, &mut rng)];
        let mut total = 0.0;
        for t in 0..2 {
            let mut s = 0.0;
            for y in 0..7 {
                for x in 0..9 {
                    s += a[t].get(x, y) * d[t].get(x, y);
                }
            }
            total += s / 63.0;
        }
        assert!((photometric_term(&d, &a).unwrap() - total / 2.0).abs() < 1e-12);
        assert!(photometric_term(&d, &a[..1]).is_err());
    }

    #[test]
    fn sparse_term_examples() {
        let mut valid = Mask::empty(3, 3);
        valid.set(2, 0, true);
        let mut dz = ScalarGrid::zeros(3, 3).into_values();
        dz[2] = 2.0;
        assert_eq!(
            sparse_term(&ScalarGrid::new(3, 3, dz).unwrap(), &valid).unwrap(),
            2.0
        );
        assert_eq!(sparse_term(&ScalarGrid::zeros(3, 3), &valid).unwrap(), 0.0);
        assert!(sparse_term(&ScalarGrid::zeros(3, 3), &Mask::empty(3, 3)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let m = Mask::from_fn(6, 6, |x, _| x == 0 || rng.random_bool(0.3));
        let d = random_grid(6, 6, &mut rng);
        let (mut s, mut k) = (0.0, 0.0);
        for y in 0..6 {
            for x in 0..6 {
                if m.get(x, y) {
                    s += d.get(x, y);
                    k += 1.0;
                }
            }
        }
        assert_eq!(sparse_term(&d, &m).unwrap(), s / k);
    }

    #[test]
    fn smoothness_term_examples() {
        let flat = DepthMap::filled(5, 4, 3.0).unwrap();
        assert_eq!(
            smoothness_term(&flat, &ScalarGrid::filled(5, 4, 1.0)).unwrap(),
            0.0
        );

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let bumpy =
            DepthMap::new(ScalarGrid::from_fn(5, 4, |_, _| rng.random_range(1.0..9.0))).unwrap();
        assert_eq!(
            smoothness_term(&bumpy, &ScalarGrid::zeros(5, 4)).unwrap(),
            0.0
        );

        let ramp = DepthMap::new(ScalarGrid::from_fn(4, 4, |x, _| x as f64 + 1.0)).unwrap();
        assert!(
            (smoothness_term(&ramp, &ScalarGrid::filled(4, 4, 1.0)).unwrap() - 0.75).abs() < 1e-15
        );
    }

    #[test]
    fn loss_weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights {
            w_ph: 0.0,
            w_z: 0.0,
            w_sm: 0.0
        }
        .validate()
        .is_err());
        assert!(LossWeights {
            w_ph: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    fn tiny_problem(seed: u64) -> (Problem, DepthMap) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (12, 10);
        let mut smooth = |f: f64| {
            let p: f64 = rng.random_range(0.0..6.0);
            ScalarGrid::from_fn(w, h, move |x, y| {
                0.5 + 0.4 * ((x as f64 * f + p).sin() * (y as f64 * 0.7).cos())
            })
        };
        let reference = ColorImage::new([smooth(0.9), smooth(1.1), smooth(0.7)]).unwrap();
        let aux_img = ColorImage::new([smooth(0.8), smooth(1.3), smooth(0.6)]).unwrap();
        let cam = CameraModel::new(20.0, 20.0, 5.5, 4.5).unwrap();
        let aux = vec![
            AuxFrame {
                image: aux_img.clone(),
                pose: RigidPose::from_translation([0.1, 0.0, 0.0]),
            },
            AuxFrame {
                image: aux_img,
                pose: RigidPose::from_translation([-0.1, 0.02, 0.0]),
            },
        ];
        let valid = Mask::from_fn(w, h, |x, y| (x * 7 + y * 3) % 11 == 0);
        let sparse = SparseDepthMap::new(ScalarGrid::filled(w, h, 4.0), valid).unwrap();
        let depth = DepthMap::new(ScalarGrid::from_fn(w, h, |x, y| {
            3.0 + 0.1 * x as f64 + 0.05 * y as f64
        }))
        .unwrap();
        (Problem::new(reference, aux, cam, sparse).unwrap(), depth)
    }

    #[test]
    fn total_is_weighted_sum() {
        let (problem, depth) = tiny_problem(24);
        let eval = Evaluation::new(&problem, depth).unwrap();
        let fw = FrozenWeights::uniform(2, 12, 10);
        let lw = LossWeights {
            w_ph: 1.0,
            w_z: 0.5,
            w_sm: 0.1,
        };
        let b = total_loss(&problem, &eval, &fw, &lw).unwrap();
        let expected = b.photometric + 0.5 * b.sparse + 0.1 * b.smoothness;
        assert!((b.total - expected).abs() <= 1e-12 * expected);
        assert!(b.total >= 0.0);
        let again = total_loss(&problem, &eval, &fw, &lw).unwrap();
        assert_eq!(b.total.to_bits(), again.total.to_bits());
    }

    #[test]
    fn zero_residuals_and_weights_give_zero_gradient() {
        let (mut problem, _) = tiny_problem(25);
        let depth = DepthMap::filled(12, 10, 4.0).unwrap();
        for f in &mut problem.aux {
            f.image = problem.reference.clone();
            f.pose = RigidPose::identity();
        }
        let eval = Evaluation::new(&problem, depth).unwrap();
        let fw = FrozenWeights {
            alphas: vec![ScalarGrid::filled(12, 10, 1.0); 2],
            gamma: ScalarGrid::zeros(12, 10),
        };
        let g = loss_gradient(&problem, &eval, &fw, &LossWeights::default()).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothness_gradient_matches_finite_differences() {
        let (problem, depth) = tiny_problem(26);
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let fw = FrozenWeights {
            alphas: vec![ScalarGrid::filled(12, 10, 1.0); 2],
            gamma: random_grid(12, 10, &mut rng),
        };
        let lw = LossWeights {
            w_ph: 0.0,
            w_z: 0.0,
            w_sm: 1.0,
        };
        let eval = Evaluation::new(&problem, depth.clone()).unwrap();
        let g = loss_gradient(&problem, &eval, &fw, &lw).unwrap();
        let h = 1e-4;
        for i in [0, 5, 11, 37, 60, 119] {
            let loss_at = |s: f64| {
                let mut v = depth.values().to_vec();
                v[i] *= (s * h).exp();
                let d = DepthMap::new(ScalarGrid::new(12, 10, v).unwrap()).unwrap();
                smoothness_term(&d, &fw.gamma).unwrap()
            };
            let fd = (loss_at(1.0) - loss_at(-1.0)) / (2.0 * h);
            assert!(
                (g.values()[i] - fd).abs() <= 1e-5 * fd.abs().max(1e-9),
                "{i}: {} vs {fd}",
                g.values()[i]
            );
        }
    }
}
