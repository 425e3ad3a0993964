//! Residual-driven adaptive weights.
//!
//! Two families of per-pixel weights are built from the current residuals:
//!
//! * a soft visibility mask per auxiliary frame, a flipped sigmoid of the
//!   standardized photometric residual whose steepness and shift are
//!   annealed by that frame's mean residual, and
//! * a regularization weight that decays exponentially with the local
//!   residual scaled by the mean residual, taken from sparse depth where a
//!   measurement exists and from the best photometric residual elsewhere.
//!
//! Early on, when mean residuals are large, the mask is nearly uniform and
//! regularization is weak. As residuals shrink the mask approaches a binary
//! occlusion mask and regularization strengthens.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_dims, Mask, ScalarGrid};
use crate::residual::{normalize, NormalizedResidual};

/// Largest exponent magnitude fed to `exp`. Keeps weights strictly positive
/// in double precision.
const MAX_EXPONENT: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaConfig {
    pub a0: f64,
    pub b0: f64,
    pub eps: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self {
            a0: 0.10,
            b0: 4.0,
            eps: 1e-8,
        }
    }
}

impl AlphaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a0", self.a0), ("b0", self.b0), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaConfig {
    pub c_i: f64,
    pub c_z: f64,
}

impl GammaConfig {
    /// Outdoor profile.
    pub const OUTDOOR: GammaConfig = GammaConfig {
        c_i: 1.0,
        c_z: 0.01,
    };
    /// Indoor profile: weaker image-driven discounting for textureless scenes.
    pub const INDOOR: GammaConfig = GammaConfig {
        c_i: 0.70,
        c_z: 0.01,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c_i", self.c_i), ("c_z", self.c_z)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for GammaConfig {
    fn default() -> Self {
        Self::OUTDOOR
    }
}

/// Steepness `a = a0 / (mu + eps)`.
pub fn steepness(mu_tau: f64, cfg: &AlphaConfig) -> f64 {
    cfg.a0 / (mu_tau + cfg.eps)
}

/// Shift `b = b0 (1 - cos(pi mu))` and whether `mu` had to be clamped into `[0, 1]`.
pub fn shift_checked(mu_tau: f64, cfg: &AlphaConfig) -> (f64, bool) {
    let clamped = mu_tau.clamp(0.0, 1.0);
    (cfg.b0 * (1.0 - (PI * clamped).cos()), clamped != mu_tau)
}

pub fn shift(mu_tau: f64, cfg: &AlphaConfig) -> f64 {
    shift_checked(mu_tau, cfg).0
}

/// `1 - 1 / (1 + exp(-(a rho - b)))`, evaluated without overflow.
#[inline]
pub fn flipped_sigmoid(rho: f64, a: f64, b: f64) -> f64 {
    // 1 - sigmoid(s) == sigmoid(-s) with s = a rho - b
    let t = (b - a * rho).clamp(-MAX_EXPONENT, MAX_EXPONENT);
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Soft visibility weights with explicit steepness and shift.
pub fn visibility_mask_with(rho: &ScalarGrid, a: f64, b: f64) -> ScalarGrid {
    rho.map(|r| flipped_sigmoid(r, a, b))
}

/// Soft visibility weights annealed by the residual's own mean.
pub fn visibility_mask(nr: &NormalizedResidual, cfg: &AlphaConfig) -> ScalarGrid {
    let a = steepness(nr.mu, cfg);
    let b = shift(nr.mu, cfg);
    visibility_mask_with(&nr.rho, a, b)
}

#[inline]
fn neg_exp(x: f64) -> f64 {
    (-x.min(MAX_EXPONENT)).exp()
}

/// Image-guided regularization weights `exp(-c_i mu_i delta_i)` and `mu_i`.
pub fn gamma_image(delta_i: &ScalarGrid, cfg: &GammaConfig) -> (ScalarGrid, f64) {
    let mu_i = delta_i.mean();
    let k = cfg.c_i * mu_i;
    (delta_i.map(|d| neg_exp(k * d)), mu_i)
}

/// Depth-guided regularization weights on the sparse support and `mu_z`,
/// the mean residual over that support. Off the support the weight is 1.
pub fn gamma_depth(
    delta_z: &ScalarGrid,
    valid: &Mask,
    cfg: &GammaConfig,
) -> Result<(ScalarGrid, f64)> {
    let mu_z = crate::grid::masked_mean(delta_z, valid)?;
    let k = cfg.c_z * mu_z;
    let (w, h) = delta_z.dims();
    let values = delta_z
        .values()
        .iter()
        .zip(valid.bits())
        .map(|(&d, &ok)| if ok { neg_exp(k * d) } else { 1.0 })
        .collect();
    Ok((ScalarGrid::from_values(w, h, values), mu_z))
}

/// Takes the depth-guided weight on the sparse support and the image-guided
/// weight everywhere else.
pub fn fuse_gamma(gamma_i: &ScalarGrid, gamma_z: &ScalarGrid, valid: &Mask) -> Result<ScalarGrid> {
    ensure_same_dims(gamma_i.dims(), gamma_z.dims())?;
    ensure_same_dims(gamma_i.dims(), valid.dims())?;
    let (w, h) = gamma_i.dims();
    Ok(ScalarGrid::from_values(
        w,
        h,
        gamma_i
            .values()
            .iter()
            .zip(gamma_z.values())
            .zip(valid.bits())
            .map(|((&gi, &gz), &ok)| if ok { gz } else { gi })
            .collect(),
    ))
}

/// Visibility weights of one auxiliary frame with their annealing state.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameWeights {
    pub alpha: ScalarGrid,
    pub mu: f64,
    pub sigma2: f64,
    pub a: f64,
    pub b: f64,
}

/// All adaptive weights for one optimization step.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBundle {
    pub frames: Vec<FrameWeights>,
    pub gamma: ScalarGrid,
    pub mu_i: f64,
    pub mu_z: f64,
    /// Number of frames whose mean residual fell outside `[0, 1]` and was clamped.
    pub mu_clamps: usize,
}

impl WeightBundle {
    pub fn alphas(&self) -> Vec<&ScalarGrid> {
        self.frames.iter().map(|f| &f.alpha).collect()
    }
}

/// Builds every adaptive weight from the per-frame photometric residuals and
/// the sparse-depth residual.
pub fn compute_weights(
    deltas: &[ScalarGrid],
    delta_z: &ScalarGrid,
    valid: &Mask,
    alpha_cfg: &AlphaConfig,
    gamma_cfg: &GammaConfig,
) -> Result<WeightBundle> {
    let mut mu_clamps = 0;
    let frames = deltas
        .iter()
        .map(|delta| {
            let nr = normalize(delta, alpha_cfg.eps);
            let a = steepness(nr.mu, alpha_cfg);
            let (b, clamped) = shift_checked(nr.mu, alpha_cfg);
            mu_clamps += clamped as usize;
            FrameWeights {
                alpha: visibility_mask_with(&nr.rho, a, b),
                mu: nr.mu,
                sigma2: nr.sigma2,
                a,
                b,
            }
        })
        .collect();
    let delta_i = crate::residual::min_image_residual(deltas)?;
    let (gamma_i, mu_i) = gamma_image(&delta_i, gamma_cfg);
    let (gamma_z, mu_z) = gamma_depth(delta_z, valid, gamma_cfg)?;
    Ok(WeightBundle {
        frames,
        gamma: fuse_gamma(&gamma_i, &gamma_z, valid)?,
        mu_i,
        mu_z,
        mu_clamps,
    })
}
