//! Adaptive weighting for unsupervised depth completion.
//!
//! A dense depth map is optimized directly against a photometric
//! reprojection loss, a sparse depth loss and a smoothness prior. Two
//! per-pixel weightings adapt to the current residuals: an annealed soft
//! visibility mask `alpha` on the photometric term and a residual-guided
//! weight `gamma` on the smoothness term.

pub mod adaweight;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod objective;
pub mod residual;
pub mod scenegen;
pub mod solver;
pub mod warp;

pub use adaweight::{compute_weights, AlphaConfig, GammaConfig, WeightBundle};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use grid::{CameraModel, ColorImage, DepthMap, Mask, RigidPose, ScalarGrid, SparseDepthMap};
pub use metrics::{evaluate, MetricReport, Unit};
pub use objective::{LossWeights, Problem};
pub use scenegen::{generate, SceneInstance, SceneSpec};
pub use solver::{solve, InitMode, Solution, SolveTrace, SolverConfig, Weighting};
