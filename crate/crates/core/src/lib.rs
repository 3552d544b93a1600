//! Numerical laboratory for loop spaces over the model manifolds S¹ and S².
//!
//! The crate builds, from closed-form Riemannian primitives upward:
//! spectral heat kernels, discretized pinned Wiener measures with exact
//! samplers, the Bismut-tangent cylinder calculus (H¹ gradient, Schauder
//! decomposition, cutoffs), piecewise-geodesic energy landscapes with
//! mountain-pass constants and Gibbs spectral gaps, and the Monte Carlo
//! harness that probes the weak Poincaré inequality on both manifolds.

pub mod bridge;
pub mod geometry;
pub mod heat;
pub mod landscape;
pub mod malliavin;
pub mod rng;
pub mod stats;
pub mod wpi;

pub use bridge::{BridgeSpec, DiscreteLoop, TubeSpec};
pub use geometry::{ManifoldId, Point, Tangent};
pub use heat::HeatKernelSeries;
pub use landscape::{EnergyParams, LandscapeGrid, MinimaxResult};
pub use malliavin::{CutoffSpec, CylinderFunction, SchauderIndex};
pub use wpi::{DecompositionReport, EstimatorConfig, WpiReport};

use thiserror::Error;

/// Errors shared across the crate's modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinates: {0}")]
    Domain(String),
    #[error("cut locus reached: {0}")]
    CutLocus(String),
    #[error("time {t} below series validity t_min = {t_min}")]
    Truncation { t: f64, t_min: f64 },
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error("junction mismatch: {0}")]
    Junction(String),
    #[error("times are not dyadic on the loop grid: {0}")]
    NonDyadic(String),
    #[error("grid construction failed: {0}")]
    Grid(String),
    #[error("eigenvalue solve failed: {0}")]
    Eigen(String),
    #[error("degenerate estimate: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Configures the global rayon pool used by the estimators.
///
/// Estimator output is independent of the pool size by construction; this
/// only controls wall time. Returns an error if the pool was already built.
pub fn set_workers(n: usize) -> std::result::Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}
