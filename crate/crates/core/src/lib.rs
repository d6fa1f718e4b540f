//! Quantum transmission of multi-layer barrier devices under bias, and
//! optimal design of the layer potentials.
//!
//! The fast path is a closed-form WKB transfer-matrix chain with a
//! piecewise-constant fallback near turning points; a finite-difference
//! scattering solver and the full piecewise-constant chain serve as
//! independent references. On top sit a least-squares design objective with
//! analytic gradients, sparse-grid quadrature over potential uncertainty,
//! and a projected quasi-Newton optimizer.

pub mod constants;
pub mod device;
pub mod error;
pub mod fd;
pub mod mat2;
pub mod objective;
pub mod optimizer;
pub mod pcpm;
pub mod sparse_grid;
pub mod transmission;
pub mod wkb;

pub use constants::PhysicalConstants;
pub use device::{BiasPoint, Convention, DeviceSpec, TargetResponse};
pub use error::{CoreError, Result};
pub use fd::transmission_fd;
pub use objective::{
    cost_deterministic, cost_random, cost_robust, cost_value, gradient_deterministic,
    robust_moments, CollocationEvaluator, ObjectiveReport, Quadrature, RobustReport, RobustSpec,
};
pub use optimizer::{
    minimize, solve_deterministic, solve_robust, GradientMode, MultiStart, OptimizationResult,
    OptimizerConfig,
};
pub use sparse_grid::{
    adaptive_moments, build_grid, integrate, AdaptiveReport, QuadratureGrid, SparseGridSpec,
};
pub use transmission::{
    transmission_device, transmission_pcpm, DeviceOptions, SolverRegistry, TransmissionSolver,
};
pub use wkb::{
    transmission_single_closed, transmission_single_matrix, wkb_validity, Method,
    TransmissionResult,
};
