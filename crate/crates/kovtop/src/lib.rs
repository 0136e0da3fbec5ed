//! Numerical library for the Kovalevskaya top.
//!
//! The crate simulates the top on the dual of the Euclidean Lie algebra e(3)
//! and verifies, as machine-checkable residuals, the full chain of structure
//! that makes the system integrable: the four conserved integrals, three Lax
//! representations, the Kovalevskaya separation variables, the Kötter
//! transform onto the Clebsch system, the Abel–Jacobi form of the flow, and
//! genus-2 theta-function building blocks.
//!
//! Everything is checked numerically at sampled points or on coefficient
//! vectors; there is no symbolic algebra anywhere.
//!
//! Module map:
//!
//! * [`e3_state`] — phase space, Poisson bracket, integrals of motion
//! * [`rigid_dynamics`] — equations of motion and the adaptive integrator
//! * [`stencil`] — the shared finite-difference stencils
//! * [`lax`] — the 3×3 and 2×2 Lax pairs and their isospectral invariants
//! * [`kov_vars`] — the (f, g) chart, quadratic forms, separation variables
//! * [`koetter`] — Kötter polynomials and the branch-tracked (x, y) transform
//! * [`clebsch`] — the Clebsch rigid-body-in-fluid system and the diagonal fit
//! * [`abel`] — Weierstrass identity, Abel–Jacobi form, spectral-parameter Lax
//! * [`theta`] — genus-2 theta functions with half-integer characteristics
//! * [`verify`] — the aggregated residual-check suite and its report types

pub mod abel;
pub mod clebsch;
pub(crate) mod dd;
pub mod e3_state;
pub mod koetter;
pub mod kov_vars;
pub mod lax;
pub mod poly;
pub mod rigid_dynamics;
pub mod stencil;
pub mod theta;
pub mod verify;

use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type C64 = num_complex::Complex64;

/// Errors reported by the numerical operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Integrator exceeded its step budget.
    #[error("step count exceeded ({max_steps}) at t = {t}")]
    StepCountExceeded { t: f64, max_steps: usize },
    /// Adaptive step size collapsed below the representable spacing.
    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    /// Invalid trajectory configuration.
    #[error("invalid trajectory config: {0}")]
    InvalidConfig(String),
    /// The (f, g) chart is singular at m2 = 0.
    #[error("chart singular: |m2| = {m2_abs:.3e} below threshold {threshold:.3e}")]
    ChartSingular { m2_abs: f64, threshold: f64 },
    /// The 2x2 linear system for (n1, n2) is singular.
    #[error("singular system reconstructing (n1, n2): det = {det:.3e}")]
    SingularReconstruction { det: f64 },
    /// Inputs violate the hyperboloid constraints beyond tolerance.
    #[error("constraint violation {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ConstraintViolation { residual: f64, tolerance: f64 },
    /// Requested time lies outside the differentiable sample range.
    #[error("time {t} outside the differentiable range [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },
    /// Cubic root solver failed to converge (not expected for a cubic).
    #[error("root solver failed: {0}")]
    RootSolver(String),
    /// The separation roots collided, s1 = s2.
    #[error("root collision |s1 - s2| = {gap:.3e} at sample {index}")]
    RootCollision { index: usize, gap: f64 },
    /// A root a_j of the cubic vanished (division by sqrt(2 a_j)).
    #[error("root a_{index} = 0 (c3 = 0 degeneracy); transform undefined")]
    ZeroRoot { index: usize },
    /// The cubic has a repeated root, so the inverse transform is undefined.
    #[error("repeated cubic root: |a_{i} - a_{j}| = {gap:.3e}")]
    RepeatedRoot { i: usize, j: usize, gap: f64 },
    /// A nominally real output retained too much imaginary part.
    #[error("imaginary residue {residue:.3e} above tolerance {tolerance:.3e} (branch inconsistency)")]
    ImaginaryResidue { residue: f64, tolerance: f64 },
    /// Not enough usable samples for the requested operation.
    #[error("{op}: {got} usable samples, need at least {need}")]
    InsufficientSamples {
        op: &'static str,
        got: usize,
        need: usize,
    },
    /// Least-squares fit is rank deficient (degenerate trajectory).
    #[error("rank-deficient fit: {0}")]
    RankDeficientFit(String),
    /// Quadrature rejected: excluded gap too long to bridge.
    #[error("excluded gap of {gap} samples exceeds the {max} sample bridge limit")]
    GapTooLong { gap: usize, max: usize },
    /// Imaginary part of the period matrix is not positive definite.
    #[error("Im(tau) is not positive definite")]
    TauNotPositiveDefinite,
    /// Requested theta-series accuracy is unreachable at the allowed truncation.
    #[error("theta accuracy {target:.3e} unreachable: tail bound {tail:.3e} at N = {n}")]
    ThetaAccuracy { target: f64, tail: f64, n: i64 },
    /// theta_0 vanishes at the requested point (theta divisor).
    #[error("theta_0 vanishes at the requested point (|theta_0| = {magnitude:.3e})")]
    ThetaDivisor { magnitude: f64 },
    /// Unknown named characteristic.
    #[error("unknown theta characteristic name: {0}")]
    UnknownCharacteristic(String),
    /// Spectral parameter hit a pole of the Lax M-matrix.
    #[error("spectral parameter too close to a pole: |F(s)| = {magnitude:.3e}")]
    SpectralPole { magnitude: f64 },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
