//! Shared finite-difference stencils on uniform grids.
//!
//! Every residual check in the crate that needs a numerical time derivative
//! goes through this single implementation, so all checks share one
//! truncation-error budget: 4th-order central differences, usable on
//! interior indices `2 ..= len - 3`.

use std::ops::{Add, Mul, Sub};

/// Types the stencils can combine linearly with f64 weights.
pub trait Stencilable:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
}

impl<T> Stencilable for T where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>
{
}

/// Number of samples clipped at each end of a stream before derivatives
/// are defined.
pub const MARGIN: usize = 2;

/// First derivative, 4th order: (f[-2] - 8 f[-1] + 8 f[1] - f[2]) / (12 h).
///
/// Panics if `i` is not an interior index.
pub fn deriv1<T: Stencilable>(values: &[T], i: usize, h: f64) -> T {
    assert!(
        i >= MARGIN && i + MARGIN < values.len(),
        "index {i} not interior for stencil"
    );
    (values[i - 2] - values[i + 2] + (values[i + 1] - values[i - 1]) * 8.0) * (1.0 / (12.0 * h))
}

/// Second derivative, 4th order:
/// (-f[-2] + 16 f[-1] - 30 f[0] + 16 f[1] - f[2]) / (12 h^2).
pub fn deriv2<T: Stencilable>(values: &[T], i: usize, h: f64) -> T {
    assert!(
        i >= MARGIN && i + MARGIN < values.len(),
        "index {i} not interior for stencil"
    );
    ((values[i - 1] + values[i + 1]) * 16.0 - values[i] * 30.0 - values[i - 2] - values[i + 2])
        * (1.0 / (12.0 * h * h))
}

/// True when the stencil at `i` over a stream of length `len` only touches
/// indices for which `usable` returns true.
pub fn window_usable(len: usize, i: usize, usable: impl Fn(usize) -> bool) -> bool {
    if i < MARGIN || i + MARGIN >= len {
        return false;
    }
    (i - MARGIN..=i + MARGIN).all(usable)
}
