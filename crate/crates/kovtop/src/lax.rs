//! The three Lax representations of the flow: the projected 3x3 pair for the
//! state itself and the 2x2 pairs for the chart variables f and g, together
//! with their isospectral invariants.

use crate::e3_state::{EuclideanState, IntegralSet};
use crate::kov_vars::{FgCoords, FgStream};
use crate::rigid_dynamics::Trajectory;
use crate::stencil;
use crate::{Error, Result, C64};
use nalgebra::{Matrix2, Matrix3};

/// The 3x3 pair. Both matrices are conjugated by the projector
/// A = diag(1, 1, 0), so their third row and column vanish.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaxPair3 {
    pub l2: Matrix3<f64>,
    pub m2: Matrix3<f64>,
}

impl LaxPair3 {
    /// trace(L2); equals 2 h1.
    pub fn trace(&self) -> f64 {
        self.l2.trace()
    }

    /// Determinant of the active 2x2 block of L2; equals h2. (The full 3x3
    /// determinant is identically zero because of the projector.)
    pub fn block_det(&self) -> f64 {
        self.l2[(0, 0)] * self.l2[(1, 1)] - self.l2[(0, 1)] * self.l2[(1, 0)]
    }
}

/// The 2x2 matrices built from the chart variables:
/// L from f, M from g (factor 1/4), N from f and constants (factor -1/8).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallLax {
    pub l: Matrix2<f64>,
    pub m: Matrix2<f64>,
    pub n: Matrix2<f64>,
}

fn m_hat(m: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::new(0.0, m[2], -m[1], -m[2], 0.0, m[0], m[1], -m[0], 0.0)
}

/// Build L2 = -A (2 m_hat^2 + gamma (x) n + n (x) gamma) A and
/// M2 = -A m_hat A, with gamma = (1, 0, 0).
pub fn build_l2_m2(state: &EuclideanState) -> LaxPair3 {
    let a = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
    let mh = m_hat(&state.m);
    let gamma = nalgebra::Vector3::new(1.0, 0.0, 0.0);
    let n = nalgebra::Vector3::new(state.n[0], state.n[1], state.n[2]);
    let sym = gamma * n.transpose() + n * gamma.transpose();
    let l2 = -(a * (2.0 * mh * mh + sym) * a);
    let m2 = -(a * mh * a);
    LaxPair3 { l2, m2 }
}

/// det(s I - L2): the characteristic polynomial, equal to
/// s (s^2 - 2 h1 s + h2) identically in s.
pub fn spectral_poly_l2(state: &EuclideanState, s: C64) -> C64 {
    let pair = build_l2_m2(state);
    let mut m = Matrix2::zeros();
    // Third row/column of L2 vanish, so det(sI - L2) = s * det(sI2 - block).
    for i in 0..2 {
        for j in 0..2 {
            m[(i, j)] = pair.l2[(i, j)];
        }
    }
    let det_block = (s - m[(0, 0)]) * (s - m[(1, 1)]) - m[(0, 1)] * m[(1, 0)];
    s * det_block
}

/// Nontrivial coefficients (c1, c2) of det(sI - L2)/s = s^2 + c2 s + c1,
/// extracted by evaluation at s in {0, +-1, 2} and Lagrange interpolation
/// instead of symbolic expansion.
pub fn spectral_coefficients(state: &EuclideanState) -> (f64, f64) {
    let nodes = [0.0, 1.0, -1.0, 2.0];
    let values: Vec<C64> = nodes
        .iter()
        .map(|&x| spectral_poly_l2(state, C64::new(x, 0.0)))
        .collect();
    // p(s) = s^3 + c2 s^2 + c1 s + c0 through 4 nodes; Lagrange weights.
    let mut c = [0.0_f64; 4]; // ascending
    for (j, &xj) in nodes.iter().enumerate() {
        // ell_j(s) = prod_{k != j} (s - x_k) / (x_j - x_k), expanded.
        let mut num = vec![1.0];
        let mut den = 1.0;
        for (k, &xk) in nodes.iter().enumerate() {
            if k != j {
                num = crate::poly::mul(&num, &[-xk, 1.0]);
                den *= xj - xk;
            }
        }
        for (deg, v) in num.iter().enumerate() {
            c[deg] += v / den * values[j].re;
        }
    }
    (c[1], c[2])
}

/// Build the 2x2 matrices from a chart point. Fails when the hyperboloid
/// constraints are violated beyond `1e-8`-scale tolerance.
pub fn build_small_lax(fg: &FgCoords, integ: &IntegralSet) -> Result<SmallLax> {
    let (c1, c2) = fg.constraint_residuals();
    let scale = 1.0 + fg.f.iter().chain(&fg.g).fold(0.0_f64, |a, v| a.max(v.abs()));
    let tolerance = 1e-8 * scale * scale;
    let residual = c1.abs().max(c2.abs());
    if residual > tolerance {
        return Err(Error::ConstraintViolation {
            residual,
            tolerance,
        });
    }
    let [f1, f2, f3] = fg.f;
    let [g1, g2, g3] = fg.g;
    let l = Matrix2::new(f2, f1, -f3, -f2);
    let m = 0.25 * Matrix2::new(-g2, g1, -g3, g2);
    let d = integ.c3 * f1 + 2.0 * integ.h1 * f2;
    let n = -0.125
        * Matrix2::new(
            d,
            f3 + integ.h1 * f1,
            integ.gamma4 * f1 + 2.0 * integ.c3 * f2 - integ.h1 * f3,
            -d,
        );
    Ok(SmallLax { l, m, n })
}

/// Which Lax equation to test in [`lax_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaxKind {
    /// L2' = [L2, M2] for the 3x3 pair.
    ThreeByThree,
    /// L' = [L, M] for the f-matrix.
    SmallF,
    /// M' = [L, N] for the g-matrix.
    SmallG,
}

fn commutator3(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix3<f64> {
    a * b - b * a
}

fn commutator2(a: &Matrix2<f64>, b: &Matrix2<f64>) -> Matrix2<f64> {
    a * b - b * a
}

fn max_abs3(m: &Matrix3<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn max_abs2(m: &Matrix2<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Max-norm of dX/dt - [P, Q] at the sample nearest `t`, where dX/dt is the
/// shared 4th-order stencil applied to the matrix stream and (X, P, Q) is
/// (L2, L2, M2), (L, L, M), or (M, L, N) according to `which`.
pub fn lax_residual(traj: &Trajectory, which: LaxKind, t: f64) -> Result<f64> {
    let lo = traj.times[0];
    let hi = *traj.times.last().unwrap();
    let margin = stencil::MARGIN as f64 * traj.sample_dt();
    if !(lo + margin..=hi - margin).contains(&t) {
        return Err(Error::TimeOutOfRange {
            t,
            lo: lo + margin,
            hi: hi - margin,
        });
    }
    let i = traj.nearest_index(t);
    let h = traj.sample_dt();
    match which {
        LaxKind::ThreeByThree => {
            let stream: Vec<Matrix3<f64>> =
                traj.states.iter().map(|s| build_l2_m2(s).l2).collect();
            let dl = stencil::deriv1(&stream, i, h);
            let pair = build_l2_m2(&traj.states[i]);
            Ok(max_abs3(&(dl - commutator3(&pair.l2, &pair.m2))))
        }
        LaxKind::SmallF | LaxKind::SmallG => {
            let fgs = FgStream::from_trajectory(traj, None);
            if !fgs.stencil_usable(i) {
                return Err(Error::ChartSingular {
                    m2_abs: traj.states[i].m[1].abs(),
                    threshold: crate::kov_vars::CHART_CHECK_MIN_M2,
                });
            }
            let integ = traj.initial_integrals();
            let small_at = |k: usize| build_small_lax(&fgs.fg[k].unwrap(), &integ);
            let center = small_at(i)?;
            let matrices: Result<Vec<SmallLax>> = (i - 2..=i + 2).map(small_at).collect();
            let matrices = matrices?;
            let pick = |sl: &SmallLax| match which {
                LaxKind::SmallF => sl.l,
                _ => sl.m,
            };
            let stream: Vec<Matrix2<f64>> = matrices.iter().map(pick).collect();
            let dx = stencil::deriv1(&stream, 2, h);
            let rhs = match which {
                LaxKind::SmallF => commutator2(&center.l, &center.m),
                _ => commutator2(&center.l, &center.n),
            };
            Ok(max_abs2(&(dx - rhs)))
        }
    }
}

/// Relative drift of the two nontrivial spectral coefficients along a
/// trajectory (isospectrality of the 3x3 pair).
pub fn spectral_drift(traj: &Trajectory) -> f64 {
    let (c1_0, c2_0) = spectral_coefficients(&traj.states[0]);
    let mut worst = 0.0_f64;
    for s in &traj.states {
        let (c1, c2) = spectral_coefficients(s);
        worst = worst
            .max((c1 - c1_0).abs() / c1_0.abs().max(1.0))
            .max((c2 - c2_0).abs() / c2_0.abs().max(1.0));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::e3_state::{integrals, SeededStates};
    use crate::kov_vars::to_fg;
    use approx::assert_relative_eq;

    #[test]
    fn rest_state_lax_pair() {
        let s = EuclideanState::new([0.0; 3], [1.0, 0.0, 0.0]);
        let pair = build_l2_m2(&s);
        let expected = Matrix3::from_diagonal(&nalgebra::Vector3::new(-2.0, 0.0, 0.0));
        assert_eq!(pair.l2, expected);
        assert_eq!(pair.m2, Matrix3::zeros());
        assert_relative_eq!(pair.trace(), 2.0 * integrals(&s).h1);
    }

    #[test]
    fn structure_invariants() {
        let mut gen = SeededStates::new(101);
        for s in gen.take(50) {
            let pair = build_l2_m2(&s);
            // Symmetry / antisymmetry and vanishing third row and column.
            assert!(max_abs3(&(pair.l2 - pair.l2.transpose())) < 1e-14);
            assert!(max_abs3(&(pair.m2 + pair.m2.transpose())) < 1e-14);
            for k in 0..3 {
                assert_eq!(pair.l2[(2, k)], 0.0);
                assert_eq!(pair.l2[(k, 2)], 0.0);
                assert_eq!(pair.m2[(2, k)], 0.0);
                assert_eq!(pair.m2[(k, 2)], 0.0);
            }
        }
    }

    #[test]
    fn trace_and_det_match_integrals() {
        let mut gen = SeededStates::new(103);
        for s in gen.take(100) {
            let integ = integrals(&s);
            let pair = build_l2_m2(&s);
            let scale = 1.0 + integ.h1.abs() + integ.h2.abs();
            assert!(
                (pair.trace() - 2.0 * integ.h1).abs() < 1e-12 * scale,
                "trace at {s:?}"
            );
            assert!(
                (pair.block_det() - integ.h2).abs() < 1e-10 * scale,
                "det {} vs h2 {}",
                pair.block_det(),
                integ.h2
            );
        }
    }

    #[test]
    fn spectral_poly_structure() {
        let mut gen = SeededStates::new(107);
        for s in gen.take(50) {
            // Factor of s at the origin.
            assert!(spectral_poly_l2(&s, C64::new(0.0, 0.0)).norm() < 1e-14);
            // Roots of P2 from the integrals are roots of the polynomial.
            let integ = integrals(&s);
            let disc = C64::new(integ.h1 * integ.h1 - integ.h2, 0.0).sqrt();
            for root in [C64::new(integ.h1, 0.0) + disc, C64::new(integ.h1, 0.0) - disc] {
                let v = spectral_poly_l2(&s, root);
                assert!(
                    v.norm() < 1e-9 * (1.0 + root.norm().powi(3)),
                    "P2 root {root}: {v}"
                );
            }
            // Extracted coefficients match the integrals.
            let (c1, c2) = spectral_coefficients(&s);
            assert_relative_eq!(c2, -2.0 * integ.h1, max_relative = 1e-10, epsilon = 1e-12);
            assert_relative_eq!(c1, integ.h2, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn small_lax_direct_substitution() {
        let s = EuclideanState::new([1.0, 1.0, 0.0], [0.5, -0.5, 0.0]);
        let integ = integrals(&s);
        let fg = to_fg(&s).unwrap();
        let sl = build_small_lax(&fg, &integ).unwrap();
        assert_eq!(sl.l, Matrix2::new(1.0, 1.0, -2.0, -1.0));
        assert_eq!(sl.m, Matrix2::zeros());
        assert_relative_eq!(sl.l.determinant(), 1.0);
    }

    #[test]
    fn small_lax_traces_vanish_and_det_is_one() {
        let mut gen = SeededStates::new(109);
        for s in gen.take(100) {
            let integ = integrals(&s);
            let fg = to_fg(&s).unwrap();
            let sl = build_small_lax(&fg, &integ).unwrap();
            assert!(sl.l.trace().abs() < 1e-14);
            assert!(sl.m.trace().abs() < 1e-14);
            assert!(sl.n.trace().abs() < 1e-14);
            let scale = 1.0 + fg.f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            assert!((sl.l.determinant() - 1.0).abs() < 1e-10 * scale * scale);
        }
    }

    #[test]
    fn small_lax_n_matches_independent_evaluation() {
        let mut gen = SeededStates::new(113);
        let s = gen.next_state();
        let integ = integrals(&s);
        let fg = to_fg(&s).unwrap();
        let sl = build_small_lax(&fg, &integ).unwrap();
        let [f1, f2, f3] = fg.f;
        // Entry-by-entry from the definition, written independently.
        let n11 = -(integ.c3 * f1 + 2.0 * integ.h1 * f2) / 8.0;
        let n12 = -(f3 + integ.h1 * f1) / 8.0;
        let n21 = -((integ.c4 - integ.k2) * f1 + 2.0 * integ.c3 * f2 - integ.h1 * f3) / 8.0;
        assert_relative_eq!(sl.n[(0, 0)], n11, max_relative = 1e-14);
        assert_relative_eq!(sl.n[(0, 1)], n12, max_relative = 1e-14);
        assert_relative_eq!(sl.n[(1, 0)], n21, max_relative = 1e-14);
        assert_relative_eq!(sl.n[(1, 1)], -n11, max_relative = 1e-14);
    }

    #[test]
    fn constraint_violation_detected() {
        let fg = FgCoords {
            f: [1.0, 1.0, 2.5],
            g: [0.0; 3],
        };
        let integ = IntegralSet {
            h1: 0.0,
            k2: 0.0,
            c3: 0.0,
            c4: 0.0,
            h2: 0.0,
            gamma4: 0.0,
        };
        assert!(matches!(
            build_small_lax(&fg, &integ),
            Err(Error::ConstraintViolation { .. })
        ));
    }

    #[test]
    fn commutator_trace_vanishes() {
        let mut gen = SeededStates::new(127);
        for s in gen.take(50) {
            let integ = integrals(&s);
            let fg = to_fg(&s).unwrap();
            let sl = build_small_lax(&fg, &integ).unwrap();
            assert!(commutator2(&sl.l, &sl.m).trace().abs() < 1e-14);
            let pair = build_l2_m2(&s);
            assert!(commutator3(&pair.l2, &pair.m2).trace().abs() < 1e-14);
        }
    }
}
