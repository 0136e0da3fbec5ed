//! Small dense-polynomial helpers over complex coefficients.
//!
//! Coefficients are stored in ascending order: `c[0] + c[1] s + c[2] s^2 + ...`.

use crate::{Error, Result, C64};
use nalgebra::Matrix3;

/// Horner evaluation of an ascending-coefficient polynomial.
pub fn eval(coeffs: &[C64], s: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * s + c;
    }
    acc
}

/// Horner evaluation with real coefficients.
pub fn eval_real(coeffs: &[f64], s: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * s + c;
    }
    acc
}

/// Coefficient convolution (polynomial product).
pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Derivative of an ascending-coefficient real polynomial.
pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Roots of the real cubic `c0 + c1 s + c2 s^2 + c3 s^3` via the companion
/// matrix of the monic form, one Newton polish step, and lexicographic
/// ordering by (real part, imaginary part).
pub fn cubic_roots(coeffs: &[f64; 4]) -> Result<[C64; 3]> {
    let lead = coeffs[3];
    if lead == 0.0 || !coeffs.iter().all(|c| c.is_finite()) {
        return Err(Error::RootSolver(format!(
            "not a finite cubic: {coeffs:?}"
        )));
    }
    let a0 = coeffs[0] / lead;
    let a1 = coeffs[1] / lead;
    let a2 = coeffs[2] / lead;
    let companion = Matrix3::new(0.0, 0.0, -a0, 1.0, 0.0, -a1, 0.0, 1.0, -a2);
    let eig = companion.complex_eigenvalues();
    let p = [C64::from(a0), C64::from(a1), C64::from(a2), C64::from(1.0)];
    let dp = [C64::from(a1), C64::from(2.0 * a2), C64::from(3.0)];
    let mut roots = [C64::new(0.0, 0.0); 3];
    for (i, r) in eig.iter().enumerate() {
        let mut z = *r;
        let d = eval(&dp, z);
        if d.norm() > 1e-14 {
            z -= eval(&p, z) / d;
        }
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::RootSolver(format!("root {i} not finite")));
        }
        roots[i] = z;
    }
    roots.sort_by(|a, b| {
        (a.re, a.im)
            .partial_cmp(&(b.re, b.im))
            .expect("finite roots")
    });
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn cubic_roots_real_and_complex() {
        // (s - 1)(s - 2)(s - 3) = s^3 - 6 s^2 + 11 s - 6
        let r = cubic_roots(&[-6.0, 11.0, -6.0, 1.0]).unwrap();
        for (got, want) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).norm() < 1e-12, "{got} vs {want}");
        }
        // (s + 1)(s^2 + 4) has roots -1, +-2i
        let r = cubic_roots(&[4.0, 4.0, 1.0, 1.0]).unwrap();
        assert!((r[0] - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((r[1] - c(0.0, -2.0)).norm() < 1e-12);
        assert!((r[2] - c(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn cubic_roots_random_reconstruction() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let coeffs = [
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(0.5..2.0),
            ];
            let roots = cubic_roots(&coeffs).unwrap();
            // Reconstruct the monic cubic from its roots and compare.
            let sum = roots[0] + roots[1] + roots[2];
            let pair = roots[0] * roots[1] + roots[0] * roots[2] + roots[1] * roots[2];
            let prod = roots[0] * roots[1] * roots[2];
            let lead = coeffs[3];
            assert!((sum + coeffs[2] / lead).norm() < 1e-9);
            assert!((pair - coeffs[1] / lead).norm() < 1e-9);
            assert!((prod + coeffs[0] / lead).norm() < 1e-9);
        }
    }

    #[test]
    fn convolution_matches_pointwise_product() {
        let a = [1.0, -2.0, 3.0];
        let b = [0.5, 0.0, -1.0, 2.0];
        let ab = mul(&a, &b);
        for s in [c(0.3, 0.7), c(-1.2, 0.1), c(2.0, -2.0)] {
            let lhs = eval_real(&ab, s);
            let rhs = eval_real(&a, s) * eval_real(&b, s);
            assert!((lhs - rhs).norm() < 1e-12 * rhs.norm().max(1.0));
        }
    }
}
