//! The Kötter identity, the polynomial family P2, P3, P5, Q1, Q2, and the
//! branch-tracked transform from the chart variables to the (x, y) variables
//! that land on the Clebsch system.
//!
//! Branch conventions, fixed once and used everywhere:
//!
//! * x_j is defined algebraically through Q2(a_j) = i sqrt(2 a_j) x_j with
//!   the principal branch of sqrt(2 a_j); the square-root definition
//!   x_j^2 = (s1 - a_j)(s2 - a_j) is demoted to a verification identity.
//! * sqrt(a_k a_l) is fixed by sqrt(2 a_j) sqrt(a_k a_l) = -2 c3, which makes
//!   the inverse transform exactly the Lagrange reconstruction of the
//!   quadratic Q2 from its three values Q2(a_j).
//! * sqrt(2 P5(s_i)) is defined from the dynamics at a reference sample,
//!   sqrt(2 P5(s_1)) := -i (s1 - s2) s1', and continued by sign continuity
//!   along the trajectory.

use crate::e3_state::{bracket_of_gradients, ChartDiffs, IntegralSet, Observable};
use crate::kov_vars::{s_forms, FgCoords, FgStream, SpectralVars};
use crate::poly;
use crate::rigid_dynamics::Trajectory;
use crate::stencil;
use crate::{Error, Result, C64};

/// Collision tolerance: samples with |s1 - s2| below this (relative) bound
/// are excluded from the transform.
pub const COLLISION_TOL: f64 = 1e-6;

/// Coefficient vectors (ascending order) of the polynomial family and the
/// roots of P3.
#[derive(Debug, Clone)]
pub struct KovPolynomials {
    /// P2 = s^2 - 2 h1 s + h2.
    pub p2: [f64; 3],
    /// P3 = s P2 + c4 s - 2 c3^2.
    pub p3: [f64; 4],
    /// P5 = P3 P2 (exact coefficient convolution).
    pub p5: [f64; 6],
    /// Q1 = f1^2 s - 2 f2^2.
    pub q1: [f64; 2],
    /// Q2 = f1 s^2 - (f3 + h1 f1) s - 2 c3 f2.
    pub q2: [f64; 3],
    /// Roots of P3, ordered lexicographically by (re, im).
    pub a: [C64; 3],
    /// Roots of P2: h1 -+ k (always real since k2 >= 0).
    pub p2_roots: [f64; 2],
}

/// Q2 coefficients at a chart point.
pub fn q2_coeffs(fg: &FgCoords, integ: &IntegralSet) -> [f64; 3] {
    let [f1, f2, f3] = fg.f;
    [-2.0 * integ.c3 * f2, -(f3 + integ.h1 * f1), f1]
}

/// Build the polynomial family and the roots a_j.
pub fn build_polynomials(integ: &IntegralSet, fg: &FgCoords) -> Result<KovPolynomials> {
    let p2 = [integ.h2, -2.0 * integ.h1, 1.0];
    let p3 = [
        -2.0 * integ.c3 * integ.c3,
        integ.h2 + integ.c4,
        -2.0 * integ.h1,
        1.0,
    ];
    let p5_vec = poly::mul(&p3, &p2);
    let mut p5 = [0.0; 6];
    p5.copy_from_slice(&p5_vec);
    let [f1, f2, _] = fg.f;
    let q1 = [-2.0 * f2 * f2, f1 * f1];
    let a = poly::cubic_roots(&p3)?;
    let k = integ.k2.max(0.0).sqrt();
    Ok(KovPolynomials {
        p2,
        p3,
        p5,
        q1,
        q2: q2_coeffs(fg, integ),
        a,
        p2_roots: [integ.h1 - k, integ.h1 + k],
    })
}

impl KovPolynomials {
    /// P3'(a_j) = prod_{k != j} (a_j - a_k).
    pub fn p3_prime(&self, j: usize) -> C64 {
        let mut out = C64::new(1.0, 0.0);
        for k in 0..3 {
            if k != j {
                out *= self.a[j] - self.a[k];
            }
        }
        out
    }

    /// Principal branch of sqrt(2 a_j), the frozen per-trajectory choice.
    pub fn sqrt_2a(&self, j: usize) -> C64 {
        (2.0 * self.a[j]).sqrt()
    }

    /// P5 evaluated in fully factored form. Near the roots the expanded
    /// Horner form cancels catastrophically (terms ~|s|^5 against a tiny
    /// value); the factored product keeps every digit that matters for the
    /// square roots of the Abel differentials.
    pub fn eval_p5_factored(&self, s: C64) -> C64 {
        (s - self.a[0])
            * (s - self.a[1])
            * (s - self.a[2])
            * (s - self.p2_roots[0])
            * (s - self.p2_roots[1])
    }

    /// Fails when P3 has a (near-)repeated root.
    pub fn require_distinct_roots(&self) -> Result<()> {
        let scale = 1.0 + self.a.iter().map(|a| a.norm()).fold(0.0, f64::max);
        for i in 0..3 {
            for j in (i + 1)..3 {
                let gap = (self.a[i] - self.a[j]).norm();
                if gap < 1e-9 * scale {
                    return Err(Error::RepeatedRoot { i, j, gap });
                }
            }
        }
        Ok(())
    }

    /// Fails when some a_j vanishes (happens exactly when c3 = 0, where the
    /// transform divides by sqrt(2 a_j)).
    pub fn require_nonzero_roots(&self) -> Result<()> {
        let scale = 1.0 + self.a.iter().map(|a| a.norm()).fold(0.0, f64::max);
        for (j, a) in self.a.iter().enumerate() {
            if a.norm() < 1e-9 * scale {
                return Err(Error::ZeroRoot { index: j });
            }
        }
        Ok(())
    }
}

/// Residual of the Kötter identity at one point:
/// -2 s F(s) - Q2^2(s) + P3(s) Q1(s), identically zero.
pub fn koetter_residual(polys: &KovPolynomials, sv: &SpectralVars, s: C64) -> C64 {
    let f = (s - sv.s1_form) * s + sv.s2_form;
    let q2 = poly::eval_real(&polys.q2, s);
    let p3 = poly::eval_real(&polys.p3, s);
    let q1 = poly::eval_real(&polys.q1, s);
    -2.0 * s * f - q2 * q2 + p3 * q1
}

/// Coefficient vector of -2sF - Q2^2 + P3 Q1 (degree 4 slots; all must
/// vanish) together with the natural scale of the terms entering it.
pub fn koetter_coefficient_residual(polys: &KovPolynomials, sv: &SpectralVars) -> ([f64; 5], f64) {
    let minus_two_s_f = [0.0, -2.0 * sv.s2_form, 2.0 * sv.s1_form, -2.0, 0.0];
    let q2_sq = poly::mul(&polys.q2, &polys.q2);
    let p3_q1 = poly::mul(&polys.p3, &polys.q1);
    let mut out = [0.0; 5];
    let mut scale = 1.0_f64;
    for k in 0..5 {
        let a = minus_two_s_f[k];
        let b = q2_sq[k];
        let c = p3_q1[k];
        out[k] = a - b + c;
        scale = scale.max(a.abs()).max(b.abs()).max(c.abs());
    }
    (out, scale)
}

/// The transformed variables at one sample.
#[derive(Debug, Clone, Copy)]
pub struct XyCoords {
    pub x: [C64; 3],
    pub y: [C64; 3],
}

/// Branch-tracked separation data along one trajectory, shared between this
/// module and the Abel–Jacobi checks. Single-threaded per trajectory.
#[derive(Debug, Clone)]
pub struct SeparatedSeries {
    pub times: Vec<f64>,
    pub sample_dt: f64,
    pub integ: IntegralSet,
    pub polys: KovPolynomials,
    /// Continuity-tracked separation roots.
    pub s: Vec<Option<(C64, C64)>>,
    /// Stencil time derivatives of the tracked roots.
    pub sdot: Vec<Option<(C64, C64)>>,
    /// Exact bracket-flow derivatives s_i' = {H, s_i}.
    pub sdot_exact: Vec<Option<(C64, C64)>>,
    /// Sign-tracked sqrt(2 P5(s_i)) streams.
    pub w: Vec<Option<(C64, C64)>>,
    /// Per-sample chart data (None where excluded).
    pub fg: Vec<Option<FgCoords>>,
    /// Sample where the square-root signs were fixed from the dynamics.
    pub reference_index: usize,
    pub excluded_chart: usize,
    pub excluded_collision: usize,
}

impl SeparatedSeries {
    /// Build the tracked streams from a trajectory.
    pub fn new(traj: &Trajectory) -> Result<Self> {
        let stream = FgStream::from_trajectory(traj, None);
        let integ = stream.integ;
        let n = stream.times.len();

        // Reference chart sample for the polynomial snapshot.
        let first_fg = stream
            .fg
            .iter()
            .flatten()
            .next()
            .ok_or(Error::InsufficientSamples {
                op: "separate",
                got: 0,
                need: 5,
            })?;
        let polys = build_polynomials(&integ, first_fg)?;
        polys.require_distinct_roots()?;
        polys.require_nonzero_roots()?;

        // Continuity-tracked roots, plus the exact bracket-flow derivatives
        // s_i' = {H, s_i} used below to resolve square-root signs near
        // turning points (where stencil data cannot decide).
        let mut s: Vec<Option<(C64, C64)>> = vec![None; n];
        let mut sdot_exact: Vec<Option<(C64, C64)>> = vec![None; n];
        let mut excluded_collision = 0;
        let mut prev: Option<(C64, C64)> = None;
        for i in 0..n {
            let Some(fg) = stream.fg[i] else { continue };
            let sv = s_forms(&fg, &integ);
            let (mut c1, mut c2) = (sv.s1, sv.s2);
            if (c1 - c2).norm() < COLLISION_TOL * (1.0 + c1.norm()) {
                excluded_collision += 1;
                continue;
            }
            let mut swapped = false;
            if let Some((p1, p2)) = prev {
                if (c1 - p1).norm() + (c2 - p2).norm() > (c2 - p1).norm() + (c1 - p2).norm() {
                    std::mem::swap(&mut c1, &mut c2);
                    swapped = true;
                }
            }
            s[i] = Some((c1, c2));
            prev = Some((c1, c2));
            let diffs = ChartDiffs::full(&traj.states[i]);
            let (r1, r2) = diffs.separation_roots();
            let gh = Observable::H.gradient(&traj.states[i]);
            let d1 = bracket_of_gradients(&gh, &r1.g, &traj.states[i]);
            let d2 = bracket_of_gradients(&gh, &r2.g, &traj.states[i]);
            sdot_exact[i] = Some(if swapped { (d2, d1) } else { (d1, d2) });
        }

        // Stencil derivatives wherever the 5-point window is fully tracked.
        let usable = |k: usize| s[k].is_some();
        let mut sdot: Vec<Option<(C64, C64)>> = vec![None; n];
        let s1_series: Vec<C64> = s
            .iter()
            .map(|o| o.map(|(a, _)| a).unwrap_or_default())
            .collect();
        let s2_series: Vec<C64> = s
            .iter()
            .map(|o| o.map(|(_, b)| b).unwrap_or_default())
            .collect();
        for i in 0..n {
            if stencil::window_usable(n, i, usable) {
                sdot[i] = Some((
                    stencil::deriv1(&s1_series, i, stream.sample_dt),
                    stencil::deriv1(&s2_series, i, stream.sample_dt),
                ));
            }
        }

        // Square roots of 2 P5(s_i). The sign comes from the dynamics,
        // sqrt(2 P5(s_1)) = -i (s1 - s2) s1': s_i reverses at the turning
        // points of the curve, where the square root passes through zero and
        // must change sign; plain continuity would pick noise there.
        // Continuity is the fallback where no derivative is available.
        let reference_index =
            (0..n)
                .find(|&i| sdot[i].is_some())
                .ok_or(Error::InsufficientSamples {
                    op: "separate",
                    got: 0,
                    need: 5,
                })?;
        let sqrt_2p5 = |si: C64| (2.0 * polys.eval_p5_factored(si)).sqrt();
        let pick = |principal: C64, target: C64| {
            if (principal - target).norm() <= (-principal - target).norm() {
                principal
            } else {
                -principal
            }
        };
        let i_unit = C64::new(0.0, 1.0);
        let mut w: Vec<Option<(C64, C64)>> = vec![None; n];
        // Per-root sign choice. The bracket-flow target -i (s_i - s_j) s_i'
        // is machine-accurate, so it decides the sign everywhere except at a
        // numerically exact turning point; fall back to linear extrapolation
        // there (w crosses zero linearly in t) and to plain continuity at
        // stream edges.
        let mut hist: [Option<(C64, C64)>; 2] = [None, None];
        for i in 0..n {
            let Some((s1, s2)) = s[i] else { continue };
            let (p1, p2) = (sqrt_2p5(s1), sqrt_2p5(s2));
            let dynamic =
                sdot_exact[i].map(|(d1, d2)| (-i_unit * (s1 - s2) * d1, -i_unit * (s2 - s1) * d2));
            let choose = |p: C64, d: Option<C64>, prev: Option<C64>, prev2: Option<C64>| {
                if let Some(t) = d {
                    if t.norm() > 1e-10 * (1.0 + p.norm()) {
                        return Some(pick(p, t));
                    }
                }
                match (prev, prev2) {
                    (Some(l1), Some(l2)) => Some(pick(p, 2.0 * l1 - l2)),
                    (Some(l1), None) => Some(pick(p, l1)),
                    _ => d.map(|t| pick(p, t)),
                }
            };
            let w1 = choose(
                p1,
                dynamic.map(|(a, _)| a),
                hist[0].map(|(a, _)| a),
                hist[1].map(|(a, _)| a),
            );
            let w2 = choose(
                p2,
                dynamic.map(|(_, b)| b),
                hist[0].map(|(_, b)| b),
                hist[1].map(|(_, b)| b),
            );
            if let (Some(w1), Some(w2)) = (w1, w2) {
                w[i] = Some((w1, w2));
                hist = [Some((w1, w2)), hist[0]];
            }
        }
        // Leading samples before the first assignable one: continue backward.
        if let Some(first) = (0..n).find(|&i| w[i].is_some()) {
            let mut lastb = w[first].unwrap();
            for i in (0..first).rev() {
                if let Some((s1, s2)) = s[i] {
                    let wi = (pick(sqrt_2p5(s1), lastb.0), pick(sqrt_2p5(s2), lastb.1));
                    w[i] = Some(wi);
                    lastb = wi;
                }
            }
        }

        Ok(Self {
            times: stream.times,
            sample_dt: stream.sample_dt,
            integ,
            polys,
            s,
            sdot,
            sdot_exact,
            w,
            fg: stream.fg,
            reference_index,
            excluded_chart: stream.excluded,
            excluded_collision,
        })
    }

    /// Sample usable for the full transform (chart, roots, derivative, sqrt).
    pub fn fully_usable(&self, i: usize) -> bool {
        self.fg[i].is_some() && self.s[i].is_some() && self.sdot[i].is_some() && self.w[i].is_some()
    }

    pub fn usable_indices(&self) -> Vec<usize> {
        (0..self.times.len())
            .filter(|&i| self.fully_usable(i))
            .collect()
    }
}

/// The (x, y) time series with branch bookkeeping.
#[derive(Debug, Clone)]
pub struct XySeries {
    pub series: SeparatedSeries,
    /// Transformed coordinates; None at excluded samples.
    pub xy: Vec<Option<XyCoords>>,
    /// Sample-to-sample jumps not explained by the local increment scale.
    pub unexplained_jumps: usize,
}

/// Transform a trajectory to the (x, y) variables.
pub fn to_xy(traj: &Trajectory) -> Result<XySeries> {
    to_xy_from_series(SeparatedSeries::new(traj)?)
}

/// Transform pre-built separation streams.
pub fn to_xy_from_series(series: SeparatedSeries) -> Result<XySeries> {
    let n = series.times.len();
    let polys = &series.polys;
    let i_unit = C64::new(0.0, 1.0);
    let mut xy: Vec<Option<XyCoords>> = vec![None; n];
    for idx in 0..n {
        if !series.fully_usable(idx) {
            continue;
        }
        let fg = series.fg[idx].unwrap();
        let (s1, s2) = series.s[idx].unwrap();
        let (w1, w2) = series.w[idx].unwrap();
        let q2 = q2_coeffs(&fg, &series.integ);
        let mut x = [C64::default(); 3];
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = poly::eval_real(&q2, polys.a[j]) / (i_unit * polys.sqrt_2a(j));
        }
        // y_j = x_k x_l / (s1 - s2) * (sqrt(P5(s1)) / ((s1-a_k)(s1-a_l))
        //                            - sqrt(P5(s2)) / ((s2-a_k)(s2-a_l)))
        // with sqrt(P5(s_i)) = w_i / sqrt(2).
        let sqrt_p5_1 = w1 / C64::new(std::f64::consts::SQRT_2, 0.0);
        let sqrt_p5_2 = w2 / C64::new(std::f64::consts::SQRT_2, 0.0);
        let mut y = [C64::default(); 3];
        for (j, yj) in y.iter_mut().enumerate() {
            let (k, l) = ((j + 1) % 3, (j + 2) % 3);
            let term1 = sqrt_p5_1 / ((s1 - polys.a[k]) * (s1 - polys.a[l]));
            let term2 = sqrt_p5_2 / ((s2 - polys.a[k]) * (s2 - polys.a[l]));
            *yj = x[k] * x[l] / (s1 - s2) * (term1 - term2);
        }
        xy[idx] = Some(XyCoords { x, y });
    }

    // Branch coherence: a genuine branch flip makes one increment ~2|x|,
    // towering over both neighboring increments. Smooth extrema, where the
    // increment ramps through zero, stay below the threshold because the
    // smaller neighbor is compared.
    let mut unexplained_jumps = 0;
    let idxs: Vec<usize> = (0..n).filter(|&i| xy[i].is_some()).collect();
    for w in idxs.windows(4) {
        if w[3] != w[0] + 3 {
            continue;
        }
        let vals: Vec<XyCoords> = w.iter().map(|&i| xy[i].unwrap()).collect();
        for j in 0..3 {
            let streams = [
                [vals[0].x[j], vals[1].x[j], vals[2].x[j], vals[3].x[j]],
                [vals[0].y[j], vals[1].y[j], vals[2].y[j], vals[3].y[j]],
            ];
            for q in &streams {
                let d0 = (q[1] - q[0]).norm();
                let d1 = (q[2] - q[1]).norm();
                let d2 = (q[3] - q[2]).norm();
                let floor = 1e-9 * (1.0 + q[1].norm());
                if d1 > 10.0 * (d0.max(d2) + floor) {
                    unexplained_jumps += 1;
                }
            }
        }
    }

    Ok(XySeries {
        series,
        xy,
        unexplained_jumps,
    })
}

/// Invert the x-transform: recover f from the three values
/// Q2(a_j) = i sqrt(2 a_j) x_j by Lagrange reconstruction of the quadratic
/// Q2. The result must be real on the physical locus; the imaginary residue
/// is checked against `imag_tol` and then truncated.
pub fn from_x(
    x: &[C64; 3],
    polys: &KovPolynomials,
    integ: &IntegralSet,
    imag_tol: f64,
) -> Result<[f64; 3]> {
    polys.require_distinct_roots()?;
    polys.require_nonzero_roots()?;
    let q_at_a: Vec<C64> = (0..3)
        .map(|j| C64::new(0.0, 1.0) * polys.sqrt_2a(j) * x[j])
        .collect();
    reconstruct_from_quadratic_values(&q_at_a, polys, integ, imag_tol)
}

/// Invert the y-transform; recovers g.
///
/// Same Lagrange reconstruction as [`from_x`], with the y-side normalization
/// fixed against the dynamics: the interpolated values are
/// -sqrt(2) i sqrt(2 a_j) y_j and the middle component uses the conjugate
/// sqrt(a_k a_l) branch (sqrt(2 a_j) sqrt(a_k a_l) = +2 c3). Both constants
/// are pinned by the g -> y -> g round trip; see the module docs.
pub fn from_y(
    y: &[C64; 3],
    polys: &KovPolynomials,
    integ: &IntegralSet,
    imag_tol: f64,
) -> Result<[f64; 3]> {
    polys.require_distinct_roots()?;
    polys.require_nonzero_roots()?;
    let scale = -std::f64::consts::SQRT_2;
    let r_at_a: Vec<C64> = (0..3)
        .map(|j| C64::new(0.0, scale) * polys.sqrt_2a(j) * y[j])
        .collect();
    let g = reconstruct_from_quadratic_values(&r_at_a, polys, integ, imag_tol)?;
    Ok([g[0], -g[1], g[2]])
}

/// Shared inverse: given values v_j of the quadratic
/// V(s) = u1 s^2 - (u3 + h1 u1) s - 2 c3 u2 at the roots a_j, recover
/// (u1, u2, u3) by Lagrange interpolation.
fn reconstruct_from_quadratic_values(
    v_at_a: &[C64],
    polys: &KovPolynomials,
    integ: &IntegralSet,
    imag_tol: f64,
) -> Result<[f64; 3]> {
    let sum_a = polys.a[0] + polys.a[1] + polys.a[2];
    let mut lead = C64::default(); // u1
    let mut lin = C64::default(); // -(u3 + h1 u1)
    let mut cst = C64::default(); // -2 c3 u2
    for j in 0..3 {
        let (k, l) = ((j + 1) % 3, (j + 2) % 3);
        let weight = v_at_a[j] / polys.p3_prime(j);
        lead += weight;
        lin -= weight * (sum_a - polys.a[j]);
        cst += weight * polys.a[k] * polys.a[l];
    }
    if integ.c3.abs() < 1e-12 {
        return Err(Error::ZeroRoot { index: 0 });
    }
    let u1 = lead;
    let u2 = cst / C64::new(-2.0 * integ.c3, 0.0);
    let u3 = -lin - integ.h1 * u1;
    let out = [u1, u2, u3];
    let scale = 1.0 + out.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let residue = out.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if residue > imag_tol * scale {
        return Err(Error::ImaginaryResidue {
            residue,
            tolerance: imag_tol * scale,
        });
    }
    Ok([u1.re, u2.re, u3.re])
}
