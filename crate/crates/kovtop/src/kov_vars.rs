//! The Kovalevskaya chart (f, g), the quadratic forms S1, S2, T1, T2, the
//! separation variables s1, s2, the transformed equations of motion, and the
//! Poisson-commutativity checks.
//!
//! The chart lives on m2 != 0:
//!
//! ```text
//! f = (1/m2, m1/m2, (m1^2 + m2^2)/m2)
//! g = (2 m3/m2, n3/m2, -(2/m2)((m1^2 + m2^2) m3 + m1 n3))
//! ```
//!
//! and satisfies f1 f3 - f2^2 = 1 and f1 g3 + 2 f2 g2 + f3 g1 = 0, the
//! cotangent-bundle relations of a two-sheet hyperboloid. No automatic chart
//! switching is attempted: trajectory samples too close to m2 = 0 are
//! excluded from chart-based checks and counted.

use crate::e3_state::{
    bracket_dd, chart_dd, ChartDiffs, EuclideanState, IntegralSet, CHART_THRESHOLD,
};
use crate::rigid_dynamics::{eom, Trajectory};
use crate::stencil;
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};

/// |m2| below which a sample is excluded from chart-based residual checks.
/// Stricter than [`CHART_THRESHOLD`]: near the chart singularity the f, g
/// values are finite but large enough to eat the residual budgets.
pub const CHART_CHECK_MIN_M2: f64 = 0.05;

/// The Kovalevskaya chart variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgCoords {
    pub f: [f64; 3],
    pub g: [f64; 3],
}

impl FgCoords {
    /// Residuals of the two hyperboloid relations
    /// (f1 f3 - f2^2 - 1, f1 g3 + 2 f2 g2 + f3 g1).
    pub fn constraint_residuals(&self) -> (f64, f64) {
        let [f1, f2, f3] = self.f;
        let [g1, g2, g3] = self.g;
        (f1 * f3 - f2 * f2 - 1.0, f1 * g3 + 2.0 * f2 * g2 + f3 * g1)
    }
}

/// Separation data at one phase-space point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralVars {
    pub s1_form: f64,
    pub s2_form: f64,
    pub t1_form: f64,
    pub t2_form: f64,
    /// Root of s^2 - S1 s + S2 with larger real part (ties: larger imaginary).
    pub s1: C64,
    pub s2: C64,
    /// nu = h1 - S1.
    pub nu: f64,
    /// Discriminant S1^2 - 4 S2 within root-solver noise of zero.
    pub double_root: bool,
}

impl SpectralVars {
    /// One member of the commuting family: (S1 + 2 lambda H1, S2 + lambda H2).
    pub fn lambda_family(&self, lambda: f64, integ: &IntegralSet) -> (f64, f64) {
        (
            self.s1_form + 2.0 * lambda * integ.h1,
            self.s2_form + lambda * integ.h2,
        )
    }
}

/// Map a state to the chart. Fails within [`CHART_THRESHOLD`] of m2 = 0.
pub fn to_fg(state: &EuclideanState) -> Result<FgCoords> {
    let [m1, m2, m3] = state.m;
    let n3 = state.n[2];
    if m2.abs() < CHART_THRESHOLD {
        return Err(Error::ChartSingular {
            m2_abs: m2.abs(),
            threshold: CHART_THRESHOLD,
        });
    }
    let msq = m1 * m1 + m2 * m2;
    Ok(FgCoords {
        f: [1.0 / m2, m1 / m2, msq / m2],
        g: [
            2.0 * m3 / m2,
            n3 / m2,
            -(2.0 / m2) * (msq * m3 + m1 * n3),
        ],
    })
}

/// Recover (n1, n2) from m, n3, and the integral values by solving the two
/// linear equations
///
/// ```text
/// m1 n1 + m2 n2                    = c3 - m3 n3
/// (m1^2 - m2^2) n1 + 2 m1 m2 n2    = (n3^2 - (m1^2 + m2^2)^2 + k2 - c4) / 2
/// ```
pub fn reconstruct_n12(m: &[f64; 3], n3: f64, integ: &IntegralSet) -> Result<(f64, f64)> {
    let [m1, m2, m3] = *m;
    let msq = m1 * m1 + m2 * m2;
    let det = m2 * msq;
    if det.abs() < 1e-12 {
        return Err(Error::SingularReconstruction { det });
    }
    let r1 = integ.c3 - m3 * n3;
    let r2 = 0.5 * (n3 * n3 - msq * msq + integ.k2 - integ.c4);
    // Cramer on [[m1, m2], [m1^2 - m2^2, 2 m1 m2]].
    let n1 = (r1 * 2.0 * m1 * m2 - r2 * m2) / det;
    let n2 = (r2 * m1 - r1 * (m1 * m1 - m2 * m2)) / det;
    Ok((n1, n2))
}

/// S1(f) = ((f3 + h1 f1)^2 - 4 c3 f1 f2 - (c4 + h2) f1^2 - 4 h1 f2^2) / 2.
pub fn s1_form(f: &[f64; 3], integ: &IntegralSet) -> f64 {
    let [f1, f2, f3] = *f;
    let a = f3 + integ.h1 * f1;
    0.5 * (a * a
        - 4.0 * integ.c3 * f1 * f2
        - (integ.c4 + integ.h2) * f1 * f1
        - 4.0 * integ.h1 * f2 * f2)
}

/// S2(f) = -2 c3 (f3 + h1 f1) f2 - (c4 + h2) f2^2 - c3^2 f1^2.
pub fn s2_form(f: &[f64; 3], integ: &IntegralSet) -> f64 {
    let [f1, f2, f3] = *f;
    let a = f3 + integ.h1 * f1;
    -2.0 * integ.c3 * a * f2 - (integ.c4 + integ.h2) * f2 * f2 - integ.c3 * integ.c3 * f1 * f1
}

/// T1(g) = (g2^2 - g1 g3) / 2.
pub fn t1_form(g: &[f64; 3]) -> f64 {
    let [g1, g2, g3] = *g;
    0.5 * (g2 * g2 - g1 * g3)
}

/// T2(g) = ((h1 g1 - g3)^2 - (c4 + h2) g1^2 + 4 c3 g1 g2) / 4.
pub fn t2_form(g: &[f64; 3], integ: &IntegralSet) -> f64 {
    let [g1, g2, g3] = *g;
    let b = integ.h1 * g1 - g3;
    0.25 * (b * b - (integ.c4 + integ.h2) * g1 * g1 + 4.0 * integ.c3 * g1 * g2)
}

/// Evaluate the quadratic forms and the separation roots at a chart point.
pub fn s_forms(fg: &FgCoords, integ: &IntegralSet) -> SpectralVars {
    let s1f = s1_form(&fg.f, integ);
    let s2f = s2_form(&fg.f, integ);
    let disc = s1f * s1f - 4.0 * s2f;
    let sq = C64::new(disc, 0.0).sqrt();
    let r_plus = 0.5 * (C64::new(s1f, 0.0) + sq);
    let r_minus = 0.5 * (C64::new(s1f, 0.0) - sq);
    let (s1, s2) = if (r_plus.re, r_plus.im) >= (r_minus.re, r_minus.im) {
        (r_plus, r_minus)
    } else {
        (r_minus, r_plus)
    };
    SpectralVars {
        s1_form: s1f,
        s2_form: s2f,
        t1_form: t1_form(&fg.g),
        t2_form: t2_form(&fg.g, integ),
        s1,
        s2,
        nu: integ.h1 - s1f,
        double_root: disc.abs() < 1e-12 * (1.0 + s1f * s1f),
    }
}

/// Equations of motion in chart variables:
///
/// ```text
/// f1' =  (f1 g2 + f2 g1) / 2
/// f2' = -(f1 g3 + f2 g2) / 2
/// f3' = -(f2 g3 + f3 g2) / 2
/// g1' =  c3 f1^2 + h1 f1 f2 - f2 f3
/// g2' =  gamma4 f1^2 / 2 + c3 f1 f2 + f3^2 / 2
/// g3' = -c3 (f1 f3 + 2 f2^2) - h1 f2 f3 - gamma4 f1 f2
/// ```
///
/// The coefficient of f1^2/2 in g2' is gamma4 = c4 - k2; the pushforward of
/// the (m, n) flow through the chart Jacobian pins it down, and the tests
/// assert the match.
pub fn fg_eom(fg: &FgCoords, integ: &IntegralSet) -> ([f64; 3], [f64; 3]) {
    let [f1, f2, f3] = fg.f;
    let [g1, g2, g3] = fg.g;
    let df = [
        0.5 * (f1 * g2 + f2 * g1),
        -0.5 * (f1 * g3 + f2 * g2),
        -0.5 * (f2 * g3 + f3 * g2),
    ];
    let dg = [
        integ.c3 * f1 * f1 + integ.h1 * f1 * f2 - f2 * f3,
        0.5 * integ.gamma4 * f1 * f1 + integ.c3 * f1 * f2 + 0.5 * f3 * f3,
        -integ.c3 * (f1 * f3 + 2.0 * f2 * f2) - integ.h1 * f2 * f3 - integ.gamma4 * f1 * f2,
    ];
    (df, dg)
}

/// The alternative form of f2' valid on the constraint surface:
/// (-f1 g3 + f3 g1) / 4.
pub fn f2_dot_alternative(fg: &FgCoords) -> f64 {
    0.25 * (-fg.f[0] * fg.g[2] + fg.f[2] * fg.g[0])
}

/// Chart stream along a trajectory with per-sample usability flags.
#[derive(Debug, Clone)]
pub struct FgStream {
    pub times: Vec<f64>,
    /// Chart values; `None` where |m2| is below the exclusion threshold.
    pub fg: Vec<Option<FgCoords>>,
    pub integ: IntegralSet,
    pub sample_dt: f64,
    /// Number of excluded samples.
    pub excluded: usize,
}

impl FgStream {
    /// Extract the chart stream, excluding samples with |m2| < `min_m2`
    /// (default [`CHART_CHECK_MIN_M2`] when `None`).
    pub fn from_trajectory(traj: &Trajectory, min_m2: Option<f64>) -> Self {
        let min_m2 = min_m2.unwrap_or(CHART_CHECK_MIN_M2);
        let integ = traj.initial_integrals();
        let mut excluded = 0;
        let fg = traj
            .states
            .iter()
            .map(|s| {
                if s.m[1].abs() < min_m2 {
                    excluded += 1;
                    None
                } else {
                    Some(to_fg(s).expect("above chart threshold"))
                }
            })
            .collect();
        Self {
            times: traj.times.clone(),
            fg,
            integ,
            sample_dt: traj.sample_dt(),
            excluded,
        }
    }

    pub fn usable(&self, i: usize) -> bool {
        self.fg[i].is_some()
    }

    /// True when the 5-point stencil centered at `i` touches only usable samples.
    pub fn stencil_usable(&self, i: usize) -> bool {
        stencil::window_usable(self.fg.len(), i, |k| self.usable(k))
    }

    /// Component stream of f (j = 0, 1, 2), zero-filled at excluded samples.
    fn f_component(&self, j: usize) -> Vec<f64> {
        self.fg
            .iter()
            .map(|o| o.map(|fg| fg.f[j]).unwrap_or(0.0))
            .collect()
    }
}

/// Residual of the second-derivative relations at the sample nearest `t`:
///
/// ```text
/// f_j'' = nu f_j + r_j(f),   nu = h1 - S1
/// r_1 = (h1 f1 + f3) / 2
/// r_2 = h1 f2 + c3 f1 / 2
/// r_3 = (h1 f3 - 2 c3 f2 - gamma4 f1) / 2
/// ```
///
/// The left side is the 4th-order stencil applied to the chart stream.
pub fn second_derivative_residual(stream: &FgStream, t: f64) -> Result<[f64; 3]> {
    let lo = stream.times[0];
    let hi = *stream.times.last().unwrap();
    if !(lo..=hi).contains(&t) {
        return Err(Error::TimeOutOfRange { t, lo, hi });
    }
    let i = ((t - lo) / stream.sample_dt).round() as usize;
    let i = i.min(stream.times.len() - 1);
    if !stream.stencil_usable(i) {
        return Err(Error::ChartSingular {
            m2_abs: 0.0,
            threshold: CHART_CHECK_MIN_M2,
        });
    }
    let fg = stream.fg[i].unwrap();
    let integ = &stream.integ;
    let sv = s_forms(&fg, integ);
    let [f1, f2, f3] = fg.f;
    let rhs = [
        sv.nu * f1 + 0.5 * (integ.h1 * f1 + f3),
        sv.nu * f2 + integ.h1 * f2 + 0.5 * integ.c3 * f1,
        sv.nu * f3 + 0.5 * (integ.h1 * f3 - 2.0 * integ.c3 * f2 - integ.gamma4 * f1),
    ];
    let mut out = [0.0; 3];
    for j in 0..3 {
        let series = stream.f_component(j);
        let dd = stencil::deriv2(&series, i, stream.sample_dt);
        out[j] = dd - rhs[j];
    }
    Ok(out)
}

/// Bracket values of the commutativity claims at one state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommutativityReport {
    /// {s1, s2}; `None` when the roots coincide and the gradients are undefined.
    pub s1_s2: Option<C64>,
    /// {S1, S2}.
    pub s1form_s2form: C64,
    /// {T1, T2}.
    pub t1_t2: C64,
    /// 2 {H1, S2} - {H2, S1}.
    pub relation_h1_h2: C64,
    /// {S1(lambda), S2(lambda)} for each requested lambda.
    pub lambda_family: Vec<(f64, C64)>,
    pub skipped_coincident_roots: bool,
}

impl CommutativityReport {
    /// Largest bracket magnitude in the report.
    pub fn max_abs(&self) -> f64 {
        let mut worst = self
            .s1form_s2form
            .norm()
            .max(self.t1_t2.norm())
            .max(self.relation_h1_h2.norm());
        if let Some(b) = self.s1_s2 {
            worst = worst.max(b.norm());
        }
        for (_, b) in &self.lambda_family {
            worst = worst.max(b.norm());
        }
        worst
    }
}

/// Evaluate every commutativity bracket at `state` using analytic
/// chain-rule gradients.
///
/// The chains are carried in double-double arithmetic: the brackets cancel
/// exactly, so in plain f64 the result would be dominated by roundoff of the
/// chart chain on states near the chart edge. {s1, s2} uses the
/// implicit-differentiation gradients ds/dx = (s dS1 - dS2)/(2s - S1), which
/// contract to {S1, S2}/sqrt(S1^2 - 4 S2).
pub fn commutativity_report(state: &EuclideanState, lambdas: &[f64]) -> Result<CommutativityReport> {
    if state.m[1].abs() < CHART_THRESHOLD {
        return Err(Error::ChartSingular {
            m2_abs: state.m[1].abs(),
            threshold: CHART_THRESHOLD,
        });
    }
    let d = chart_dd(state);
    let s1form_s2form_dd = bracket_dd(&d.s1.g, &d.s2.g, state);
    let s1form_s2form = C64::new(s1form_s2form_dd.to_f64(), 0.0);
    let disc = d.s1.sq().sub(d.s2.scale(4.0)).v.to_f64();
    let coincident = disc.abs() < 1e-10 * (1.0 + d.s1.v.to_f64().powi(2));
    let s1_s2 = if coincident {
        None
    } else {
        Some(s1form_s2form / C64::new(disc, 0.0).sqrt())
    };
    let t1_t2 = C64::new(bracket_dd(&d.t1.g, &d.t2.g, state).to_f64(), 0.0);
    let h1_s2 = bracket_dd(&d.h1.g, &d.s2.g, state);
    let h2_s1 = bracket_dd(&d.h2.g, &d.s1.g, state);
    let relation_h1_h2 = C64::new(h1_s2.scale(2.0).sub(h2_s1).to_f64(), 0.0);
    let lambda_family = lambdas
        .iter()
        .map(|&l| {
            let s1l = d.s1.add(d.h1.scale(2.0 * l));
            let s2l = d.s2.add(d.h2.scale(l));
            (l, C64::new(bracket_dd(&s1l.g, &s2l.g, state).to_f64(), 0.0))
        })
        .collect();
    Ok(CommutativityReport {
        s1_s2,
        s1form_s2form,
        t1_t2,
        relation_h1_h2,
        lambda_family,
        skipped_coincident_roots: coincident,
    })
}

/// Exact pushforward of the (m, n) flow through the chart Jacobian,
/// computed from the analytic chart gradients. Ground truth for `fg_eom`.
pub fn fg_pushforward(state: &EuclideanState) -> Result<([f64; 3], [f64; 3])> {
    if state.m[1].abs() < CHART_THRESHOLD {
        return Err(Error::ChartSingular {
            m2_abs: state.m[1].abs(),
            threshold: CHART_THRESHOLD,
        });
    }
    let d = ChartDiffs::full(state);
    let tangent = eom(state);
    let push = |diff: &crate::e3_state::Diff| {
        let mut v = 0.0;
        for i in 0..3 {
            v += diff.g.dm[i].re * tangent[i] + diff.g.dn[i].re * tangent[i + 3];
        }
        v
    };
    Ok((
        [push(&d.f[0]), push(&d.f[1]), push(&d.f[2])],
        [push(&d.g[0]), push(&d.g[1]), push(&d.g[2])],
    ))
}
