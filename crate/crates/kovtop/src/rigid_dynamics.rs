//! Equations of motion of the Kovalevskaya top and the adaptive integrator
//! that produces trajectories for the downstream residual checks.
//!
//! The integrator is an embedded Dormand–Prince 5(4) pair with PI step-size
//! control. Steps are truncated at the uniform output grid, so stored
//! samples carry integrator accuracy directly; values between samples come
//! from cubic Hermite interpolation (4th-order accurate).
//!
//! No projection or renormalization onto the Casimir level sets is applied:
//! integral drift is one of the quantities under test, so it is measured,
//! never hidden.

use crate::e3_state::{integrals, EuclideanState, IntegralSet};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Time derivative of the state:
///
/// ```text
/// m1' = m2 m3          2 m2' = -(2 m3 m1 + n3)    2 m3' = n2
/// n1' = 2 m3 n2 - m2 n3    n2' = m1 n3 - 2 m3 n1    n3' = m2 n1 - m1 n2
/// ```
pub fn eom(state: &EuclideanState) -> [f64; 6] {
    let [m1, m2, m3] = state.m;
    let [n1, n2, n3] = state.n;
    [
        m2 * m3,
        -(2.0 * m3 * m1 + n3) / 2.0,
        n2 / 2.0,
        2.0 * m3 * n2 - m2 * n3,
        m1 * n3 - 2.0 * m3 * n1,
        m2 * n1 - m1 * n2,
    ]
}

/// Configuration of one integration run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Uniform output spacing.
    pub sample_dt: f64,
    pub max_steps: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            rtol: 1e-10,
            atol: 1e-12,
            sample_dt: 0.01,
            max_steps: 10_000_000,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) {
            return Err(Error::InvalidConfig(format!("t_end = {}", self.t_end)));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerances rtol = {}, atol = {}",
                self.rtol, self.atol
            )));
        }
        if !(self.sample_dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample_dt = {}",
                self.sample_dt
            )));
        }
        Ok(())
    }
}

/// Integrator work counters.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
}

/// Worst relative drift of each integral over a trajectory,
/// max_t |I(x(t)) - I(x(0))| / max(1, |I(x(0))|).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DriftReport {
    pub h1: f64,
    pub k2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl DriftReport {
    pub fn max(&self) -> f64 {
        self.h1.max(self.k2).max(self.c3).max(self.c4)
    }
}

/// A solved trajectory: states on the uniform grid plus integrator
/// statistics. Immutable once returned.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<EuclideanState>,
    pub stats: IntegratorStats,
    pub config: TrajectoryConfig,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sample_dt(&self) -> f64 {
        self.config.sample_dt
    }

    /// Integral values at the initial sample.
    pub fn initial_integrals(&self) -> IntegralSet {
        integrals(&self.states[0])
    }

    /// Relative drift of the four integrals over all samples.
    pub fn integral_drift(&self) -> DriftReport {
        let i0 = self.initial_integrals();
        let scale = |v: f64| v.abs().max(1.0);
        let mut d = DriftReport {
            h1: 0.0,
            k2: 0.0,
            c3: 0.0,
            c4: 0.0,
        };
        for s in &self.states {
            let i = integrals(s);
            d.h1 = d.h1.max((i.h1 - i0.h1).abs() / scale(i0.h1));
            d.k2 = d.k2.max((i.k2 - i0.k2).abs() / scale(i0.k2));
            d.c3 = d.c3.max((i.c3 - i0.c3).abs() / scale(i0.c3));
            d.c4 = d.c4.max((i.c4 - i0.c4).abs() / scale(i0.c4));
        }
        d
    }

    /// Index of the sample nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let dt = self.sample_dt();
        let i = ((t - self.times[0]) / dt).round() as isize;
        i.clamp(0, self.times.len() as isize - 1) as usize
    }

    /// Cubic Hermite interpolation between the bracketing samples, using the
    /// exact vector field at the nodes.
    pub fn interpolate(&self, t: f64) -> Result<EuclideanState> {
        let (lo, hi) = (self.times[0], *self.times.last().unwrap());
        if !(lo..=hi).contains(&t) {
            return Err(Error::TimeOutOfRange { t, lo, hi });
        }
        let dt = self.sample_dt();
        let k = (((t - lo) / dt).floor() as usize).min(self.len() - 2);
        let theta = (t - self.times[k]) / dt;
        let y0 = self.states[k].to_array();
        let y1 = self.states[k + 1].to_array();
        let f0 = eom(&self.states[k]);
        let f1 = eom(&self.states[k + 1]);
        // Hermite basis on [0, 1] scaled by dt for the derivative terms.
        let h00 = (1.0 + 2.0 * theta) * (1.0 - theta) * (1.0 - theta);
        let h10 = theta * (1.0 - theta) * (1.0 - theta);
        let h01 = theta * theta * (3.0 - 2.0 * theta);
        let h11 = theta * theta * (theta - 1.0);
        let mut y = [0.0; 6];
        for i in 0..6 {
            y[i] = h00 * y0[i] + h10 * dt * f0[i] + h01 * y1[i] + h11 * dt * f1[i];
        }
        Ok(EuclideanState::from_array(&y))
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// b - b_hat: weights of the embedded error estimate.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One Dormand–Prince step from (t, y) with step h. Returns the 5th-order
/// solution, the error estimate vector, and the end-point derivative (FSAL).
fn dopri5_step<const N: usize>(
    y: &[f64; N],
    f0: &[f64; N],
    h: f64,
    rhs: &mut impl FnMut(&[f64; N]) -> [f64; N],
) -> ([f64; N], [f64; N], [f64; N]) {
    let mut k = [[0.0; N]; 7];
    k[0] = *f0;
    for stage in 0..6 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(stage + 1) {
            let a = A[stage][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[stage + 1] = rhs(&ys);
    }
    // 5th-order solution uses the row A[5] (FSAL: k[6] = f(t+h, y1)).
    let mut y1 = *y;
    for (j, kj) in k.iter().enumerate().take(6) {
        let a = A[5][j];
        if a != 0.0 {
            for i in 0..N {
                y1[i] += h * a * kj[i];
            }
        }
    }
    let mut err = [0.0; N];
    for (j, kj) in k.iter().enumerate() {
        if E[j] != 0.0 {
            for i in 0..N {
                err[i] += h * E[j] * kj[i];
            }
        }
    }
    (y1, err, k[6])
}

/// Integrate from `state0` and sample the solution on the uniform grid
/// `0, sample_dt, 2 sample_dt, ..., t_end`.
pub fn integrate(state0: &EuclideanState, cfg: &TrajectoryConfig) -> Result<Trajectory> {
    integrate_system(state0.to_array(), cfg, |y| {
        eom(&EuclideanState::from_array(y))
    })
    .map(|(times, raw, stats)| Trajectory {
        times,
        states: raw.iter().map(EuclideanState::from_array).collect(),
        stats,
        config: *cfg,
    })
}

/// Generic driver over an N-dimensional first-order system, shared with the
/// Clebsch integration. Samples land exactly on the grid because steps are
/// truncated at sample boundaries.
pub fn integrate_system<const N: usize>(
    y0: [f64; N],
    cfg: &TrajectoryConfig,
    mut rhs_fn: impl FnMut(&[f64; N]) -> [f64; N],
) -> Result<(Vec<f64>, Vec<[f64; N]>, IntegratorStats)> {
    cfg.validate()?;
    if !y0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidConfig("initial state not finite".into()));
    }
    let mut stats = IntegratorStats::default();
    let mut evals = 0usize;
    let mut rhs = |y: &[f64; N]| {
        evals += 1;
        rhs_fn(y)
    };

    let n_samples = (cfg.t_end / cfg.sample_dt).round() as usize;
    let mut times = Vec::with_capacity(n_samples + 1);
    let mut samples = Vec::with_capacity(n_samples + 1);
    times.push(0.0);
    samples.push(y0);

    let mut t = 0.0;
    let mut y = y0;
    let mut f = rhs(&y);
    let mut h = cfg.sample_dt.min(cfg.t_end) * 0.1;
    let mut err_prev: f64 = 1.0;
    let safety = 0.9;
    // PI controller exponents for a 5th-order pair.
    let alpha = 0.7 / 5.0;
    let beta = 0.4 / 5.0;

    let mut next_sample = 1usize;
    let mut steps = 0usize;
    while next_sample <= n_samples {
        if steps >= cfg.max_steps {
            return Err(Error::StepCountExceeded {
                t,
                max_steps: cfg.max_steps,
            });
        }
        steps += 1;
        let t_target = next_sample as f64 * cfg.sample_dt;
        let mut hitting_sample = false;
        if t + h >= t_target - 1e-14 * t_target.max(1.0) {
            h = t_target - t;
            hitting_sample = true;
        }
        if h <= f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }

        let (y1, err_vec, f1) = dopri5_step(&y, &f, h, &mut rhs);
        let mut err_sq = 0.0;
        for i in 0..N {
            let scale = cfg.atol + cfg.rtol * y[i].abs().max(y1[i].abs());
            let e = err_vec[i] / scale;
            err_sq += e * e;
        }
        let err = (err_sq / N as f64).sqrt().max(1e-30);

        if err <= 1.0 {
            t += h;
            y = y1;
            f = f1;
            stats.steps_accepted += 1;
            if hitting_sample {
                t = t_target; // suppress accumulated roundoff in t
                times.push(t);
                samples.push(y);
                next_sample += 1;
            }
            let fac = (safety * err.powf(-alpha) * err_prev.powf(beta)).clamp(0.2, 5.0);
            h *= fac;
            err_prev = err;
        } else {
            stats.steps_rejected += 1;
            h *= (safety * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    stats.rhs_evaluations = evals;
    Ok((times, samples, stats))
}

/// Fixed-step Dormand–Prince propagation (no error control). Used by the
/// convergence-order tests.
pub fn integrate_fixed_step(
    state0: &EuclideanState,
    h: f64,
    n_steps: usize,
) -> Result<EuclideanState> {
    let mut y = state0.to_array();
    let mut rhs = |y: &[f64; 6]| eom(&EuclideanState::from_array(y));
    let mut f = rhs(&y);
    for _ in 0..n_steps {
        let (y1, _, f1) = dopri5_step(&y, &f, h, &mut rhs);
        y = y1;
        f = f1;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::StepSizeUnderflow { t: f64::NAN, h });
        }
    }
    Ok(EuclideanState::from_array(&y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::e3_state::{bracket_of_gradients, Observable, SeededStates};

    #[test]
    fn equilibrium_states_have_zero_tangent() {
        for c in [-2.0, 0.0, 0.5, 3.0] {
            let s = EuclideanState::new([0.0; 3], [c, 0.0, 0.0]);
            assert_eq!(eom(&s), [0.0; 6]);
        }
    }

    #[test]
    fn eom_direct_substitution() {
        let s = EuclideanState::new([0.0, 0.0, 1.0], [0.0, 1.0, 0.0]);
        assert_eq!(eom(&s), [0.0, 0.0, 0.5, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn eom_matches_hamiltonian_flow() {
        // x_dot = {H, x} for each coordinate, via the bracket engine.
        let mut gen = SeededStates::new(31);
        for s in gen.take(100) {
            let gh = Observable::H.gradient(&s);
            let tangent = eom(&s);
            for (idx, obs) in [
                Observable::M(0),
                Observable::M(1),
                Observable::M(2),
                Observable::N(0),
                Observable::N(1),
                Observable::N(2),
            ]
            .iter()
            .enumerate()
            {
                let b = bracket_of_gradients(&gh, &obs.gradient(&s), &s);
                assert!(
                    (b.re - tangent[idx]).abs() < 1e-12 && b.im.abs() < 1e-14,
                    "component {idx}: bracket {b} vs eom {}",
                    tangent[idx]
                );
            }
        }
    }

    #[test]
    fn equilibrium_trajectory_is_constant() {
        let s0 = EuclideanState::new([0.0; 3], [1.0, 0.0, 0.0]);
        let cfg = TrajectoryConfig {
            t_end: 10.0,
            ..Default::default()
        };
        let traj = integrate(&s0, &cfg).unwrap();
        for s in &traj.states {
            for (a, b) in s.to_array().iter().zip(s0.to_array()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn integral_drift_stays_small() {
        let mut gen = SeededStates::new(37);
        let s0 = gen.next_state();
        let cfg = TrajectoryConfig {
            t_end: 100.0,
            ..Default::default()
        };
        let traj = integrate(&s0, &cfg).unwrap();
        let drift = traj.integral_drift();
        assert!(drift.max() < 1e-8, "drift {drift:?}");
    }

    #[test]
    fn halving_rtol_reduces_drift() {
        let mut gen = SeededStates::new(41);
        let s0 = gen.next_state();
        let drift_at = |rtol: f64| {
            let cfg = TrajectoryConfig {
                t_end: 20.0,
                rtol,
                atol: rtol * 1e-2,
                ..Default::default()
            };
            integrate(&s0, &cfg).unwrap().integral_drift().max()
        };
        let coarse = drift_at(1e-7);
        let fine = drift_at(5e-8);
        assert!(fine < coarse, "drift {fine} !< {coarse}");
    }

    #[test]
    fn time_reversal_consistency() {
        // Eq-of-motion is reversible under m -> -m, t -> -t: integrating
        // forward, flipping m, and integrating forward again returns the
        // start with m negated.
        let mut gen = SeededStates::new(43);
        let s0 = gen.next_state();
        let cfg = TrajectoryConfig {
            t_end: 10.0,
            ..Default::default()
        };
        let fwd = integrate(&s0, &cfg).unwrap();
        let end = fwd.states.last().unwrap();
        let flipped = EuclideanState::new([-end.m[0], -end.m[1], -end.m[2]], end.n);
        let back = integrate(&flipped, &cfg).unwrap();
        let ret = back.states.last().unwrap();
        for i in 0..3 {
            assert!((ret.m[i] + s0.m[i]).abs() < 1e-6, "m[{i}]");
            assert!((ret.n[i] - s0.n[i]).abs() < 1e-6, "n[{i}]");
        }
    }

    #[test]
    fn fixed_step_shows_fifth_order_convergence() {
        let mut gen = SeededStates::new(47);
        let s0 = gen.next_state();
        // Reference by very small steps.
        let t_end = 1.0;
        let reference = integrate_fixed_step(&s0, t_end / 4096.0, 4096).unwrap();
        let err_at = |n: usize| {
            let y = integrate_fixed_step(&s0, t_end / n as f64, n).unwrap();
            y.to_array()
                .iter()
                .zip(reference.to_array())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max)
        };
        let e1 = err_at(32);
        let e2 = err_at(64);
        let order = (e1 / e2).log2();
        assert!(order > 4.4, "observed order {order} (e1 {e1}, e2 {e2})");
    }

    #[test]
    fn interpolation_matches_fine_sampling() {
        let mut gen = SeededStates::new(53);
        let s0 = gen.next_state();
        let cfg = TrajectoryConfig {
            t_end: 5.0,
            ..Default::default()
        };
        let coarse = integrate(&s0, &cfg).unwrap();
        let fine = integrate(
            &s0,
            &TrajectoryConfig {
                sample_dt: 0.0025,
                ..cfg
            },
        )
        .unwrap();
        // Compare Hermite interpolation at off-grid times against the finer run.
        for k in [101, 443, 997, 1501] {
            let t = fine.times[k];
            let a = coarse.interpolate(t).unwrap().to_array();
            let b = fine.states[k].to_array();
            // Hermite truncation is O(dt^4 |y''''|) ~ 1e-8 on these states.
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-7, "t = {t}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let s0 = EuclideanState::new([0.0; 3], [1.0, 0.0, 0.0]);
        let cfg = TrajectoryConfig {
            t_end: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&s0, &cfg),
            Err(crate::Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn step_budget_is_enforced() {
        let mut gen = SeededStates::new(59);
        let s0 = gen.next_state();
        let cfg = TrajectoryConfig {
            t_end: 100.0,
            max_steps: 10,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&s0, &cfg),
            Err(crate::Error::StepCountExceeded { .. })
        ));
    }
}
