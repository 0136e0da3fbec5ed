use kovtop::e3_state::{integrals, SeededStates};
use kovtop::koetter::{from_y, q2_coeffs, to_xy};
use kovtop::poly;
use kovtop::rigid_dynamics::{integrate, TrajectoryConfig};
use num_complex::Complex64 as C64;

fn main() {
    let mut gen = SeededStates::new(42);
    for attempt in 0..10 {
        let s0 = gen.next_state();
        let cfg = TrajectoryConfig {
            t_end: 10.0,
            ..Default::default()
        };
        let traj = integrate(&s0, &cfg).unwrap();
        let xys = match to_xy(&traj) {
            Ok(v) => v,
            Err(e) => {
                println!("attempt {attempt}: {e}");
                continue;
            }
        };
        let series = &xys.series;
        let usable = series.usable_indices();
        println!(
            "attempt {attempt}: {} usable of {} (chart excl {}, collision excl {}, jumps {})",
            usable.len(),
            series.times.len(),
            series.excluded_chart,
            series.excluded_collision,
            xys.unexplained_jumps
        );
        if usable.len() < 100 {
            continue;
        }
        let integ = series.integ;
        // Probe the ratio R(a_j) / (i sqrt(2 a_j) y_j) where
        // R(s) = g1 s^2 - (g3 + h1 g1) s - 2 c3 g2.
        let mut count = 0;
        for &i in usable.iter().step_by(97) {
            let fg = series.fg[i].unwrap();
            let xy = xys.xy[i].unwrap();
            let [g1, g2, g3] = fg.g;
            let r_coeffs = [-2.0 * integ.c3 * g2, -(g3 + integ.h1 * g1), g1];
            for j in 0..3 {
                let r = poly::eval_real(&r_coeffs, series.polys.a[j]);
                let denom = C64::new(0.0, 1.0) * series.polys.sqrt_2a(j) * xy.y[j];
                if denom.norm() > 1e-9 {
                    println!("  t={:.2} j={j}: R/(i sqrt y) = {:.6}", series.times[i], r / denom);
                }
            }
            count += 1;
            if count >= 4 {
                break;
            }
        }
        // Direct round trip through from_y.
        let i = usable[usable.len() / 2];
        let fg = series.fg[i].unwrap();
        let xy = xys.xy[i].unwrap();
        match from_y(&xy.y, &series.polys, &integ, 1e-3) {
            Ok(g) => println!("  from_y: {:?} vs actual g {:?}", g, fg.g),
            Err(e) => println!("  from_y error: {e}"),
        }
        // Eq-55-style and x^2 checks.
        let q2 = q2_coeffs(&fg, &integ);
        let (s1, s2) = series.s[i].unwrap();
        for j in 0..3 {
            let lhs = poly::eval_real(&q2, series.polys.a[j]);
            let rhs = C64::new(0.0, 1.0) * series.polys.sqrt_2a(j) * xy.x[j];
            let xsq = xy.x[j] * xy.x[j] - (s1 - series.polys.a[j]) * (s2 - series.polys.a[j]);
            println!(
                "  j={j}: |Q2(a)-i sqrt x| = {:.2e}, |x^2-(s1-a)(s2-a)| = {:.2e}",
                (lhs - rhs).norm(),
                xsq.norm()
            );
        }
        let ii = integrals(&s0);
        println!(
            "  integrals: h1={:.3} k2={:.3} c3={:.3} c4={:.3}",
            ii.h1, ii.k2, ii.c3, ii.c4
        );
        break;
    }
}
