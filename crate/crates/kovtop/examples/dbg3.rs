use kovtop::e3_state::SeededStates;
use kovtop::koetter::to_xy;
use kovtop::rigid_dynamics::{integrate, TrajectoryConfig};

fn main() {
    let mut gen = SeededStates::new(999);
    let s0 = gen.next_state();
    let cfg = TrajectoryConfig { t_end: 10.0, ..Default::default() };
    let traj = integrate(&s0, &cfg).unwrap();
    let xys = to_xy(&traj).unwrap();
    let n = xys.xy.len();
    // Re-run the jump detector, printing context for each hit.
    let idxs: Vec<usize> = (0..n).filter(|&i| xys.xy[i].is_some()).collect();
    let mut hits = 0;
    for w in idxs.windows(4) {
        if w[3] != w[0] + 3 { continue; }
        let vals: Vec<_> = w.iter().map(|&i| xys.xy[i].unwrap()).collect();
        for j in 0..3 {
            let streams = [
                ("x", [vals[0].x[j], vals[1].x[j], vals[2].x[j], vals[3].x[j]]),
                ("y", [vals[0].y[j], vals[1].y[j], vals[2].y[j], vals[3].y[j]]),
            ];
            for (name, q) in &streams {
                let d0 = (q[1] - q[0]).norm();
                let d1 = (q[2] - q[1]).norm();
                let d2 = (q[3] - q[2]).norm();
                let floor = 1e-9 * (1.0 + q[1].norm());
                if d1 > 10.0 * (d0.min(d2) + floor) && hits < 6 {
                    hits += 1;
                    println!("t={:.3} {}{}[{}..]: vals {:.4}|{:.4}|{:.4}|{:.4} steps {:.2e} {:.2e} {:.2e}",
                        xys.series.times[w[1]], name, j, w[0], q[0], q[1], q[2], q[3], d0, d1, d2);
                }
            }
        }
    }
}
