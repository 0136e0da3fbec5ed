use kovtop::e3_state::SeededStates;
use kovtop::koetter::{from_x, from_y, to_xy};
use kovtop::rigid_dynamics::{integrate, TrajectoryConfig};

fn main() {
    for seed in [42u64, 7, 1234, 999] {
        let mut gen = SeededStates::new(seed);
        let s0 = gen.next_state();
        let cfg = TrajectoryConfig { t_end: 10.0, ..Default::default() };
        let traj = integrate(&s0, &cfg).unwrap();
        let xys = match to_xy(&traj) { Ok(v) => v, Err(e) => { println!("seed {seed}: {e}"); continue; } };
        let series = &xys.series;
        let usable = series.usable_indices();
        let (mut worst_f, mut worst_g) = (0.0_f64, 0.0_f64);
        let (mut tf, mut tg) = (0.0, 0.0);
        let mut n = 0;
        for &i in usable.iter() {
            let fg = series.fg[i].unwrap();
            let xy = xys.xy[i].unwrap();
            if let Ok(f) = from_x(&xy.x, &series.polys, &series.integ, 1e-2) {
                for j in 0..3 {
                    let d = (f[j] - fg.f[j]).abs() / (1.0 + fg.f[j].abs());
                    if d > worst_f { worst_f = d; tf = series.times[i]; }
                }
            }
            if let Ok(g) = from_y(&xy.y, &series.polys, &series.integ, 1e-2) {
                for j in 0..3 {
                    let d = (g[j] - fg.g[j]).abs() / (1.0 + fg.g[j].abs());
                    if d > worst_g { worst_g = d; tg = series.times[i]; }
                }
            }
            n += 1;
        }
        println!("seed {seed}: {n} samples, worst f round-trip {worst_f:.3e} (t={tf:.2}), worst g {worst_g:.3e} (t={tg:.2}), jumps {}", xys.unexplained_jumps);
    }
}
