// Scratch calibration driver; not part of the deliverable.
use std::time::Instant;
use waveguide::model::{preset, Direction};
use waveguide::sim::integrate;
use waveguide::analysis::measures;

fn run(name: &str, dt: f64) {
    let mut cfg = preset(name).unwrap();
    cfg.dt = dt;
    let t0 = Instant::now();
    let lr = integrate(&cfg, Direction::Lr).unwrap();
    let t_lr = t0.elapsed().as_secs_f64();
    let rl = integrate(&cfg, Direction::Rl).unwrap();
    let m = measures(&lr, &rl).unwrap();
    println!(
        "{name} dt={dt}: eta_lr={:.6} eta_rl={:.3e} delta={:.6}  ({t_lr:.2}s/run)",
        m.eta_lr, m.eta_rl, m.delta
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("presets");
    match mode {
        "presets" => {
            for name in ["system1", "system3", "system4"] {
                run(name, 0.02);
            }
        }
        "halving" => {
            let dt: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.02);
            for name in ["system1", "system2", "system3", "system4"] {
                run(name, dt);
                run(name, dt / 2.0);
            }
        }
        "damping" => {
            use waveguide::sweep::{damping_sweep, zeta_grid, SweepMode};
            let name = args.get(2).map(|s| s.as_str()).unwrap_or("system1");
            let dt: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.02);
            let mut cfg = preset(name).unwrap();
            cfg.dt = dt;
            let grid = zeta_grid(0.0, 0.05, 0.002).unwrap();
            let t0 = Instant::now();
            for mode in [SweepMode::Cold, SweepMode::ContinueUp] {
                let res = damping_sweep(&cfg, &grid, mode).unwrap();
                println!("{name} dt={dt} {mode:?}: critical_lr={:?} critical_rl={:?}",
                    res.critical_lr, res.critical_rl);
                for p in &res.points {
                    println!("  zeta={:.3} eta_lr={:.4} eta_rl={:.3e}", p.zeta, p.eta_lr, p.eta_rl);
                }
            }
            println!("({:.0}s)", t0.elapsed().as_secs_f64());
        }
        "scan" => {
            // dt candidates for the System 3 halving check.
            for dt in [0.02, 0.018, 0.016, 0.014, 0.012, 0.01] {
                run("system3", dt);
                run("system3", dt / 2.0);
            }
        }
        "one" => {
            let name = args.get(2).map(|s| s.as_str()).unwrap_or("system2");
            let dt: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.02);
            run(name, dt);
        }
        "reduced" => {
            use waveguide::sweep::{FixedParams, SweepSpec};
            let mut spec = SweepSpec::new(64, 20260810);
            spec.fixed = FixedParams::reduced();
            let t0 = Instant::now();
            let records = waveguide::sweep::generate_dataset(&spec).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            let ok = records.iter().filter(|r| r.usable()).count();
            println!("64 reduced records in {dt:.1}s ({:.2}s/record); ok={ok}", dt / 64.0);
            for r in records.iter().take(8) {
                println!(
                    "  a_p={:.2} a1={:.2} a2={:.2} d={:.2} eta={:.3} delta={:.3} {:?} {}",
                    r.a_p, r.alpha1, r.alpha2, r.d, r.eta_lr, r.delta, r.branch, r.flag
                );
            }
        }
        other => eprintln!("unknown mode {other}"),
    }
}
