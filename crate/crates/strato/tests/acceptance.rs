//! Acceptance suite: one PASS/FAIL line per headline criterion.
//!
//! Run with `cargo test -p strato --test acceptance`.

use std::f64::consts::PI;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use strato::diagnostics::{propagator_spectrum, random_smooth_field, self_adjointness_residual, AcousticAnalyzer};
use strato::grid::{max_abs, Parity, SlabGrid, VectorField};
use strato::harness::refine::transport_identity_series;
use strato::harness::{simulate_sweep, ExperimentConfig, Preset};
use strato::helmholtz::Helmholtz;
use strato::hydrostatics::solve_hydrostatic;
use strato::operators::component_parity;
use strato::primitive::{
    assemble_initial_state, energy_inequality_defect, PrimitiveSolver, StepperConfig,
};
use strato::state::{reconstruct_theta, PrimitiveState};

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn sci(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
}

fn threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(3)
}

fn equilibrium(r: &mut Report) {
    let t = Instant::now();
    let cfg = ExperimentConfig::preset(Preset::Equilibrium);
    let grid = cfg.slab_grid().unwrap();
    let params = cfg.scaled_params();
    let profile = cfg.profile().unwrap();
    let dt = cfg.stepper.dt.unwrap();
    let steps = (cfg.stepper.final_time / dt).round() as usize;
    let mut solver = PrimitiveSolver::new(&params, &profile, &cfg.stepper_config(dt)).unwrap();
    let rho_t = profile.rho_tilde_field();
    let mut s = PrimitiveState::equilibrium(&profile);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        s = solver.advance(&s).unwrap();
        worst = worst
            .max(max_abs(&(&s.rho - &rho_t)))
            .max(s.velocity().max_abs())
            .max(max_abs(&(&s.rho_theta - &rho_t)));
    }
    let secs = t.elapsed().as_secs_f64();
    r.line(
        "equilibrium_preservation",
        worst <= 1e-10 && secs < 30.0 && steps == 200 && grid.shape() == (16, 32, 32),
        format!("max deviation {worst:.3e} over {steps} steps on {grid:?} in {secs:.1}s (tol 1e-10, 30s)"),
    );
}

/// Smooth well-prepared run on the rate setup, coarsened for speed.
fn smooth_config(nu: f64, dt: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Preset::WellPreparedRate).at_point(0.1, nu);
    cfg.grid.nx = 16;
    cfg.grid.ny = 16;
    cfg.grid.nz = 8;
    cfg.stepper.dt = Some(dt);
    cfg.stepper.final_time = 0.1;
    cfg
}

fn smooth_history(cfg: &ExperimentConfig) -> Vec<PrimitiveState> {
    let params = cfg.scaled_params();
    let profile = cfg.profile().unwrap();
    let dt = cfg.stepper.dt.unwrap();
    let mut solver = PrimitiveSolver::new(&params, &profile, &cfg.stepper_config(dt)).unwrap();
    let helm = Helmholtz::new(&profile);
    let (spec, _) = cfg.initial_data(&helm).unwrap();
    let mut hist = vec![assemble_initial_state(&spec, &params, &profile).unwrap()];
    let steps = (cfg.stepper.final_time / dt).round() as usize;
    for _ in 0..steps {
        let next = solver.advance(hist.last().unwrap()).unwrap();
        hist.push(next);
    }
    hist
}

fn conservation(r: &mut Report) {
    let cfg = smooth_config(0.1, 2e-3);
    let hist = smooth_history(&cfg);
    let e2 = cfg.scaled_params().epsilon.powi(2);
    let grid = hist[0].grid();
    let quantities: [(&str, Box<dyn Fn(&PrimitiveState) -> f64>); 3] = [
        ("mass", Box::new(|s: &PrimitiveState| grid.integrate(&s.rho))),
        ("rho_theta", Box::new(|s: &PrimitiveState| grid.integrate(&s.rho_theta))),
        (
            "rho_theta2_sq",
            Box::new(move |s: &PrimitiveState| {
                let th = reconstruct_theta(s, 1e-12).mapv(|t| ((t - 1.0) / e2).powi(2));
                grid.integrate(&(&s.rho * &th))
            }),
        ),
    ];
    let t_end = hist.last().unwrap().time;
    for (name, q) in quantities {
        let q0 = q(&hist[0]);
        let drift = hist.iter().map(|s| (q(s) - q0).abs()).fold(0.0, f64::max) / q0.abs() / t_end;
        r.line(
            &format!("conservation_{name}"),
            drift <= 1e-10,
            format!("relative drift per unit time {drift:.3e} (tol 1e-10)"),
        );
    }
}

fn energy_inequality(r: &mut Report) {
    let defect = |nu: f64, dt: f64| {
        let cfg = smooth_config(nu, dt);
        let hist = smooth_history(&cfg);
        energy_inequality_defect(&hist, &cfg.scaled_params(), &cfg.profile().unwrap())
    };
    let dts = [8e-3, 4e-3, 2e-3, 1e-3];
    let d: Vec<f64> = dts.iter().map(|&dt| defect(0.0, dt)).collect();
    // geometric mean of the three successive ratios
    let ratio = (d[0] / d[3].max(f64::MIN_POSITIVE)).powf(1.0 / 3.0);
    r.line(
        "energy_inequality",
        ratio >= 3.5,
        format!(
            "inviscid positive defect [{}] at dt [8e-3 .. 1e-3], mean ratio per halving {ratio:.2} (need >= 3.5)",
            sci(&d)
        ),
    );
    let v: Vec<f64> = dts.iter().map(|&dt| defect(0.1, dt)).collect();
    println!("INFO energy_inequality_viscous: positive defect [{}] at nu = 0.1", sci(&v));
}

fn rate_and_bounds(r: &mut Report) {
    let t = Instant::now();
    let cfg = ExperimentConfig::preset(Preset::WellPreparedRate);
    let out = simulate_sweep(&cfg, threads()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let metric: Vec<f64> = out.points.iter().map(|p| p.sup_metric).collect();
    let decreasing = metric.windows(2).all(|w| w[1] < w[0]);
    let complete = out.points.iter().all(|p| p.complete);
    let order = out.fit.as_ref().map(|f| f.fitted_order).unwrap_or(f64::NAN);
    r.line(
        "convergence_rate",
        complete && decreasing && order >= 0.8 && secs <= 600.0,
        format!("sup metric [{}], fitted order {order:.3} (need >= 0.8), {secs:.0}s (limit 600s)", sci(&metric)),
    );

    // residual-set monitors must stay within twice eps^2 times their largest ratio
    let mut ratios = Vec::new();
    let mut worst = 0.0f64;
    for p in &out.points {
        let e2 = p.epsilon * p.epsilon;
        let m = p.max_residual_measure.max(p.max_pressure_residual).max(p.max_density_residual);
        worst = worst.max(m);
        ratios.push(m / e2);
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let pass = complete && (worst == 0.0 || hi <= 2.0 * lo);
    let detail = if worst == 0.0 {
        "residual sets empty at every record of every run; eps^2 scaling holds vacuously".to_string()
    } else {
        format!("monitor / eps^2 between {lo:.3e} and {hi:.3e} (need factor <= 2)")
    };
    r.line("uniform_bound_trend", pass, detail);
}

fn transport_identity(r: &mut Report) {
    let cfg = ExperimentConfig::preset(Preset::ManufacturedConvergence);
    let s = transport_identity_series(&cfg, SlabGrid::new(16, 16, 8).unwrap(), 2e-3, 2).unwrap();
    let errs: Vec<f64> = s.levels.iter().map(|l| l.error).collect();
    let order = s.min_order();
    r.line(
        "transport_identity_order",
        order >= 1.8,
        format!("defects [{}], order {order:.2} (need >= 1.8)", sci(&errs)),
    );
}

fn helmholtz(r: &mut Report) {
    let grid = SlabGrid::new(16, 16, 16).unwrap();
    let prof = solve_hydrostatic(2.0, 1.0, 1.0, grid).unwrap();
    let helm = Helmholtz::new(&prof);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let [a, b, c] = [0, 1, 2].map(|i| random_smooth_field(&grid, &mut rng, component_parity(i)));
    let w = VectorField::new(a, b, c);
    let (p, q) = helm.decompose(&w, 1e-10).unwrap();
    let recon = (&(&p + &q.times(&prof.rho_tilde_field())) - &w).max_abs();
    let (pp, qq) = helm.decompose(&p, 1e-10).unwrap();
    let idem = (&pp - &p).max_abs().max(qq.max_abs());
    let div = max_abs(&helm.spectral().div(&p, Parity::Even));

    let flat = solve_hydrostatic(2.0, 0.0, 1.0, grid).unwrap();
    // sum of single modes with a known classical projection
    let modes = [(1.0, 0.0, 1.0, 0.7, -0.4), (2.0, 1.0, 2.0, -0.3, 0.9), (0.0, 3.0, 1.0, 0.5, 0.2)];
    let mut w = VectorField::zeros(&grid);
    let mut want = VectorField::zeros(&grid);
    for (i, j, m, amp_h, amp_v) in modes {
        let (kx, ky, kz) = (2.0 * PI * i, 2.0 * PI * j, PI * m);
        let kh = (kx * kx + ky * ky).sqrt();
        let s = (amp_h * kh + amp_v * kz) / (kh * kh + kz * kz);
        for (ah, av, out) in [(amp_h, amp_v, &mut w), (amp_h - s * kh, amp_v - s * kz, &mut want)] {
            let f = VectorField::sample(&grid, |x, y, z| {
                let ph = kx * x + ky * y;
                let h = ah * ph.sin() * (kz * z).cos() / kh;
                [h * kx, h * ky, av * ph.cos() * (kz * z).sin()]
            });
            *out = &*out + &f;
        }
    }
    let (pf, _) = Helmholtz::new(&flat).decompose(&w, 1e-10).unwrap();
    let classical = (&pf - &want).max_abs();
    r.line(
        "helmholtz",
        recon <= 1e-12 && idem <= 1e-10 && div <= 1e-10 && classical <= 1e-10,
        format!(
            "reconstruction {recon:.2e} (1e-12), idempotence {idem:.2e} (1e-10), div P {div:.2e} (1e-10), classical {classical:.2e} (1e-10)"
        ),
    );
}

fn propagator(r: &mut Report) {
    let grid = SlabGrid::new(16, 16, 16).unwrap();
    let prof = solve_hydrostatic(2.0, 1.0, 1.0, grid).unwrap();
    let sa = self_adjointness_residual(&prof, 20, 5).unwrap();
    let flat = solve_hydrostatic(2.0, 0.0, 1.0, grid).unwrap();
    let modes = propagator_spectrum(&flat, &grid, 20).unwrap();
    let worst = modes
        .iter()
        .map(|e| {
            let k2 = (e.kx * e.kx + e.ky * e.ky) as f64;
            let m = e.m as f64;
            let exact = 2.0 * ((2.0 * PI).powi(2) * k2 + (m * PI).powi(2));
            if exact == 0.0 {
                e.eigenvalue.abs()
            } else {
                (e.eigenvalue - exact).abs() / exact
            }
        })
        .fold(0.0, f64::max);
    r.line(
        "propagator",
        sa <= 1e-10 && worst <= 1e-8 && modes.len() == 20,
        format!("self-adjointness {sa:.2e} over 20 pairs (1e-10), worst relative eigenvalue error {worst:.2e} over 20 modes (1e-8)"),
    );
}

/// Interior local extrema of a sampled series.
fn turning_points(x: &[f64]) -> usize {
    x.windows(3).filter(|w| (w[1] - w[0]) * (w[2] - w[1]) < 0.0).count()
}

fn acoustic_substitute(r: &mut Report) {
    // linear part: Crank-Nicolson acoustic step conserves the acoustic energy
    let cfg = ExperimentConfig::preset(Preset::IllPreparedQualitative).at_point(0.1, 0.05);
    let params = cfg.scaled_params();
    let profile = cfg.profile().unwrap();
    let solver = PrimitiveSolver::new(&params, &profile, &StepperConfig::default().with_dt(5e-3)).unwrap();
    let helm = Helmholtz::new(&profile);
    let (spec, _) = cfg.initial_data(&helm).unwrap();
    let mut s = assemble_initial_state(&spec, &params, &profile).unwrap();
    s.rho_theta = s.rho.clone();
    let an = AcousticAnalyzer::new(&profile);
    let energy = |s: &PrimitiveState| an.variables(s, &params).unwrap().acoustic_energy;
    let e0 = energy(&s);
    let mut worst = 0.0f64;
    let mut prev = e0;
    for _ in 0..50 {
        s = solver.linear_acoustic_step(&s);
        let e = energy(&s);
        worst = worst.max((e - prev).abs() / e0);
        prev = e;
    }
    r.line(
        "linear_acoustic_energy",
        worst <= 1e-10,
        format!("relative change per step {worst:.2e} over 50 steps (1e-10), E0 = {e0:.3e}"),
    );

    // nonlinear ill-prepared sweep
    let cfg = ExperimentConfig::preset(Preset::IllPreparedQualitative);
    let out = simulate_sweep(&cfg, threads()).unwrap();
    let complete = out.runs.iter().all(|o| o.complete());
    let dist: Vec<f64> = out.runs.iter().map(|o| *o.vortical_distance.last().unwrap()).collect();
    let decreasing = dist.windows(2).all(|w| w[1] < w[0]);
    r.line(
        "vortical_convergence",
        complete && decreasing,
        format!("final |P(rho u) - rho_tilde v| [{}] for eps {:?}", sci(&dist), cfg.sweep.epsilon),
    );
    let kept: Vec<f64> = out
        .runs
        .iter()
        .map(|o| o.records.last().unwrap().acoustic_energy / o.records[0].acoustic_energy)
        .collect();
    let crossings: Vec<usize> = out.runs.iter().map(|o| turning_points(&o.acoustic_potential)).collect();
    r.line(
        "acoustic_energy_persists_and_oscillates",
        complete && kept.iter().all(|&k| k >= 0.2) && crossings.iter().all(|&c| c >= 6),
        format!("final/initial acoustic energy {kept:.3?} (need >= 0.2), turning points of <Z,Z>_H {crossings:?} (need >= 6)"),
    );
    println!("NOTE dispersive_decay: not reproducible on a periodic slab; the three lines above are the substitute");
}

fn main() {
    let mut r = Report { failed: 0 };
    let t = Instant::now();
    equilibrium(&mut r);
    conservation(&mut r);
    energy_inequality(&mut r);
    rate_and_bounds(&mut r);
    transport_identity(&mut r);
    helmholtz(&mut r);
    propagator(&mut r);
    acoustic_substitute(&mut r);
    println!("acceptance: {} failed, {:.0}s", r.failed, t.elapsed().as_secs_f64());
    if r.failed > 0 {
        std::process::exit(1);
    }
}
