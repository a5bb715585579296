//! Quick invariant suite run by `strato check`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::anelastic::AnelasticSolver;
use crate::checkpoint::Checkpoint;
use crate::diagnostics::{random_smooth_field, relative_energy, self_adjointness_residual};
use crate::grid::{max_abs, Parity, VectorField};
use crate::helmholtz::Helmholtz;
use crate::hydrostatics::check_equilibrium_identity;
use crate::primitive::{assemble_initial_state, PrimitiveSolver};
use crate::state::PrimitiveState;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn at_most(name: &'static str, value: f64, tolerance: f64) -> CheckResult {
    CheckResult {
        name,
        value,
        tolerance,
        pass: value <= tolerance,
    }
}

/// Short runs on the configured grid and profile at the first sweep point.
pub fn run_checks(cfg: &ExperimentConfig) -> Result<Vec<CheckResult>, HarnessError> {
    let (eps, nu) = cfg.sweep_points()[0];
    let cfg = cfg.at_point(eps, nu);
    cfg.validate()?;
    let params = cfg.scaled_params();
    let profile = cfg.profile()?;
    let grid = profile.grid;
    let mut out = vec![at_most("hydrostatic_identity", check_equilibrium_identity(&profile), 1e-10)];

    let mut solver = PrimitiveSolver::new(&params, &profile, &cfg.stepper_config(1e-3))?;
    let eq = PrimitiveState::equilibrium(&profile);
    let mut s = eq.clone();
    for _ in 0..10 {
        s = solver.advance(&s)?;
    }
    let dev = max_abs(&(&s.rho - &eq.rho))
        .max(s.mom.max_abs())
        .max(max_abs(&(&s.rho_theta - &eq.rho_theta)));
    out.push(at_most("equilibrium_preservation", dev, 1e-10));

    let helm = Helmholtz::new(&profile);
    let (pspec, aspec) = cfg.initial_data(&helm)?;
    let s0 = assemble_initial_state(&pspec, &params, &profile)?;
    let dt = solver.stable_dt(&solver.vars_from_state(&s0));
    solver.set_dt(dt);
    let mut s = s0.clone();
    for _ in 0..10 {
        s = solver.advance(&s)?;
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    out.push(at_most(
        "mass_conservation",
        rel(grid.integrate(&s.rho), grid.integrate(&s0.rho)),
        1e-12,
    ));
    out.push(at_most(
        "rho_theta_conservation",
        rel(grid.integrate(&s.rho_theta), grid.integrate(&s0.rho_theta)),
        1e-12,
    ));
    let re = relative_energy(&s, &profile.rho_tilde_field(), &VectorField::zeros(&grid), &params)?;
    out.push(CheckResult {
        name: "relative_energy_nonnegative",
        value: re,
        tolerance: 0.0,
        pass: re >= 0.0,
    });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = VectorField::new(
        random_smooth_field(&grid, &mut rng, Parity::Even),
        random_smooth_field(&grid, &mut rng, Parity::Even),
        random_smooth_field(&grid, &mut rng, Parity::Odd),
    );
    let (p, q) = helm.decompose(&w, 1e-8)?;
    let recon = (&(&p + &q.times(&profile.rho_tilde_field())) - &w).max_abs();
    out.push(at_most("helmholtz_reconstruction", recon, 1e-12));
    let div_p = max_abs(&helm.spectral().div(&p, Parity::Even));
    out.push(at_most("helmholtz_divergence", div_p, 1e-10));
    out.push(at_most(
        "propagator_self_adjoint",
        self_adjointness_residual(&profile, 4, cfg.seed)?,
        1e-10,
    ));

    let asolver = AnelasticSolver::new(&params, &profile, &cfg.stepper_config(dt))?;
    let mut a = asolver.initial_state(&aspec);
    for _ in 0..5 {
        a = asolver.advance(&a)?;
    }
    out.push(at_most("anelastic_constraint", asolver.constraint_defect(&a.v), 1e-10));

    let cp = Checkpoint::from_primitive(&s, &profile);
    let mut bytes = Vec::new();
    cp.write_to(&mut bytes)?;
    let back = Checkpoint::read_from(bytes.as_slice()).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let same = back.fields.len() == cp.fields.len()
        && back.time.to_bits() == cp.time.to_bits()
        && back
            .fields
            .iter()
            .zip(&cp.fields)
            .all(|(a, b)| a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    out.push(CheckResult {
        name: "checkpoint_round_trip",
        value: if same { 0.0 } else { 1.0 },
        tolerance: 0.0,
        pass: same,
    });
    Ok(out)
}
