use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use strato::checkpoint::Checkpoint;
use strato::diagnostics::{ess_res_split, random_smooth_field, relative_energy, self_adjointness_residual};
use strato::grid::{Parity, ScalarField, SlabGrid, VectorField};
use strato::harness::fit_rate;
use strato::helmholtz::Helmholtz;
use strato::hydrostatics::{check_equilibrium_identity, solve_hydrostatic, HydrostaticProfile};
use strato::operators::component_parity;
use strato::params::ScaledParams;
use strato::spectral::Spectral;
use strato::state::PrimitiveState;

fn grid() -> SlabGrid {
    SlabGrid::new(8, 8, 8).unwrap()
}

fn profile(gamma: f64, g: f64) -> HydrostaticProfile {
    solve_hydrostatic(gamma, g, 1.0, grid()).unwrap()
}

fn field(seed: u64, parity: Parity) -> ScalarField {
    random_smooth_field(&grid(), &mut ChaCha8Rng::seed_from_u64(seed), parity)
}

fn vector(seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = grid();
    let [a, b, c] = [0, 1, 2].map(|i| random_smooth_field(&g, &mut rng, component_parity(i)));
    VectorField::new(a, b, c)
}

/// Positive state with moderate random perturbations of the equilibrium.
fn state(seed: u64, prof: &HydrostaticProfile, amp: f64) -> PrimitiveState {
    let mut s = PrimitiveState::equilibrium(prof);
    let scale = |f: ScalarField| f.mapv(|v| (amp * v / 9.0).exp());
    s.rho = &s.rho * &scale(field(seed, Parity::Even));
    s.rho_theta = &s.rho_theta * &scale(field(seed + 1, Parity::Even));
    s.mom = vector(seed + 2).times(&s.rho);
    s
}

fn params(epsilon: f64, gamma: f64) -> ScaledParams {
    ScaledParams {
        epsilon,
        nu: epsilon,
        gamma,
        mu: 1.0,
        lambda_bulk: 0.0,
        g: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relative_energy_is_nonnegative(seed in 0u64..1000, eps in 0.01f64..1.0, gamma in 1.2f64..3.0, amp in 0.0f64..2.0) {
        let prof = profile(gamma, 0.5);
        let s = state(seed, &prof, amp);
        let r = field(seed + 7, Parity::Even).mapv(|v| (v / 9.0).exp());
        let e = relative_energy(&s, &r, &vector(seed + 9), &params(eps, gamma)).unwrap();
        prop_assert!(e >= 0.0);
    }

    #[test]
    fn ess_res_parts_sum_exactly(seed in 0u64..1000, amp in 0.0f64..8.0) {
        let prof = profile(2.0, 1.0);
        let s = state(seed, &prof, amp);
        let f = field(seed + 3, Parity::Even);
        let (e, r) = ess_res_split(&f, &s, &prof);
        for ((a, b), c) in e.iter().zip(r.iter()).zip(f.iter()) {
            prop_assert_eq!((a + b).to_bits(), c.to_bits());
            prop_assert!(*a == 0.0 || *b == 0.0);
        }
    }

    #[test]
    fn vertical_derivatives_are_adjoint(seed in 0u64..1000) {
        let sp = Spectral::new(grid());
        let f = field(seed, Parity::Even);
        let h = field(seed + 1, Parity::Odd);
        let lhs = grid().integrate(&(&f * &sp.dz(&h, Parity::Odd)));
        let rhs = -grid().integrate(&(&sp.dz(&f, Parity::Even) * &h));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn decomposition_reconstructs_and_is_idempotent(seed in 0u64..1000, g in 0.0f64..1.5) {
        let prof = profile(2.0, g);
        let helm = Helmholtz::new(&prof);
        let w = vector(seed);
        let (p, q) = helm.decompose(&w, 1e-10).unwrap();
        let back = &p + &q.times(&prof.rho_tilde_field());
        prop_assert!((&back - &w).max_abs() <= 1e-12 * w.max_abs().max(1.0));
        let (pp, qq) = helm.decompose(&p, 1e-10).unwrap();
        prop_assert!((&pp - &p).max_abs() <= 1e-10);
        prop_assert!(qq.max_abs() <= 1e-10);
    }

    #[test]
    fn propagator_is_self_adjoint(seed in 0u64..1000, gamma in 1.2f64..3.0, g in 0.0f64..1.5) {
        let prof = profile(gamma, g);
        prop_assert!(self_adjointness_residual(&prof, 2, seed).unwrap() <= 1e-10);
    }

    #[test]
    fn checkpoints_round_trip(seed in 0u64..1000, t in -1e6f64..1e6) {
        let prof = profile(2.0, 1.0);
        let mut s = state(seed, &prof, 1.0);
        s.time = t;
        let mut bytes = Vec::new();
        Checkpoint::from_primitive(&s, &prof).write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(bytes.as_slice()).unwrap().to_primitive().unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn fit_recovers_power_laws(order in 0.2f64..3.0, c in 0.01f64..100.0) {
        let pts: Vec<(f64, f64)> = [0.4, 0.2, 0.1, 0.05].iter().map(|&x| (x, c * f64::powf(x, order))).collect();
        let fit = fit_rate(&pts).unwrap();
        prop_assert!((fit.fitted_order - order).abs() < 1e-10);
        prop_assert!(fit.fit_residual < 1e-10);
    }

    #[test]
    fn closed_form_profiles_balance(gamma in 1.1f64..3.0, frac in 0.0f64..0.9) {
        // keep the top density positive: g below gamma rho_b^(gamma-1) / (gamma - 1)
        let g = frac * gamma / (gamma - 1.0);
        let prof = profile(gamma, g);
        prop_assert!(prof.min_rho() > 0.0);
        prop_assert!(check_equilibrium_identity(&prof) <= 1e-10);
    }
}
