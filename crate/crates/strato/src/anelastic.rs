//! Projection integrator for the anelastic limit system
//! `div(rho_tilde v) = 0`, `d_t T + v . grad T = 0`,
//! `d_t v + v . grad v + grad Pi = (nu / rho_tilde) div S(grad v) - T grad F`.

use ndarray::Zip;

use crate::grid::{all_finite, Parity, ScalarField, VectorField};
use crate::helmholtz::Helmholtz;
use crate::hydrostatics::HydrostaticProfile;
use crate::operators::{skew_advection, skew_transport, stress, stress_divergence, vector_gradient};
use crate::params::ScaledParams;
use crate::primitive::{StepError, StepperConfig};
use crate::state::AnelasticState;

/// Initial target data; `v0` must satisfy the weighted constraint.
#[derive(Debug, Clone)]
pub struct AnelasticInitSpec {
    pub v0: VectorField,
    pub t0: ScalarField,
}

pub struct AnelasticSolver {
    params: ScaledParams,
    helm: Helmholtz,
    rho_t: ScalarField,
    pot: ScalarField,
    dpot: ScalarField,
    dt: f64,
}

impl AnelasticSolver {
    pub fn new(
        params: &ScaledParams,
        profile: &HydrostaticProfile,
        cfg: &StepperConfig,
    ) -> Result<Self, StepError> {
        cfg.validate()?;
        let grid = profile.grid;
        Ok(AnelasticSolver {
            params: *params,
            helm: Helmholtz::new(profile),
            rho_t: profile.rho_tilde_field(),
            pot: profile.potential_field(),
            dpot: grid.from_column(&profile.potential_gradient()),
            dt: cfg.dt,
        })
    }

    pub fn set_dt(&mut self, dt: f64) {
        self.dt = dt;
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn helmholtz(&self) -> &Helmholtz {
        &self.helm
    }

    /// Builds the initial state, projecting `v0` onto the constraint.
    pub fn initial_state(&self, spec: &AnelasticInitSpec) -> AnelasticState {
        let (v, _) = self.helm.project_velocity(&spec.v0);
        AnelasticState {
            v,
            t_pert: spec.t0.clone(),
            pi: self.helm.grid().zeros(),
            time: 0.0,
        }
    }

    fn rates(&self, v: &VectorField, t: &ScalarField) -> (VectorField, ScalarField) {
        let sp = self.helm.spectral();
        let p = &self.params;
        let m = v.times(&self.rho_t);
        let div_m = sp.div(&m, Parity::Even);
        let gv = vector_gradient(sp, v);
        let mut f = skew_advection(sp, &m, v, &gv, &div_m).scaled(-1.0);
        if p.nu > 0.0 {
            let s = stress(&gv, p.mu, p.lambda_bulk);
            f.axpy(p.nu, &stress_divergence(sp, &s));
        }
        f = f.divided(&self.rho_t);
        let gt = sp.grad(t, Parity::Even);
        let dft = sp.dz(&(&self.pot * t), Parity::Even);
        let mut b = &(t * &self.dpot) + &dft;
        b -= &(&self.pot * &gt.c[2]);
        f.c[2].scaled_add(-0.5, &b);
        let mut g = skew_transport(sp, &m, &div_m, t, &gt);
        Zip::from(&mut g)
            .and(&self.rho_t)
            .for_each(|g, &r| *g *= -0.5 / r);
        (f, g)
    }

    /// Heun step with a projection after each stage.
    pub fn advance(&self, s: &AnelasticState) -> Result<AnelasticState, StepError> {
        let dt = self.dt;
        let (f0, g0) = self.rates(&s.v, &s.t_pert);
        let (v_s, _) = self.helm.project_velocity(&s.v.add_scaled(dt, &f0));
        let mut t_s = s.t_pert.clone();
        t_s.scaled_add(dt, &g0);
        let (f1, g1) = self.rates(&v_s, &t_s);
        let mut w = s.v.add_scaled(0.5 * dt, &f0);
        w.axpy(0.5 * dt, &f1);
        let (v, psi) = self.helm.project_velocity(&w);
        let mut t = s.t_pert.clone();
        t.scaled_add(0.5 * dt, &g0);
        t.scaled_add(0.5 * dt, &g1);
        let out = AnelasticState {
            v,
            t_pert: t,
            pi: psi / dt,
            time: s.time + dt,
        };
        if !(out.v.all_finite() && all_finite(&out.t_pert) && all_finite(&out.pi)) {
            return Err(StepError::BlowUp { time: out.time });
        }
        Ok(out)
    }

    /// Max norm of the discrete `div(rho_tilde v)`.
    pub fn constraint_defect(&self, v: &VectorField) -> f64 {
        let d = self.helm.spectral().div(&v.times(&self.rho_t), Parity::Even);
        crate::grid::max_abs(&d)
    }

    /// `int 1/2 rho_tilde |v|^2`.
    pub fn kinetic_energy(&self, s: &AnelasticState) -> f64 {
        0.5 * self.helm.grid().integrate(&(&s.v.norm_sq() * &self.rho_t))
    }
}

/// `w - grad Psi` with `div(rho_tilde grad Psi) = div(rho_tilde w)`.
pub fn project_anelastic(w: &VectorField, profile: &HydrostaticProfile) -> VectorField {
    Helmholtz::new(profile).project_velocity(w).0
}

pub fn step_anelastic(
    state: &AnelasticState,
    params: &ScaledParams,
    profile: &HydrostaticProfile,
    cfg: &StepperConfig,
) -> Result<AnelasticState, StepError> {
    profile.grid.check(&state.t_pert)?;
    AnelasticSolver::new(params, profile, cfg)?.advance(state)
}

/// Deviation of the extrema of `T` from their initial values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremaMonitor {
    /// `max_t max T - max T0`
    pub overshoot: f64,
    /// `min T0 - min_t min T`
    pub undershoot: f64,
    /// `max T0 - min_t max T`
    pub max_deficit: f64,
    /// `max_t min T - min T0`
    pub min_excess: f64,
}

impl ExtremaMonitor {
    pub fn expansion(&self) -> (f64, f64) {
        (self.overshoot, self.undershoot)
    }
}

pub fn transport_extrema_monitor(history: &[AnelasticState]) -> ExtremaMonitor {
    let ext = |s: &AnelasticState| {
        s.t_pert.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    };
    let (lo0, hi0) = history.first().map(ext).unwrap_or((0.0, 0.0));
    let mut m = ExtremaMonitor {
        overshoot: 0.0,
        undershoot: 0.0,
        max_deficit: 0.0,
        min_excess: 0.0,
    };
    for s in history {
        let (lo, hi) = ext(s);
        m.overshoot = m.overshoot.max(hi - hi0);
        m.undershoot = m.undershoot.max(lo0 - lo);
        m.max_deficit = m.max_deficit.max(hi0 - hi);
        m.min_excess = m.min_excess.max(lo - lo0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SlabGrid;
    use crate::hydrostatics::solve_hydrostatic;
    use std::f64::consts::PI;

    fn params(nu: f64) -> ScaledParams {
        ScaledParams {
            epsilon: 0.1,
            nu,
            gamma: 2.0,
            mu: 0.05,
            lambda_bulk: 0.0,
            g: 1.0,
        }
    }

    #[test]
    fn rest_state_is_stationary() {
        let grid = SlabGrid::new(8, 8, 8).unwrap();
        let prof = solve_hydrostatic(2.0, 1.0, 1.0, grid).unwrap();
        let solver = AnelasticSolver::new(&params(0.01), &prof, &StepperConfig::default()).unwrap();
        let mut s = AnelasticState::rest(&grid);
        for _ in 0..5 {
            s = solver.advance(&s).unwrap();
        }
        assert!(s.v.max_abs() < 1e-14);
        assert!(crate::grid::max_abs(&s.t_pert) == 0.0);
    }

    #[test]
    fn uniform_buoyancy_goes_into_pressure() {
        let grid = SlabGrid::new(8, 8, 8).unwrap();
        let prof = solve_hydrostatic(2.0, 1.0, 1.0, grid).unwrap();
        let cfg = StepperConfig::default();
        let solver = AnelasticSolver::new(&params(0.0), &prof, &cfg).unwrap();
        let mut s = AnelasticState::rest(&grid);
        s.t_pert = grid.constant(0.7);
        let s1 = solver.advance(&s).unwrap();
        assert!(s1.v.max_abs() < 1e-10);
        let mut expected = prof.potential_field() * -0.7;
        let mean = grid.integrate(&expected);
        expected -= mean;
        let err = crate::grid::max_abs(&(&s1.pi - &expected));
        assert!(err < 1e-8, "{err}");
        assert!(solver.constraint_defect(&s1.v) < 1e-10);
    }

    #[test]
    fn constraint_holds_after_steps() {
        let grid = SlabGrid::new(16, 16, 8).unwrap();
        let prof = solve_hydrostatic(2.0, 1.0, 1.0, grid).unwrap();
        let solver = AnelasticSolver::new(&params(0.01), &prof, &StepperConfig::default()).unwrap();
        let spec = AnelasticInitSpec {
            v0: VectorField::sample(&grid, |x, y, z| {
                [(2.0 * PI * y).sin(), (2.0 * PI * x).cos() * z, (PI * z).sin()]
            }),
            t0: grid.sample(|x, _, z| (2.0 * PI * x).cos() * (PI * z).cos()),
        };
        let mut s = solver.initial_state(&spec);
        assert!(solver.constraint_defect(&s.v) < 1e-10);
        for _ in 0..20 {
            s = solver.advance(&s).unwrap();
            assert!(solver.constraint_defect(&s.v) < 1e-10);
            assert!(grid.integrate(&s.pi).abs() < 1e-10);
        }
    }

    #[test]
    fn rigid_translation_matches_shift() {
        let grid = SlabGrid::new(64, 64, 4).unwrap();
        let prof = solve_hydrostatic(2.0, 0.0, 1.0, grid).unwrap();
        let mut p = params(0.0);
        p.g = 0.0;
        let solver = AnelasticSolver::new(&p, &prof, &StepperConfig::default().with_dt(1e-3)).unwrap();
        let t0 = |x: f64, y: f64| (2.0 * PI * x).cos() * (2.0 * PI * y).cos();
        let spec = AnelasticInitSpec {
            v0: VectorField::sample(&grid, |_, _, _| [1.0, 0.0, 0.0]),
            t0: grid.sample(|x, y, _| t0(x, y)),
        };
        let mut hist = vec![solver.initial_state(&spec)];
        for _ in 0..250 {
            let next = solver.advance(hist.last().unwrap()).unwrap();
            hist.push(next);
        }
        let last = hist.last().unwrap();
        let exact = grid.sample(|x, y, _| t0(x - last.time, y));
        let err = crate::grid::max_abs(&(&last.t_pert - &exact));
        assert!(err < 1e-4, "{err}");
        let m = transport_extrema_monitor(&hist);
        let (over, under) = m.expansion();
        assert!(over <= 1e-6 && under <= 1e-6, "{m:?}");
    }
}
