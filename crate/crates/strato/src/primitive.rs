//! Semi-implicit integrator for the scaled compressible system.
//!
//! Internally the solver evolves `rho`, `m = rho u` and the scaled potential
//! temperature excess `Y = (rho Theta - rho) / eps^2`, so that `rho Theta =
//! rho + eps^2 Y` is conserved together with `rho` without cancellation.
//!
//! The linear acoustic block `rho' -> -div m`, `m -> -(1/eps^2) rho_tilde
//! grad(c rho' / rho_tilde)` is integrated by Crank-Nicolson, one dense solve
//! per horizontal mode. Advection, viscosity and the nonlinear pressure and
//! buoyancy remainder are explicit (Heun). `Y` is advanced with a Roe-averaged
//! midpoint rule that conserves `int rho ((Theta-1)/eps^2)^2` exactly.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, Dyn};
use ndarray::Zip;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{all_finite, max_abs, GridError, Parity, ScalarField, SlabGrid, VectorField};
use crate::helmholtz::{distinct_keys, key_wavenumber_sq, solve_modes, stiffness_matrix};
use crate::hydrostatics::HydrostaticProfile;
use crate::operators::{
    skew_advection, skew_transport, stress, stress_contraction, stress_divergence,
    vector_gradient,
};
use crate::params::ScaledParams;
use crate::spectral::Spectral;
use crate::state::{reconstruct_theta, PrimitiveState, VACUUM_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ImexRk2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepperConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub cfl_advective: f64,
    pub implicit_tol: f64,
    pub implicit_max_iter: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: 1e-3,
            scheme: Scheme::ImexRk2,
            cfl_advective: 0.4,
            implicit_tol: 1e-14,
            implicit_max_iter: 200,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(StepError::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.implicit_tol > 0.0 && self.implicit_tol <= 1e-6) {
            return Err(StepError::InvalidConfig(format!(
                "implicit_tol = {} must lie in (0, 1e-6]",
                self.implicit_tol
            )));
        }
        if !(self.cfl_advective > 0.0) || self.implicit_max_iter == 0 {
            return Err(StepError::InvalidConfig(
                "cfl_advective and implicit_max_iter must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        StepperConfig { dt, ..*self }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("non-finite values at t = {time}")]
    BlowUp { time: f64 },
    #[error("{field} became negative ({min:e}) at t = {time}")]
    PositivityLoss {
        field: &'static str,
        min: f64,
        time: f64,
    },
    #[error("transport solve stalled after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    WellPrepared,
    IllPrepared,
}

/// Perturbations of the equilibrium: `rho = rho_tilde + eps rho1`,
/// `Theta = 1 + eps^2 theta2`, velocity `u0`.
#[derive(Debug, Clone)]
pub struct InitialDataSpec {
    pub kind: DataKind,
    pub rho1: ScalarField,
    pub u0: VectorField,
    pub theta2: ScalarField,
    pub bound: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("assembled density is not positive (min {min:e})")]
    NegativeDensity { min: f64 },
    #[error("sup norm of {name} is {value}, above the bound {bound}")]
    BoundExceeded {
        name: &'static str,
        value: f64,
        bound: f64,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub fn assemble_initial_state(
    spec: &InitialDataSpec,
    params: &ScaledParams,
    profile: &HydrostaticProfile,
) -> Result<PrimitiveState, InitError> {
    let grid = profile.grid;
    grid.check(&spec.rho1)?;
    grid.check(&spec.theta2)?;
    spec.u0.check(&grid)?;
    for (name, value) in [
        ("rho1", max_abs(&spec.rho1)),
        ("theta2", max_abs(&spec.theta2)),
        ("u0", spec.u0.max_abs()),
    ] {
        if value > spec.bound {
            return Err(InitError::BoundExceeded {
                name,
                value,
                bound: spec.bound,
            });
        }
    }
    let eps = params.epsilon;
    let rho = &profile.rho_tilde_field() + &(&spec.rho1 * eps);
    let min = rho.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(InitError::NegativeDensity { min });
    }
    let rho_theta = &rho + &(&(&rho * &spec.theta2) * (eps * eps));
    let mom = spec.u0.times(&rho);
    Ok(PrimitiveState {
        rho,
        mom,
        rho_theta,
        time: 0.0,
    })
}

/// Internal variables `(rho, m, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vars {
    pub rho: ScalarField,
    pub m: VectorField,
    pub y: ScalarField,
    pub time: f64,
}

struct Rates {
    i_rho: ScalarField,
    i_m: VectorField,
    e_m: VectorField,
    e_y: ScalarField,
}

pub struct PrimitiveSolver {
    params: ScaledParams,
    cfg: StepperConfig,
    sp: Spectral,
    rho_t: ScalarField,
    rho_t_pow: ScalarField,
    c_field: ScalarField,
    pot: ScalarField,
    dpot: ScalarField,
    rho_col: Vec<f64>,
    c_col: Vec<f64>,
    dt: f64,
    factors: BTreeMap<u64, Cholesky<f64, Dyn>>,
    last_iterations: usize,
}

impl PrimitiveSolver {
    pub fn new(
        params: &ScaledParams,
        profile: &HydrostaticProfile,
        cfg: &StepperConfig,
    ) -> Result<Self, StepError> {
        params
            .validate()
            .map_err(|e| StepError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        let grid = profile.grid;
        let rho_t = profile.rho_tilde_field();
        let rho_t_pow = rho_t.mapv(|r| r.powf(params.gamma - 1.0));
        let mut s = PrimitiveSolver {
            params: *params,
            cfg: *cfg,
            sp: Spectral::new(grid),
            rho_t,
            rho_t_pow,
            c_field: profile.c_field(),
            pot: profile.potential_field(),
            dpot: grid.from_column(&profile.potential_gradient()),
            rho_col: profile.rho_tilde.clone(),
            c_col: profile.c_of_rho.clone(),
            dt: 0.0,
            factors: BTreeMap::new(),
            last_iterations: 0,
        };
        s.set_dt(cfg.dt);
        Ok(s)
    }

    pub fn grid(&self) -> &SlabGrid {
        self.sp.grid()
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn params(&self) -> &ScaledParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Fixed-point iterations used by the last transport solve.
    pub fn last_iterations(&self) -> usize {
        self.last_iterations
    }

    /// Rebuilds the per-mode acoustic factorizations for a new step size.
    pub fn set_dt(&mut self, dt: f64) {
        if dt == self.dt {
            return;
        }
        self.dt = dt;
        let eps = self.params.epsilon;
        let beta = dt * dt / (4.0 * eps * eps);
        self.factors.clear();
        for key in distinct_keys(self.grid()) {
            let mut m = stiffness_matrix(&self.sp, &self.rho_col, key_wavenumber_sq(key));
            m *= beta;
            for k in 0..self.rho_col.len() {
                m[(k, k)] += self.rho_col[k] / self.c_col[k];
            }
            let chol = m.cholesky().expect("acoustic matrix is positive definite");
            self.factors.insert(key, chol);
        }
    }

    pub fn vars_from_state(&self, s: &PrimitiveState) -> Vars {
        let e2 = self.params.epsilon * self.params.epsilon;
        Vars {
            rho: s.rho.clone(),
            m: s.mom.clone(),
            y: (&s.rho_theta - &s.rho) / e2,
            time: s.time,
        }
    }

    pub fn state_from_vars(&self, v: &Vars) -> PrimitiveState {
        let e2 = self.params.epsilon * self.params.epsilon;
        PrimitiveState {
            rho: v.rho.clone(),
            mom: v.m.clone(),
            rho_theta: &v.rho + &(&v.y * e2),
            time: v.time,
        }
    }

    /// Advective and viscous step limit for the current state.
    pub fn stable_dt(&self, v: &Vars) -> f64 {
        let u = v.m.divided(&v.rho);
        let umax = u.norm_sq().iter().fold(0.0f64, |a, &b| a.max(b)).sqrt();
        let mut dt = self.cfg.cfl_advective * self.grid().min_spacing() / (umax + 1.0);
        let p = &self.params;
        if p.nu > 0.0 {
            let g = self.grid();
            let pi = std::f64::consts::PI;
            let kx = 2.0 * pi * (g.nx / 2 - 1) as f64;
            let ky = 2.0 * pi * (g.ny / 2 - 1) as f64;
            let kz = pi * (g.nz - 1) as f64;
            let rho_min = v.rho.iter().cloned().fold(f64::INFINITY, f64::min);
            let rate = p.nu * (4.0 * p.mu / 3.0 + p.lambda_bulk) * (kx * kx + ky * ky + kz * kz)
                / rho_min;
            dt = dt.min(1.5 / rate);
        }
        dt
    }

    /// `H'(Z) - H'(rho_tilde)` computed without cancellation.
    fn enthalpy_excess(&self, zp: &ScalarField) -> ScalarField {
        let gm1 = self.params.gamma - 1.0;
        let fac = self.params.gamma / gm1;
        let mut h = zp.clone();
        Zip::from(&mut h)
            .and(&self.rho_t)
            .and(&self.rho_t_pow)
            .for_each(|h, &r, &rp| *h = fac * rp * (gm1 * (*h / r).ln_1p()).exp_m1());
        h
    }

    fn rates(&self, v: &Vars) -> Rates {
        let sp = &self.sp;
        let p = &self.params;
        let e2 = p.epsilon * p.epsilon;
        let u = v.m.divided(&v.rho);
        let q = &v.y / &v.rho;
        let div_m = sp.div(&v.m, Parity::Even);
        let grad_u = vector_gradient(sp, &u);
        let mut force = skew_advection(sp, &v.m, &u, &grad_u, &div_m).scaled(-1.0);
        if p.nu > 0.0 {
            let s = stress(&grad_u, p.mu, p.lambda_bulk);
            force.axpy(p.nu, &stress_divergence(sp, &s));
        }

        // pressure in the form that pairs with the Y transport
        let rho_p = &v.rho - &self.rho_t;
        let zp = &rho_p + &(&v.y * e2);
        let h = self.enthalpy_excess(&zp);
        let gq = sp.grad(&q, Parity::Even);
        let gh = sp.grad(&h, Parity::Even);
        let ghq = sp.grad(&(&h * &q), Parity::Even);
        for d in 0..3 {
            let mut f = &(&(&q * &gh.c[d]) + &ghq.c[d]) - &(&h * &gq.c[d]);
            f *= 0.5 * e2;
            f += &gh.c[d];
            f *= &v.rho;
            force.c[d].scaled_add(-1.0 / e2, &f);
        }
        // buoyancy; F depends on z only so the horizontal parts cancel
        let dfq = sp.dz(&(&self.pot * &q), Parity::Even);
        let mut b = &(&q * &self.dpot) + &dfq;
        b -= &(&self.pot * &gq.c[2]);
        b *= &v.rho;
        force.c[2].scaled_add(-0.5, &b);

        let s_lin = &(&self.c_field * &rho_p) / &self.rho_t;
        let i_m = sp.grad(&s_lin, Parity::Even).times(&self.rho_t).scaled(-1.0 / e2);
        let e_m = &force - &i_m;
        let e_y = skew_transport(sp, &v.m, &div_m, &q, &gq) * -0.5;
        Rates {
            i_rho: -div_m,
            i_m,
            e_m,
            e_y,
        }
    }

    /// Crank-Nicolson acoustic solve for `rho' + dt/2 div m = r_rho`,
    /// `m + dt/(2 eps^2) rho_tilde grad(c rho'/rho_tilde) = r_m`.
    fn acoustic_solve(&self, r_rho: &ScalarField, r_m: &VectorField) -> (ScalarField, VectorField) {
        let sp = &self.sp;
        let dt = self.dt;
        let e2 = self.params.epsilon * self.params.epsilon;
        let mut rhs = r_rho.clone();
        rhs.scaled_add(-0.5 * dt, &sp.div(r_m, Parity::Even));
        let mut s = sp.forward(&rhs);
        solve_modes(sp, &self.factors, &mut s);
        let sv = sp.inverse(&s);
        let rho_p = &(&sv * &self.rho_t) / &self.c_field;
        let mut m = r_m.clone();
        m.axpy(-0.5 * dt / e2, &sp.grad(&sv, Parity::Even).times(&self.rho_t));
        (rho_p, m)
    }

    fn check(&self, v: &Vars, time: f64) -> Result<(), StepError> {
        if !(all_finite(&v.rho) && all_finite(&v.y) && v.m.all_finite()) {
            return Err(StepError::BlowUp { time });
        }
        let tiny = -10.0 * f64::EPSILON;
        let min_rho = v.rho.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_rho <= tiny.max(0.0) {
            return Err(StepError::PositivityLoss {
                field: "rho",
                min: min_rho,
                time,
            });
        }
        let e2 = self.params.epsilon * self.params.epsilon;
        let min_z = v
            .rho
            .iter()
            .zip(v.y.iter())
            .map(|(&r, &y)| r + e2 * y)
            .fold(f64::INFINITY, f64::min);
        if min_z < tiny {
            return Err(StepError::PositivityLoss {
                field: "rhoTheta",
                min: min_z,
                time,
            });
        }
        Ok(())
    }

    /// One IMEX step of size `self.dt()`.
    pub fn step_vars(&mut self, u0: &Vars) -> Result<Vars, StepError> {
        let dt = self.dt;
        let t1 = u0.time + dt;
        let r0 = self.rates(u0);
        let mut r_rho = &u0.rho - &self.rho_t;
        r_rho.scaled_add(0.5 * dt, &r0.i_rho);
        let base_m = u0.m.add_scaled(0.5 * dt, &r0.i_m);

        let (rp_s, m_s) = self.acoustic_solve(&r_rho, &base_m.add_scaled(dt, &r0.e_m));
        let mut y_s = u0.y.clone();
        y_s.scaled_add(dt, &r0.e_y);
        let us = Vars {
            rho: &self.rho_t + &rp_s,
            m: m_s,
            y: y_s,
            time: t1,
        };
        self.check(&us, t1)?;
        let rs = self.rates(&us);

        let mut r_m = base_m;
        r_m.axpy(0.5 * dt, &r0.e_m);
        r_m.axpy(0.5 * dt, &rs.e_m);
        let (rp1, m1) = self.acoustic_solve(&r_rho, &r_m);
        let rho1 = &self.rho_t + &rp1;
        let mut guess = u0.y.clone();
        guess.scaled_add(0.5 * dt, &r0.e_y);
        guess.scaled_add(0.5 * dt, &rs.e_y);
        let probe = Vars {
            rho: rho1,
            m: m1,
            y: guess,
            time: t1,
        };
        self.check(&probe, t1)?;
        let y1 = self.transport_solve(u0, &probe)?;
        let out = Vars { y: y1, ..probe };
        self.check(&out, t1)?;
        Ok(out)
    }

    /// Solves `Y1 = Y0 - dt/2 T(m_bar)[q_bar]` with the Roe average
    /// `q_bar = (sqrt(rho1) q1 + sqrt(rho0) q0) / (sqrt(rho1) + sqrt(rho0))`.
    fn transport_solve(&mut self, u0: &Vars, u1: &Vars) -> Result<ScalarField, StepError> {
        let sp = &self.sp;
        let half_dt = 0.5 * self.dt;
        let mut m_bar = u0.m.add_scaled(1.0, &u1.m);
        m_bar = m_bar.scaled(0.5);
        let div_m = sp.div(&m_bar, Parity::Even);
        let mut base = u0.y.clone();
        let mut coef = u1.rho.clone();
        Zip::from(&mut base)
            .and(&mut coef)
            .and(&u0.rho)
            .for_each(|b, c, &r0| {
                let (s0, s1) = (r0.sqrt(), c.sqrt());
                // b = a0 q0, c = a1 / rho1
                *b = s0 / (s0 + s1) * (*b / r0);
                *c = s1 / (s0 + s1) / *c;
            });
        let mut y = u1.y.clone();
        let mut change = f64::INFINITY;
        for it in 1..=self.cfg.implicit_max_iter {
            let q_bar = &base + &(&coef * &y);
            let gq = sp.grad(&q_bar, Parity::Even);
            let t = skew_transport(sp, &m_bar, &div_m, &q_bar, &gq);
            let mut next = u0.y.clone();
            next.scaled_add(-half_dt, &t);
            let prev = change;
            change = max_abs(&(&next - &y));
            let scale = max_abs(&next);
            y = next;
            // stagnation close to the tolerance is the round-off floor
            let stalled = change > 0.5 * prev && change <= 100.0 * self.cfg.implicit_tol * scale;
            if change <= self.cfg.implicit_tol * scale || stalled {
                self.last_iterations = it;
                return Ok(y);
            }
        }
        Err(StepError::NoConvergence {
            iterations: self.cfg.implicit_max_iter,
            change,
        })
    }

    pub fn advance(&mut self, state: &PrimitiveState) -> Result<PrimitiveState, StepError> {
        let v = self.vars_from_state(state);
        let out = self.step_vars(&v)?;
        Ok(self.state_from_vars(&out))
    }

    /// Crank-Nicolson step of the linear acoustic system alone.
    pub fn linear_acoustic_step(&self, state: &PrimitiveState) -> PrimitiveState {
        let dt = self.dt;
        let mut r_rho = &state.rho - &self.rho_t;
        r_rho.scaled_add(-0.5 * dt, &self.sp.div(&state.mom, Parity::Even));
        let e2 = self.params.epsilon * self.params.epsilon;
        let s_lin = &(&self.c_field * &(&state.rho - &self.rho_t)) / &self.rho_t;
        let r_m = state.mom.add_scaled(
            -0.5 * dt / e2,
            &self.sp.grad(&s_lin, Parity::Even).times(&self.rho_t),
        );
        let (rp, m) = self.acoustic_solve(&r_rho, &r_m);
        let rho = &self.rho_t + &rp;
        let excess = &state.rho_theta - &state.rho;
        PrimitiveState {
            rho_theta: &rho + &excess,
            rho,
            mom: m,
            time: state.time + dt,
        }
    }

    /// `nu int S(grad u) : grad u`.
    pub fn dissipation_rate(&self, state: &PrimitiveState) -> f64 {
        dissipation_rate(&self.sp, state, &self.params)
    }

    /// `int rho grad F . u / eps^2` with the discrete gradient of `F`.
    pub fn gravity_work_rate(&self, state: &PrimitiveState) -> f64 {
        let e2 = self.params.epsilon * self.params.epsilon;
        self.grid().integrate(&(&state.mom.c[2] * &self.dpot)) / e2
    }
}

pub fn dissipation_rate(sp: &Spectral, state: &PrimitiveState, params: &ScaledParams) -> f64 {
    if params.nu == 0.0 {
        return 0.0;
    }
    let u = state.velocity();
    let gr = vector_gradient(sp, &u);
    let s = stress(&gr, params.mu, params.lambda_bulk);
    params.nu * sp.grid().integrate(&stress_contraction(&s, &gr))
}

/// One step of size `cfg.dt` from a fresh solver.
pub fn step(
    state: &PrimitiveState,
    params: &ScaledParams,
    profile: &HydrostaticProfile,
    cfg: &StepperConfig,
) -> Result<PrimitiveState, StepError> {
    profile.grid.check(&state.rho)?;
    PrimitiveSolver::new(params, profile, cfg)?.advance(state)
}

/// Kinetic and scaled internal energy.
pub fn energy_parts(state: &PrimitiveState, params: &ScaledParams) -> (f64, f64) {
    let grid = state.grid();
    let mut kin = 0.0;
    let mut int = 0.0;
    let m2 = state.mom.norm_sq();
    let g = params.gamma;
    for ((&r, &z), &mm) in state.rho.iter().zip(state.rho_theta.iter()).zip(m2.iter()) {
        if r >= VACUUM_FLOOR {
            kin += 0.5 * mm / r;
        }
        int += z.max(0.0).powf(g);
    }
    let e2 = params.epsilon * params.epsilon;
    (
        kin * grid.cell_volume(),
        int * grid.cell_volume() / (e2 * (g - 1.0)),
    )
}

/// `int 1/2 rho |u|^2 + (rho Theta)^gamma / (eps^2 (gamma - 1))`.
pub fn energy(state: &PrimitiveState, params: &ScaledParams) -> f64 {
    let (k, i) = energy_parts(state, params);
    k + i
}

/// Max over the history of `E(t) - E(0) + nu int_0^t int S:grad u - int_0^t
/// int rho grad F . u / eps^2`, with trapezoidal time integrals.
pub fn energy_inequality_defect(
    history: &[PrimitiveState],
    params: &ScaledParams,
    profile: &HydrostaticProfile,
) -> f64 {
    if history.len() < 2 {
        return 0.0;
    }
    let sp = Spectral::new(history[0].grid());
    let dpot = profile.grid.from_column(&profile.potential_gradient());
    let e2 = params.epsilon * params.epsilon;
    let source = |s: &PrimitiveState| {
        dissipation_rate(&sp, s, params) - s.grid().integrate(&(&s.mom.c[2] * &dpot)) / e2
    };
    let e0 = energy(&history[0], params);
    let mut acc = 0.0;
    let mut prev = source(&history[0]);
    let mut worst = 0.0f64;
    for w in history.windows(2) {
        let cur = source(&w[1]);
        acc += 0.5 * (w[1].time - w[0].time) * (prev + cur);
        prev = cur;
        worst = worst.max(energy(&w[1], params) - e0 + acc);
    }
    worst
}

/// Max drift over the history of `int rho G(Theta)`.
pub fn renormalized_transport_defect(history: &[PrimitiveState], g: impl Fn(f64) -> f64) -> f64 {
    let Some(first) = history.first() else {
        return 0.0;
    };
    let integral = |s: &PrimitiveState| {
        let theta = reconstruct_theta(s, VACUUM_FLOOR);
        let v: f64 = s.rho.iter().zip(theta.iter()).map(|(&r, &t)| r * g(t)).sum();
        v * s.grid().cell_volume()
    };
    let i0 = integral(first);
    history
        .iter()
        .map(|s| (integral(s) - i0).abs())
        .fold(0.0, f64::max)
}
