//! Functionals of primitive and anelastic states: relative energy, the
//! convergence metric, bound monitors, the transport identity defect, acoustic
//! variables and the stratified acoustic propagator.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Zip;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, Parity, ScalarField, SlabGrid, VectorField};
use crate::helmholtz::{key_wavenumber_sq, mode_key, stiffness_matrix, Helmholtz, HelmholtzError};
use crate::hydrostatics::HydrostaticProfile;
use crate::operators::{flux_divergence, component_parity, stress, stress_divergence, vector_gradient};
use crate::params::ScaledParams;
use crate::spectral::{signed_index, Spectral};
use crate::state::{weighted_inner_product, AnelasticState, PrimitiveState, VACUUM_FLOOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("reference density is not positive (min {0:e})")]
    NonPositiveReference(f64),
    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),
    #[error("requested {requested} eigenvalues but the grid resolves {available}")]
    TooManyEigenvalues { requested: usize, available: usize },
    #[error(transparent)]
    Helmholtz(#[from] HelmholtzError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// One row of the per-run monitor table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub kinetic_energy: f64,
    pub internal_energy_scaled: f64,
    pub total_energy: f64,
    pub dissipation_integral: f64,
    pub relative_energy: f64,
    pub thm1_metric: f64,
    pub mass: f64,
    pub rho_theta_total: f64,
    pub theta_pert_linf: f64,
    pub theta_pert_l1: f64,
    pub residual_measure: f64,
    pub acoustic_energy: f64,
    pub vortical_energy: f64,
}

impl DiagnosticsRecord {
    pub const HEADER: [&'static str; 14] = [
        "time",
        "kinetic_energy",
        "internal_energy_scaled",
        "total_energy",
        "dissipation_integral",
        "relative_energy",
        "thm1_metric",
        "mass",
        "rho_theta_total",
        "theta_pert_Linf",
        "theta_pert_L1",
        "residual_measure",
        "acoustic_energy",
        "vortical_energy",
    ];

    pub fn values(&self) -> [f64; 14] {
        [
            self.time,
            self.kinetic_energy,
            self.internal_energy_scaled,
            self.total_energy,
            self.dissipation_integral,
            self.relative_energy,
            self.thm1_metric,
            self.mass,
            self.rho_theta_total,
            self.theta_pert_linf,
            self.theta_pert_l1,
            self.residual_measure,
            self.acoustic_energy,
            self.vortical_energy,
        ]
    }

    /// CSV line using the shortest round-trip representation of each value.
    pub fn csv_row(&self) -> String {
        self.values()
            .iter()
            .map(|v| format!("{v:e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// `(1 + x)^gamma - 1 - gamma x` without cancellation for small `x`.
fn convex_remainder(x: f64, gamma: f64) -> f64 {
    if x.abs() < 0.5 {
        (gamma * x.ln_1p()).exp_m1() - gamma * x
    } else {
        (1.0 + x).max(0.0).powf(gamma) - 1.0 - gamma * x
    }
}

/// `(Theta - 1) / eps^2` with `Theta = 1` on the vacuum set.
fn theta_excess(state: &PrimitiveState, eps: f64) -> ScalarField {
    let mut q = &state.rho_theta - &state.rho;
    Zip::from(&mut q).and(&state.rho).for_each(|q, &r| {
        *q = if r >= VACUUM_FLOOR { *q / (r * eps * eps) } else { 0.0 };
    });
    q
}

fn velocity_or_zero(state: &PrimitiveState) -> VectorField {
    let mut u = state.mom.clone();
    for c in u.c.iter_mut() {
        Zip::from(c).and(&state.rho).for_each(|v, &r| {
            *v = if r >= VACUUM_FLOOR { *v / r } else { 0.0 };
        });
    }
    u
}

/// `int 1/2 rho |u - U|^2 + (H(rho Theta) - H'(r)(rho Theta - r) - H(r)) / eps^2`
/// with `H(Z) = Z^gamma / (gamma - 1)`.
pub fn relative_energy(
    state: &PrimitiveState,
    r: &ScalarField,
    big_u: &VectorField,
    params: &ScaledParams,
) -> Result<f64, DiagError> {
    let grid = state.grid();
    grid.check(r)?;
    big_u.check(&grid)?;
    let rmin = r.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(rmin > 0.0) {
        return Err(DiagError::NonPositiveReference(rmin));
    }
    let g = params.gamma;
    let e2 = params.epsilon * params.epsilon;
    let du = &velocity_or_zero(state) - big_u;
    let du2 = du.norm_sq();
    let mut total = 0.0;
    for (((&rho, &z), &rr), &d) in state
        .rho
        .iter()
        .zip(state.rho_theta.iter())
        .zip(r.iter())
        .zip(du2.iter())
    {
        let internal = rr.powf(g) / (g - 1.0) * convex_remainder((z - rr) / rr, g);
        total += 0.5 * rho * d + internal / e2;
    }
    Ok(total * grid.cell_volume())
}

/// Instantaneous integrand of the convergence metric:
/// `int rho |u - v|^2 + |(rho - rho_tilde)/eps|^gamma + rho |(Theta-1)/eps^2 - T|^2`.
pub fn thm1_metric(
    state: &PrimitiveState,
    target: &AnelasticState,
    profile: &HydrostaticProfile,
    params: &ScaledParams,
) -> f64 {
    let grid = state.grid();
    let eps = params.epsilon;
    let du = &velocity_or_zero(state) - &target.v;
    let du2 = du.norm_sq();
    let q = theta_excess(state, eps);
    let plane = grid.nx * grid.ny;
    let mut total = 0.0;
    for (idx, ((&rho, &d), (&qq, &t))) in state
        .rho
        .iter()
        .zip(du2.iter())
        .zip(q.iter().zip(target.t_pert.iter()))
        .enumerate()
    {
        let rt = profile.rho_tilde[idx / plane];
        total += rho * d + ((rho - rt) / eps).abs().powf(params.gamma) + rho * (qq - t).powi(2);
    }
    total * grid.cell_volume()
}

/// Essential-set indicator `rho_tilde / 2 <= rho Theta <= 2 rho_tilde`.
pub fn essential_indicator(state: &PrimitiveState, profile: &HydrostaticProfile) -> ndarray::Array3<bool> {
    let grid = profile.grid;
    let plane = grid.nx * grid.ny;
    let mut out = ndarray::Array3::from_elem(grid.shape(), false);
    for (idx, (o, &z)) in out.iter_mut().zip(state.rho_theta.iter()).enumerate() {
        let rt = profile.rho_tilde[idx / plane];
        *o = z >= 0.5 * rt && z <= 2.0 * rt;
    }
    out
}

/// Sharp partition `f = [f]_ess + [f]_res`.
pub fn ess_res_split(
    f: &ScalarField,
    state: &PrimitiveState,
    profile: &HydrostaticProfile,
) -> (ScalarField, ScalarField) {
    let chi = essential_indicator(state, profile);
    let mut ess = f.clone();
    let mut res = f.clone();
    Zip::from(&mut ess)
        .and(&mut res)
        .and(&chi)
        .for_each(|e, r, &c| if c { *r = 0.0 } else { *e = 0.0 });
    (ess, res)
}

/// Uniform-bound functionals of a primitive state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundMonitors {
    /// `|| sqrt(rho) u ||_2`
    pub kinetic_l2: f64,
    /// `|| sqrt(rho) (Theta - 1)/eps^2 ||_2`
    pub theta_weighted_l2: f64,
    /// `|| [(rho Theta - rho_tilde)/eps]_ess ||_2`
    pub pressure_ess_l2: f64,
    /// `int_res (1 + (rho Theta)^gamma)`
    pub pressure_res: f64,
    /// `|| (Theta - 1)/eps^2 ||_inf`
    pub theta_linf: f64,
    /// `|| [(rho - rho_tilde)/eps]_ess ||_2`
    pub density_ess_l2: f64,
    /// `int_res rho^gamma`
    pub density_res: f64,
    /// `|| (Theta - 1)/eps^2 ||_1`
    pub theta_l1: f64,
    /// Volume of the residual set.
    pub residual_measure: f64,
    /// Number of residual cells.
    pub residual_cells: usize,
}

impl BoundMonitors {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("kinetic_l2", self.kinetic_l2),
            ("theta_weighted_l2", self.theta_weighted_l2),
            ("pressure_ess_l2", self.pressure_ess_l2),
            ("pressure_res", self.pressure_res),
            ("theta_linf", self.theta_linf),
            ("density_ess_l2", self.density_ess_l2),
            ("density_res", self.density_res),
            ("theta_l1", self.theta_l1),
            ("residual_measure", self.residual_measure),
        ]
    }
}

pub fn uniform_bound_monitors(
    state: &PrimitiveState,
    profile: &HydrostaticProfile,
    params: &ScaledParams,
) -> BoundMonitors {
    let grid = profile.grid;
    let eps = params.epsilon;
    let g = params.gamma;
    let plane = grid.nx * grid.ny;
    let q = theta_excess(state, eps);
    let chi = essential_indicator(state, profile);
    let m2 = state.mom.norm_sq();
    let mut acc = [0.0f64; 8];
    let mut linf = 0.0f64;
    let mut cells = 0usize;
    for idx in 0..grid.len() {
        let k = idx / plane;
        let rt = profile.rho_tilde[k];
        let (kk, j, i) = (k, (idx / grid.nx) % grid.ny, idx % grid.nx);
        let at = [kk, j, i];
        let rho = state.rho[at];
        let z = state.rho_theta[at];
        let qq = q[at];
        if rho >= VACUUM_FLOOR {
            acc[0] += m2[at] / rho;
        }
        acc[1] += rho * qq * qq;
        linf = linf.max(qq.abs());
        acc[7] += qq.abs();
        if chi[at] {
            acc[2] += ((z - rt) / eps).powi(2);
            acc[5] += ((rho - rt) / eps).powi(2);
        } else {
            cells += 1;
            acc[3] += 1.0 + z.max(0.0).powf(g);
            acc[6] += rho.max(0.0).powf(g);
        }
    }
    let dv = grid.cell_volume();
    BoundMonitors {
        kinetic_l2: (acc[0] * dv).sqrt(),
        theta_weighted_l2: (acc[1] * dv).sqrt(),
        pressure_ess_l2: (acc[2] * dv).sqrt(),
        pressure_res: acc[3] * dv,
        theta_linf: linf,
        density_ess_l2: (acc[5] * dv).sqrt(),
        density_res: acc[6] * dv,
        theta_l1: acc[7] * dv,
        residual_measure: cells as f64 * dv,
        residual_cells: cells,
    }
}

/// `(int 1/2 rho |G(Theta) - T|^2, int rho (G(Theta) - T)(u - v) . grad T)`.
pub fn transport_identity_terms(
    sp: &Spectral,
    s: &PrimitiveState,
    a: &AnelasticState,
    g: &impl Fn(f64) -> f64,
) -> (f64, f64) {
    let grid = sp.grid();
    let theta = crate::state::reconstruct_theta(s, VACUUM_FLOOR);
    let mut diff = theta.mapv(g);
    diff -= &a.t_pert;
    let weighted = &diff * &s.rho;
    let lhs = 0.5 * grid.integrate(&(&diff * &weighted));
    let du = &velocity_or_zero(s) - &a.v;
    let gt = sp.grad(&a.t_pert, Parity::Even);
    let rate = grid.integrate(&(&du.dot(&gt) * &weighted));
    (lhs, rate)
}

/// `|[int 1/2 rho |G(Theta) - T|^2]_0^t + int_0^t int rho (G(Theta) - T)(u - v) . grad T|`
/// evaluated over paired histories with trapezoidal time integration.
pub fn lemma_w6_defect(
    prim_history: &[PrimitiveState],
    target_history: &[AnelasticState],
    g: impl Fn(f64) -> f64,
) -> f64 {
    let n = prim_history.len().min(target_history.len());
    if n < 2 {
        return 0.0;
    }
    let sp = Spectral::new(prim_history[0].grid());
    let (l0, mut prev) = transport_identity_terms(&sp, &prim_history[0], &target_history[0], &g);
    let mut integral = 0.0;
    let mut lhs = l0;
    for k in 1..n {
        let (l, r) = transport_identity_terms(&sp, &prim_history[k], &target_history[k], &g);
        integral += 0.5 * (prim_history[k].time - prim_history[k - 1].time) * (prev + r);
        prev = r;
        lhs = l;
    }
    ((lhs - l0) + integral).abs()
}

/// Acoustic variables and the energy split of a primitive state.
#[derive(Debug, Clone)]
pub struct AcousticState {
    pub s_eps: ScalarField,
    pub phi_eps: ScalarField,
    pub z_eps: ScalarField,
    pub acoustic_energy: f64,
    pub vortical_energy: f64,
}

/// Reusable operators for the acoustic diagnostics on one profile.
pub struct AcousticAnalyzer {
    helm: Helmholtz,
    profile: HydrostaticProfile,
    rho_t: ScalarField,
    c_field: ScalarField,
    dpot: ScalarField,
}

impl AcousticAnalyzer {
    pub fn new(profile: &HydrostaticProfile) -> Self {
        AcousticAnalyzer {
            helm: Helmholtz::new(profile),
            profile: profile.clone(),
            rho_t: profile.rho_tilde_field(),
            c_field: profile.c_field(),
            dpot: profile.grid.from_column(&profile.potential_gradient()),
        }
    }

    pub fn helmholtz(&self) -> &Helmholtz {
        &self.helm
    }

    /// `-(c/rho_tilde) div(rho_tilde grad w)`.
    pub fn propagator(&self, w: &ScalarField) -> ScalarField {
        let mut out = self.helm.weighted_laplacian(w);
        Zip::from(&mut out)
            .and(&self.c_field)
            .and(&self.rho_t)
            .for_each(|o, &c, &r| *o *= -c / r);
        out
    }

    /// `Q(w) = grad Psi`, `div(rho_tilde grad Psi) = div w`.
    pub fn q_part(&self, w: &VectorField) -> VectorField {
        let sp = self.helm.spectral();
        let psi = self.helm.potential(&sp.div(w, Parity::Even));
        sp.grad(&psi, Parity::Even)
    }

    pub fn variables(&self, state: &PrimitiveState, params: &ScaledParams) -> Result<AcousticState, DiagError> {
        let eps = params.epsilon;
        let s_eps = &(&state.rho_theta - &self.rho_t) / &(&self.rho_t * eps);
        let z_eps = &s_eps * &self.c_field;
        let sol = self.helm.neumann(&state.mom, 1e-8)?;
        let phi = sol.psi;
        let sp = self.helm.spectral();
        let p = &state.mom - &sp.grad(&phi, Parity::Even).times(&self.rho_t);
        let vortical = self.profile.grid.integrate(&(&p.norm_sq() / &self.rho_t));
        let aphi = self.propagator(&phi);
        let acoustic = weighted_inner_product(&z_eps, &z_eps, &self.profile)?
            + weighted_inner_product(&aphi, &phi, &self.profile)?;
        Ok(AcousticState {
            s_eps,
            phi_eps: phi,
            z_eps,
            acoustic_energy: acoustic,
            vortical_energy: vortical,
        })
    }

    /// `P(rho u)`, the weighted-solenoidal part of the momentum.
    pub fn vortical_momentum(&self, state: &PrimitiveState) -> VectorField {
        let q = self.q_part(&state.mom);
        &state.mom - &q.times(&self.rho_t)
    }

    pub fn lighthill(&self, state: &PrimitiveState, params: &ScaledParams) -> LighthillSources {
        let sp = self.helm.spectral();
        let eps = params.epsilon;
        let e2 = eps * eps;
        let g = params.gamma;
        let u = velocity_or_zero(state);
        let y = (&state.rho_theta - &state.rho) / e2;
        let mut g1 = flux_divergence(sp, &u, &y, Parity::Even);
        g1 *= &self.rho_t.mapv(|r| -eps / r);

        let plane = self.profile.grid.nx * self.profile.grid.ny;
        let mut pnl = state.rho_theta.clone();
        for (idx, z) in pnl.iter_mut().enumerate() {
            let rt = self.profile.rho_tilde[idx / plane];
            *z = rt.powf(g) * convex_remainder((*z - rt) / rt, g) / e2;
        }
        let pressure = self.q_part(&sp.grad(&pnl, Parity::Even)).scaled(-1.0);
        let flux = VectorField::new(
            flux_divergence(sp, &state.mom, &u.c[0], component_parity(0)),
            flux_divergence(sp, &state.mom, &u.c[1], component_parity(1)),
            flux_divergence(sp, &state.mom, &u.c[2], component_parity(2)),
        );
        let convective = self.q_part(&flux).scaled(-1.0);
        let viscous = if params.nu > 0.0 {
            let gu = vector_gradient(sp, &u);
            let s = stress(&gu, params.mu, params.lambda_bulk);
            self.q_part(&stress_divergence(sp, &s)).scaled(params.nu)
        } else {
            VectorField::zeros(&self.profile.grid)
        };
        let grav = VectorField::new(
            self.profile.grid.zeros(),
            self.profile.grid.zeros(),
            &(-&y) * &self.dpot,
        );
        let buoyancy = self.q_part(&grav);
        let mut g2 = &pressure + &convective;
        g2 = &g2 + &viscous;
        g2 = &g2 + &buoyancy;
        LighthillSources {
            g1,
            g2,
            pressure,
            convective,
            viscous,
            buoyancy,
        }
    }
}

pub fn acoustic_variables(
    state: &PrimitiveState,
    profile: &HydrostaticProfile,
    params: &ScaledParams,
) -> Result<AcousticState, DiagError> {
    AcousticAnalyzer::new(profile).variables(state, params)
}

/// Source terms of the acoustic analogy with each contribution to `G2`.
#[derive(Debug, Clone)]
pub struct LighthillSources {
    pub g1: ScalarField,
    pub g2: VectorField,
    pub pressure: VectorField,
    pub convective: VectorField,
    pub viscous: VectorField,
    pub buoyancy: VectorField,
}

pub fn lighthill_sources(
    state: &PrimitiveState,
    profile: &HydrostaticProfile,
    params: &ScaledParams,
) -> LighthillSources {
    AcousticAnalyzer::new(profile).lighthill(state, params)
}

/// Nonlinear pressure remainder `Z^gamma - gamma r^(gamma-1)(Z - r) - r^gamma`.
pub fn pressure_remainder(z: f64, r: f64, gamma: f64) -> f64 {
    r.powf(gamma) * convex_remainder((z - r) / r, gamma)
}

pub fn acoustic_propagator_apply(w: &ScalarField, profile: &HydrostaticProfile) -> ScalarField {
    AcousticAnalyzer::new(profile).propagator(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenmode {
    pub eigenvalue: f64,
    pub kx: i64,
    pub ky: i64,
    pub m: usize,
}

/// Eigenvalues of the `nz x nz` weighted Sturm-Liouville problem for one
/// horizontal mode, ascending.
pub fn mode_eigenvalues(sp: &Spectral, profile: &HydrostaticProfile, key: u64) -> Result<Vec<f64>, DiagError> {
    let n = profile.grid.nz;
    let k = stiffness_matrix(sp, &profile.rho_tilde, key_wavenumber_sq(key));
    let s: Vec<f64> = (0..n)
        .map(|i| (profile.c_of_rho[i] / profile.rho_tilde[i]).sqrt())
        .collect();
    let a = DMatrix::from_fn(n, n, |i, j| s[i] * k[(i, j)] * s[j]);
    let eig = SymmetricEigen::try_new(a, f64::EPSILON, 10_000)
        .ok_or_else(|| DiagError::EigensolverFailure(format!("no convergence for mode key {key}")))?;
    let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(DiagError::EigensolverFailure("non-finite eigenvalue".into()));
    }
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

/// Smooth random field built from low Fourier and cosine modes.
pub fn random_smooth_field(grid: &SlabGrid, rng: &mut impl Rng, parity: Parity) -> ScalarField {
    let mut f = grid.zeros();
    let pi = std::f64::consts::PI;
    for kx in 0..3 {
        for ky in 0..3 {
            for m in 0..3 {
                let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let m = if parity == Parity::Odd { m + 1 } else { m };
                let term = grid.sample(|x, y, z| {
                    let ph = 2.0 * pi * (kx as f64 * x + ky as f64 * y);
                    let v = match parity {
                        Parity::Even => (m as f64 * pi * z).cos(),
                        Parity::Odd => (m as f64 * pi * z).sin(),
                    };
                    (a * ph.cos() + b * ph.sin()) * v
                });
                f += &term;
            }
        }
    }
    f
}

/// Max over random pairs of `|<A u, w>_H - <u, A w>_H|`, normalized by
/// `||A u||_H ||w||_H + ||u||_H ||A w||_H`.
pub fn self_adjointness_residual(profile: &HydrostaticProfile, pairs: usize, seed: u64) -> Result<f64, DiagError> {
    let an = AcousticAnalyzer::new(profile);
    let grid = profile.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let u = random_smooth_field(&grid, &mut rng, Parity::Even);
        let w = random_smooth_field(&grid, &mut rng, Parity::Even);
        let au = an.propagator(&u);
        let aw = an.propagator(&w);
        let ip = |a: &ScalarField, b: &ScalarField| weighted_inner_product(a, b, profile);
        let lhs = ip(&au, &w)?;
        let rhs = ip(&u, &aw)?;
        let scale = (ip(&au, &au)? * ip(&w, &w)?).sqrt() + (ip(&u, &u)? * ip(&aw, &aw)?).sqrt();
        worst = worst.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Lowest `n_eigs` eigenvalues of the propagator over all resolved
/// horizontal modes (the Nyquist bins carry no derivative and are excluded).
pub fn propagator_spectrum(
    profile: &HydrostaticProfile,
    grid: &SlabGrid,
    n_eigs: usize,
) -> Result<Vec<Eigenmode>, DiagError> {
    if *grid != profile.grid {
        return Err(DiagError::Grid(GridError::ShapeMismatch {
            expected: profile.grid.shape(),
            found: grid.shape(),
        }));
    }
    let available = (grid.nx - 1) * (grid.ny - 1) * grid.nz;
    if n_eigs > available {
        return Err(DiagError::TooManyEigenvalues {
            requested: n_eigs,
            available,
        });
    }
    let residual = self_adjointness_residual(profile, 4, 7)?;
    if !(residual <= 1e-10) {
        return Err(DiagError::EigensolverFailure(format!(
            "self-adjointness residual {residual:e}"
        )));
    }
    let sp = Spectral::new(*grid);
    let mut cache = std::collections::BTreeMap::new();
    let mut modes = Vec::new();
    for ix in 0..grid.nx {
        for iy in 0..grid.ny {
            if 2 * ix == grid.nx || 2 * iy == grid.ny {
                continue;
            }
            let key = mode_key(grid, ix, iy);
            if !cache.contains_key(&key) {
                cache.insert(key, mode_eigenvalues(&sp, profile, key)?);
            }
            for (m, &ev) in cache[&key].iter().enumerate() {
                modes.push(Eigenmode {
                    eigenvalue: ev,
                    kx: signed_index(ix, grid.nx),
                    ky: signed_index(iy, grid.ny),
                    m,
                });
            }
        }
    }
    modes.sort_by(|a, b| {
        a.eigenvalue
            .total_cmp(&b.eigenvalue)
            .then(a.kx.cmp(&b.kx))
            .then(a.ky.cmp(&b.ky))
            .then(a.m.cmp(&b.m))
    });
    modes.truncate(n_eigs);
    if modes.first().is_some_and(|m| m.eigenvalue < -1e-8) {
        return Err(DiagError::EigensolverFailure("negative eigenvalue".into()));
    }
    Ok(modes)
}
