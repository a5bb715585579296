//! Weighted Helmholtz decomposition `w = P(w) + rho_tilde grad Psi` with
//! `div(rho_tilde grad Psi) = div w`.
//!
//! The Neumann problem decouples into one dense `nz x nz` symmetric problem per
//! horizontal wavenumber. Modes with zero effective wavenumber (the mean and
//! the Nyquist bins) are singular; a rank-one term fixes the mean-zero gauge.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{max_abs, GridError, Parity, ScalarField, SlabGrid, VectorField};
use crate::hydrostatics::HydrostaticProfile;
use crate::spectral::{effective_index, Spectral};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HelmholtzError {
    #[error("Neumann data incompatible: mean divergence {0:e}")]
    IncompatibleData(f64),
    #[error("Neumann solve residual {residual:e} above tolerance {tol:e}")]
    NoConvergence { residual: f64, tol: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone)]
pub struct NeumannSolveResult {
    pub psi: ScalarField,
    pub residual: f64,
    pub iterations: usize,
}

/// Integer key `ix^2 + iy^2` of the effective horizontal wavenumber.
pub fn mode_key(grid: &SlabGrid, ix: usize, iy: usize) -> u64 {
    let a = effective_index(ix, grid.nx);
    let b = effective_index(iy, grid.ny);
    (a * a + b * b) as u64
}

pub fn key_wavenumber_sq(key: u64) -> f64 {
    4.0 * std::f64::consts::PI * std::f64::consts::PI * key as f64
}

/// `D_eo^T diag(weight) D_eo + k^2 diag(weight)`, the per-mode matrix of
/// `-div(weight grad .)`.
pub fn stiffness_matrix(sp: &Spectral, weight: &[f64], k2: f64) -> DMatrix<f64> {
    let n = weight.len();
    let d = sp.dz_even_matrix();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                s += d[l * n + i] * weight[l] * d[l * n + j];
            }
            m[(i, j)] = s;
        }
        m[(i, i)] += k2 * weight[i];
    }
    m
}

/// Solves a real symmetric per-mode system on every horizontal mode of a
/// spectrum, with the factorization chosen by the mode key.
pub fn solve_modes(
    sp: &Spectral,
    factors: &BTreeMap<u64, Cholesky<f64, Dyn>>,
    s: &mut [Complex64],
) {
    let g = *sp.grid();
    let (nx, ny, nz) = (g.nx, g.ny, g.nz);
    let mut rhs = DMatrix::<f64>::zeros(nz, 2);
    for ix in 0..nx {
        for iy in 0..ny {
            let key = mode_key(&g, ix, iy);
            let chol = &factors[&key];
            for k in 0..nz {
                let c = s[(k * nx + ix) * ny + iy];
                rhs[(k, 0)] = c.re;
                rhs[(k, 1)] = c.im;
            }
            chol.solve_mut(&mut rhs);
            for k in 0..nz {
                s[(k * nx + ix) * ny + iy] = Complex64::new(rhs[(k, 0)], rhs[(k, 1)]);
            }
        }
    }
}

pub fn distinct_keys(grid: &SlabGrid) -> Vec<u64> {
    let mut keys: Vec<u64> = (0..grid.nx)
        .flat_map(|ix| (0..grid.ny).map(move |iy| (ix, iy)))
        .map(|(ix, iy)| mode_key(grid, ix, iy))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

/// Reusable weighted Neumann solver for one profile and grid.
pub struct Helmholtz {
    sp: Spectral,
    rho: Vec<f64>,
    rho_field: ScalarField,
    factors: BTreeMap<u64, Cholesky<f64, Dyn>>,
}

impl Helmholtz {
    pub fn new(profile: &HydrostaticProfile) -> Self {
        let grid = profile.grid;
        let sp = Spectral::new(grid);
        let n = grid.nz;
        let mut factors = BTreeMap::new();
        for key in distinct_keys(&grid) {
            let mut m = stiffness_matrix(&sp, &profile.rho_tilde, key_wavenumber_sq(key));
            if key == 0 {
                let scale = profile.rho_tilde.iter().sum::<f64>() / n as f64;
                m.add_scalar_mut(scale);
            }
            let chol = m.cholesky().expect("weighted Neumann matrix is positive definite");
            factors.insert(key, chol);
        }
        Helmholtz {
            sp,
            rho: profile.rho_tilde.clone(),
            rho_field: profile.rho_tilde_field(),
            factors,
        }
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn grid(&self) -> &SlabGrid {
        self.sp.grid()
    }

    pub fn weight(&self) -> &[f64] {
        &self.rho
    }

    /// `div(rho_tilde grad psi)` for an even scalar.
    pub fn weighted_laplacian(&self, psi: &ScalarField) -> ScalarField {
        let g = self.sp.grad(psi, Parity::Even);
        self.sp.div(&g.times(&self.rho_field), Parity::Even)
    }

    /// Mean-zero `psi` with `div(rho_tilde grad psi) = rhs`, assuming the
    /// right side has zero mean.
    pub fn potential(&self, rhs: &ScalarField) -> ScalarField {
        let mut s = self.sp.forward(rhs);
        for c in s.iter_mut() {
            *c = -*c;
        }
        solve_modes(&self.sp, &self.factors, &mut s);
        let mut psi = self.sp.inverse(&s);
        let mean = self.grid().integrate(&psi);
        psi.mapv_inplace(|v| v - mean);
        psi
    }

    fn checked_potential(&self, rhs: &ScalarField, tol: f64) -> Result<NeumannSolveResult, HelmholtzError> {
        let grid = *self.grid();
        grid.check(rhs)?;
        let mean = grid.integrate(rhs);
        let scale = max_abs(rhs).max(1.0);
        if mean.abs() > 1e-10 * scale {
            return Err(HelmholtzError::IncompatibleData(mean));
        }
        let psi = self.potential(rhs);
        let residual = max_abs(&(&self.weighted_laplacian(&psi) - rhs));
        if !(residual <= tol * scale) {
            return Err(HelmholtzError::NoConvergence { residual, tol });
        }
        Ok(NeumannSolveResult {
            psi,
            residual,
            iterations: 1,
        })
    }

    /// Neumann problem with right side `div w`.
    pub fn neumann(&self, w: &VectorField, tol: f64) -> Result<NeumannSolveResult, HelmholtzError> {
        w.check(self.grid())?;
        let rhs = self.sp.div(w, Parity::Even);
        self.checked_potential(&rhs, tol)
    }

    /// `(P(w), Q(w))` with `w = P + rho_tilde Q` and `Q = grad Psi`.
    pub fn decompose(&self, w: &VectorField, tol: f64) -> Result<(VectorField, VectorField), HelmholtzError> {
        let sol = self.neumann(w, tol)?;
        let q = self.sp.grad(&sol.psi, Parity::Even);
        let p = w - &q.times(&self.rho_field);
        Ok((p, q))
    }

    /// Velocity projection `w - grad Psi` with `div(rho_tilde grad Psi) =
    /// div(rho_tilde w)`, so the result satisfies `div(rho_tilde v) = 0`.
    /// Returns the projected field and `Psi`.
    pub fn project_velocity(&self, w: &VectorField) -> (VectorField, ScalarField) {
        let rhs = self.sp.div(&w.times(&self.rho_field), Parity::Even);
        let psi = self.potential(&rhs);
        let q = self.sp.grad(&psi, Parity::Even);
        (w - &q, psi)
    }
}

pub fn solve_weighted_neumann(
    w: &VectorField,
    profile: &HydrostaticProfile,
    tol: f64,
) -> Result<NeumannSolveResult, HelmholtzError> {
    Helmholtz::new(profile).neumann(w, tol)
}

pub fn decompose(
    w: &VectorField,
    profile: &HydrostaticProfile,
) -> Result<(VectorField, VectorField), HelmholtzError> {
    Helmholtz::new(profile).decompose(w, 1e-10)
}
