//! Hydrostatic equilibrium `d/dz (rho^gamma) = -g rho` in closed form.

use thiserror::Error;

use crate::grid::{ScalarField, SlabGrid};
use crate::spectral::vertical_derivative_matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydroError {
    #[error("invalid profile parameter: {0}")]
    InvalidParameter(String),
    #[error("profile is not positive on [0, 1] (base value {base} at z = {z})")]
    NonPositiveProfile { z: f64, base: f64 },
}

/// Equilibrium density `rho_tilde(z)`, potential `F = -g z` and sound-speed
/// factor `c = gamma rho_tilde^(gamma - 1)`, all sampled per level.
#[derive(Debug, Clone, PartialEq)]
pub struct HydrostaticProfile {
    pub grid: SlabGrid,
    pub gamma: f64,
    pub g: f64,
    pub rho_bottom: f64,
    pub rho_tilde: Vec<f64>,
    pub potential: Vec<f64>,
    pub c_of_rho: Vec<f64>,
}

/// `rho_b^(gamma-1) - (gamma-1)/gamma g z`, the closed form raised to `gamma - 1`.
fn base(gamma: f64, g: f64, rho_bottom: f64, z: f64) -> f64 {
    rho_bottom.powf(gamma - 1.0) - (gamma - 1.0) / gamma * g * z
}

pub fn solve_hydrostatic(
    gamma: f64,
    g: f64,
    rho_bottom: f64,
    grid: SlabGrid,
) -> Result<HydrostaticProfile, HydroError> {
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(HydroError::InvalidParameter(format!("gamma = {gamma} must exceed 1")));
    }
    if !(g >= 0.0 && g.is_finite()) {
        return Err(HydroError::InvalidParameter(format!("g = {g} must be nonnegative")));
    }
    if !(rho_bottom > 0.0 && rho_bottom.is_finite()) {
        return Err(HydroError::InvalidParameter(format!(
            "rho_bottom = {rho_bottom} must be positive"
        )));
    }
    // the base value is affine and decreasing, so z = 1 is the critical point
    let top = base(gamma, g, rho_bottom, 1.0);
    if top <= 0.0 {
        return Err(HydroError::NonPositiveProfile { z: 1.0, base: top });
    }
    let rho_tilde = if g == 0.0 {
        vec![rho_bottom; grid.nz]
    } else {
        grid.z_nodes()
            .iter()
            .map(|&z| base(gamma, g, rho_bottom, z).powf(1.0 / (gamma - 1.0)))
            .collect()
    };
    Ok(HydrostaticProfile::from_samples(gamma, g, rho_bottom, grid, rho_tilde))
}

impl HydrostaticProfile {
    /// Wraps arbitrary positive samples. Used for comparison profiles that do
    /// not satisfy the equilibrium identity.
    pub fn from_samples(
        gamma: f64,
        g: f64,
        rho_bottom: f64,
        grid: SlabGrid,
        rho_tilde: Vec<f64>,
    ) -> Self {
        assert_eq!(rho_tilde.len(), grid.nz);
        let potential = grid.z_nodes().iter().map(|&z| -g * z).collect();
        let c_of_rho = rho_tilde
            .iter()
            .map(|&r| gamma * r.powf(gamma - 1.0))
            .collect();
        HydrostaticProfile {
            grid,
            gamma,
            g,
            rho_bottom,
            rho_tilde,
            potential,
            c_of_rho,
        }
    }

    /// Closed form at an arbitrary height.
    pub fn evaluate(&self, z: f64) -> f64 {
        base(self.gamma, self.g, self.rho_bottom, z).powf(1.0 / (self.gamma - 1.0))
    }

    pub fn rho_tilde_field(&self) -> ScalarField {
        self.grid.from_column(&self.rho_tilde)
    }

    pub fn potential_field(&self) -> ScalarField {
        self.grid.from_column(&self.potential)
    }

    pub fn c_field(&self) -> ScalarField {
        self.grid.from_column(&self.c_of_rho)
    }

    /// `H'(r) = gamma r^(gamma-1) / (gamma-1)`.
    pub fn enthalpy(&self, r: f64) -> f64 {
        self.gamma / (self.gamma - 1.0) * r.powf(self.gamma - 1.0)
    }

    pub fn min_rho(&self) -> f64 {
        self.rho_tilde.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_rho(&self) -> f64 {
        self.rho_tilde.iter().cloned().fold(0.0, f64::max)
    }

    /// Vertical derivative of the potential `F` as seen by the discrete
    /// gradient (an odd field, one value per level).
    pub fn potential_gradient(&self) -> Vec<f64> {
        let n = self.grid.nz;
        let d = vertical_derivative_matrix(n);
        (0..n)
            .map(|k| (0..n).map(|l| d[k * n + l] * self.potential[l]).sum())
            .collect()
    }
}

/// Max norm of the discrete `grad H'(rho_tilde) - grad F`.
pub fn check_equilibrium_identity(profile: &HydrostaticProfile) -> f64 {
    let n = profile.grid.nz;
    let d = vertical_derivative_matrix(n);
    let defect: Vec<f64> = (0..n)
        .map(|k| profile.enthalpy(profile.rho_tilde[k]) - profile.potential[k])
        .collect();
    (0..n)
        .map(|k| (0..n).map(|l| d[k * n + l] * defect[l]).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> SlabGrid {
        SlabGrid::new(4, 4, 16).unwrap()
    }

    #[test]
    fn linear_profile_for_gamma_two() {
        let p = solve_hydrostatic(2.0, 1.0, 1.0, grid()).unwrap();
        for (k, &z) in grid().z_nodes().iter().enumerate() {
            assert!((p.rho_tilde[k] - (1.0 - z / 2.0)).abs() < 1e-15);
            // d(r^2)/dz = -r
            let r = p.rho_tilde[k];
            assert!((2.0 * r * (-0.5) + r).abs() < 1e-15);
        }
        assert!((p.evaluate(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_gravity_gives_constant() {
        let p = solve_hydrostatic(1.4, 0.0, 1.3, grid()).unwrap();
        assert!(p.rho_tilde.iter().all(|&r| r == 1.3));
        assert!(check_equilibrium_identity(&p) < 1e-12);
    }

    #[test]
    fn vanishing_top_is_rejected() {
        assert!(matches!(
            solve_hydrostatic(2.0, 2.0, 1.0, grid()),
            Err(HydroError::NonPositiveProfile { .. })
        ));
        assert!(solve_hydrostatic(1.0, 1.0, 1.0, grid()).is_err());
    }

    #[test]
    fn equilibrium_identity_holds_and_detects_perturbation() {
        let p = solve_hydrostatic(2.0, 1.0, 1.0, grid()).unwrap();
        assert!(check_equilibrium_identity(&p) <= 1e-10);
        let pert: Vec<f64> = grid()
            .z_nodes()
            .iter()
            .zip(&p.rho_tilde)
            .map(|(&z, &r)| r + 0.1 * (PI * z).sin())
            .collect();
        let q = HydrostaticProfile::from_samples(2.0, 1.0, 1.0, grid(), pert);
        assert!(check_equilibrium_identity(&q) > 1e-2);
    }

    #[test]
    fn sound_speed_factor() {
        let p = solve_hydrostatic(2.0, 1.0, 1.0, grid()).unwrap();
        for k in 0..p.grid.nz {
            assert!((p.c_of_rho[k] - 2.0 * p.rho_tilde[k]).abs() < 1e-15);
        }
    }
}
