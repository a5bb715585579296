//! Solver states and the weighted scalar product.

use crate::grid::{GridError, ScalarField, SlabGrid, VectorField};
use crate::hydrostatics::HydrostaticProfile;

/// Default vacuum threshold for reconstructing `Theta`.
pub const VACUUM_FLOOR: f64 = 1e-12;

/// Conservative variables `(rho, rho u, rho Theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveState {
    pub rho: ScalarField,
    pub mom: VectorField,
    pub rho_theta: ScalarField,
    pub time: f64,
}

/// Velocity `v` with `div(rho_tilde v) = 0`, temperature perturbation and a
/// mean-zero pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct AnelasticState {
    pub v: VectorField,
    pub t_pert: ScalarField,
    pub pi: ScalarField,
    pub time: f64,
}

impl PrimitiveState {
    /// Hydrostatic rest state `(rho_tilde, 0, rho_tilde)`.
    pub fn equilibrium(profile: &HydrostaticProfile) -> Self {
        let r = profile.rho_tilde_field();
        PrimitiveState {
            rho: r.clone(),
            mom: VectorField::zeros(&profile.grid),
            rho_theta: r,
            time: 0.0,
        }
    }

    pub fn grid(&self) -> SlabGrid {
        let (nz, ny, nx) = self.rho.dim();
        SlabGrid { nx, ny, nz }
    }

    pub fn velocity(&self) -> VectorField {
        self.mom.divided(&self.rho)
    }

    pub fn all_finite(&self) -> bool {
        crate::grid::all_finite(&self.rho)
            && crate::grid::all_finite(&self.rho_theta)
            && self.mom.all_finite()
    }
}

impl AnelasticState {
    pub fn rest(grid: &SlabGrid) -> Self {
        AnelasticState {
            v: VectorField::zeros(grid),
            t_pert: grid.zeros(),
            pi: grid.zeros(),
            time: 0.0,
        }
    }
}

/// `Theta = rho Theta / rho` where `rho >= floor`, and 1 on the vacuum set.
pub fn reconstruct_theta(state: &PrimitiveState, floor: f64) -> ScalarField {
    let mut out = state.rho_theta.clone();
    ndarray::Zip::from(&mut out)
        .and(&state.rho)
        .for_each(|t, &r| *t = if r >= floor { *t / r } else { 1.0 });
    out
}

/// `int u w rho_tilde / c(rho_tilde)`.
pub fn weighted_inner_product(
    u: &ScalarField,
    w: &ScalarField,
    profile: &HydrostaticProfile,
) -> Result<f64, GridError> {
    let grid = profile.grid;
    grid.check(u)?;
    grid.check(w)?;
    let plane = grid.nx * grid.ny;
    let (us, ws) = (u.as_slice().unwrap(), w.as_slice().unwrap());
    let mut total = 0.0;
    for k in 0..grid.nz {
        let weight = profile.rho_tilde[k] / profile.c_of_rho[k];
        let mut level = 0.0;
        for idx in k * plane..(k + 1) * plane {
            // the product is formed symmetrically so swapping u and w is exact
            level += us[idx] * ws[idx];
        }
        total += weight * level;
    }
    Ok(total * grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydrostatics::solve_hydrostatic;
    use std::f64::consts::PI;

    fn grid() -> SlabGrid {
        SlabGrid::new(8, 8, 4).unwrap()
    }

    #[test]
    fn theta_reconstruction() {
        let g = grid();
        let mut s = PrimitiveState {
            rho: g.constant(1.0),
            mom: VectorField::zeros(&g),
            rho_theta: g.constant(1.0),
            time: 0.0,
        };
        assert!(reconstruct_theta(&s, VACUUM_FLOOR).iter().all(|&t| t == 1.0));
        s.rho = g.zeros();
        assert!(reconstruct_theta(&s, VACUUM_FLOOR).iter().all(|&t| t == 1.0));
        let eps: f64 = 0.1;
        s.rho = g.constant(2.0);
        s.rho_theta = g.constant(2.0 * (1.0 + eps * eps * 0.5));
        assert!(reconstruct_theta(&s, VACUUM_FLOOR)
            .iter()
            .all(|&t| (t - 1.005).abs() < 1e-15));
    }

    #[test]
    fn weighted_product_examples() {
        let p = solve_hydrostatic(2.0, 0.0, 1.0, grid()).unwrap();
        let one = grid().constant(1.0);
        assert!((weighted_inner_product(&one, &one, &p).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(weighted_inner_product(&grid().zeros(), &one, &p).unwrap(), 0.0);
        let c = grid().sample(|x, _, _| (2.0 * PI * x).cos());
        let s = grid().sample(|x, _, _| (2.0 * PI * x).sin());
        assert!(weighted_inner_product(&c, &s, &p).unwrap().abs() < 1e-15);
        let bad = SlabGrid::new(4, 4, 4).unwrap().zeros();
        assert!(weighted_inner_product(&bad, &one, &p).is_err());
    }
}
