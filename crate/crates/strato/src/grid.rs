//! Slab geometry and field containers.
//!
//! The domain is the periodic unit torus in `(x1, x2)` times the interval
//! `(0, 1)` in `z`. Horizontal nodes sit at `i/nx`, vertical nodes at the cell
//! centers `(k + 1/2)/nz`. Arrays are stored z-major, then y, then x.

use ndarray::{Array3, Zip};
use thiserror::Error;

/// Scalar values on the grid nodes, indexed `[k, j, i]` = `(z, y, x)`.
pub type ScalarField = Array3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension {name} = {value} must be even and at least 4")]
    BadDimension { name: &'static str, value: usize },
    #[error("field shape {found:?} does not match grid shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SlabGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl SlabGrid {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self, GridError> {
        for (name, value) in [("nx", nx), ("ny", ny), ("nz", nz)] {
            if value < 4 || value % 2 != 0 {
                return Err(GridError::BadDimension { name, value });
            }
        }
        Ok(SlabGrid { nx, ny, nz })
    }

    /// Array shape `(nz, ny, nx)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nz, self.ny, self.nx)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            1.0 / self.nx as f64,
            1.0 / self.ny as f64,
            1.0 / self.nz as f64,
        ]
    }

    pub fn min_spacing(&self) -> f64 {
        let h = self.spacing();
        h[0].min(h[1]).min(h[2])
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.nx as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 / self.ny as f64
    }

    pub fn z(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.nz as f64
    }

    pub fn z_nodes(&self) -> Vec<f64> {
        (0..self.nz).map(|k| self.z(k)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn zeros(&self) -> ScalarField {
        Array3::zeros(self.shape())
    }

    pub fn constant(&self, value: f64) -> ScalarField {
        Array3::from_elem(self.shape(), value)
    }

    /// Samples `f(x, y, z)` on the nodes.
    pub fn sample(&self, f: impl Fn(f64, f64, f64) -> f64) -> ScalarField {
        Array3::from_shape_fn(self.shape(), |(k, j, i)| f(self.x(i), self.y(j), self.z(k)))
    }

    /// Broadcasts a vertical profile (one value per level) to a full field.
    pub fn from_column(&self, column: &[f64]) -> ScalarField {
        assert_eq!(column.len(), self.nz);
        Array3::from_shape_fn(self.shape(), |(k, _, _)| column[k])
    }

    pub fn check(&self, f: &ScalarField) -> Result<(), GridError> {
        let s = f.dim();
        if s != self.shape() {
            return Err(GridError::ShapeMismatch {
                expected: self.shape(),
                found: s,
            });
        }
        Ok(())
    }

    /// Quadrature of `f` over the unit slab.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        f.iter().sum::<f64>() * self.cell_volume()
    }
}

/// Parity of a field's vertical expansion.
///
/// `Even` fields expand in `cos(m pi z)` and satisfy a Neumann condition,
/// `Odd` fields expand in `sin(m pi z)` and vanish at both walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    /// Parity of a pointwise product.
    pub fn times(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Three components `(u1, u2, u3)`. An admissible field has `u1`, `u2` even and
/// `u3` odd, so `u3` vanishes at `z = 0` and `z = 1` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub c: [ScalarField; 3],
}

impl VectorField {
    pub fn new(u1: ScalarField, u2: ScalarField, u3: ScalarField) -> Self {
        VectorField { c: [u1, u2, u3] }
    }

    pub fn zeros(grid: &SlabGrid) -> Self {
        VectorField::new(grid.zeros(), grid.zeros(), grid.zeros())
    }

    pub fn sample(grid: &SlabGrid, f: impl Fn(f64, f64, f64) -> [f64; 3]) -> Self {
        let mut v = VectorField::zeros(grid);
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let w = f(grid.x(i), grid.y(j), grid.z(k));
                    for d in 0..3 {
                        v.c[d][[k, j, i]] = w[d];
                    }
                }
            }
        }
        v
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.c[0].dim()
    }

    pub fn check(&self, grid: &SlabGrid) -> Result<(), GridError> {
        for c in &self.c {
            grid.check(c)?;
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Self {
        VectorField {
            c: [&self.c[0] * a, &self.c[1] * a, &self.c[2] * a],
        }
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &VectorField) -> Self {
        let mut out = self.clone();
        out.axpy(a, other);
        out
    }

    /// In place `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        for d in 0..3 {
            self.c[d].scaled_add(a, &other.c[d]);
        }
    }

    /// Componentwise product with a scalar field.
    pub fn times(&self, f: &ScalarField) -> Self {
        VectorField {
            c: [&self.c[0] * f, &self.c[1] * f, &self.c[2] * f],
        }
    }

    /// Componentwise quotient by a scalar field.
    pub fn divided(&self, f: &ScalarField) -> Self {
        VectorField {
            c: [&self.c[0] / f, &self.c[1] / f, &self.c[2] / f],
        }
    }

    pub fn dot(&self, other: &VectorField) -> ScalarField {
        let mut out = &self.c[0] * &other.c[0];
        Zip::from(&mut out)
            .and(&self.c[1])
            .and(&other.c[1])
            .and(&self.c[2])
            .and(&other.c[2])
            .for_each(|o, &a1, &b1, &a2, &b2| *o += a1 * b1 + a2 * b2);
        out
    }

    pub fn norm_sq(&self) -> ScalarField {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.c
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.c.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }
}

impl std::ops::Sub for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        VectorField {
            c: [
                &self.c[0] - &rhs.c[0],
                &self.c[1] - &rhs.c[1],
                &self.c[2] - &rhs.c[2],
            ],
        }
    }
}

impl std::ops::Add for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        VectorField {
            c: [
                &self.c[0] + &rhs.c[0],
                &self.c[1] + &rhs.c[1],
                &self.c[2] + &rhs.c[2],
            ],
        }
    }
}

pub fn max_abs(f: &ScalarField) -> f64 {
    f.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

pub fn all_finite(f: &ScalarField) -> bool {
    f.iter().all(|v| v.is_finite())
}
