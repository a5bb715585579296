//! Discrete differential forms shared by both solvers and the diagnostics.
//!
//! Products are differentiated in split (skew-symmetric) form so that the
//! discrete summation-by-parts identities reproduce the continuous energy
//! and transport balances exactly.

use crate::grid::{Parity, ScalarField, VectorField};
use crate::spectral::Spectral;

/// Vertical parity of velocity component `i`.
pub fn component_parity(i: usize) -> Parity {
    if i == 2 {
        Parity::Odd
    } else {
        Parity::Even
    }
}

/// `g[i][j] = d_j u_i`.
pub struct Gradient {
    pub g: [[ScalarField; 3]; 3],
}

impl Gradient {
    pub fn divergence(&self) -> ScalarField {
        &(&self.g[0][0] + &self.g[1][1]) + &self.g[2][2]
    }
}

pub fn vector_gradient(sp: &Spectral, u: &VectorField) -> Gradient {
    let rows = [0, 1, 2].map(|i| {
        let p = component_parity(i);
        let (gx, gy) = sp.grad_h(&u.c[i]);
        [gx, gy, sp.dz(&u.c[i], p)]
    });
    Gradient { g: rows }
}

/// `mu (grad u + grad u^T - 2/3 div u I) + lambda div u I`.
pub fn stress(grad: &Gradient, mu: f64, lambda: f64) -> [[ScalarField; 3]; 3] {
    let div = grad.divergence();
    let iso = &div * (lambda - 2.0 * mu / 3.0);
    let entry = |i: usize, j: usize| {
        let mut s = &(&grad.g[i][j] + &grad.g[j][i]) * mu;
        if i == j {
            s += &iso;
        }
        s
    };
    [
        [entry(0, 0), entry(0, 1), entry(0, 2)],
        [entry(1, 0), entry(1, 1), entry(1, 2)],
        [entry(2, 0), entry(2, 1), entry(2, 2)],
    ]
}

/// `(div S)_i = sum_j d_j S_ij`.
pub fn stress_divergence(sp: &Spectral, s: &[[ScalarField; 3]; 3]) -> VectorField {
    let comp = |i: usize| {
        let p = component_parity(i);
        let mut out = sp.div_h(&s[i][0], &s[i][1]);
        out += &sp.dz(&s[i][2], p.flip());
        out
    };
    VectorField::new(comp(0), comp(1), comp(2))
}

/// Pointwise `S : grad u`.
pub fn stress_contraction(s: &[[ScalarField; 3]; 3], grad: &Gradient) -> ScalarField {
    let mut out = &s[0][0] * &grad.g[0][0];
    for i in 0..3 {
        for j in 0..3 {
            if i == 0 && j == 0 {
                continue;
            }
            out += &(&s[i][j] * &grad.g[i][j]);
        }
    }
    out
}

/// `div(q m)` for an even scalar `q` and admissible `m`.
pub fn flux_divergence(sp: &Spectral, m: &VectorField, q: &ScalarField, p: Parity) -> ScalarField {
    let mut out = sp.div_h(&(&m.c[0] * q), &(&m.c[1] * q));
    out += &sp.dz(&(&m.c[2] * q), Parity::Odd.times(p));
    out
}

/// `1/2 [div(m u_i) + m . grad u_i + u_i div m]` for each component.
pub fn skew_advection(
    sp: &Spectral,
    m: &VectorField,
    u: &VectorField,
    grad_u: &Gradient,
    div_m: &ScalarField,
) -> VectorField {
    let comp = |i: usize| {
        let p = component_parity(i);
        let mut out = flux_divergence(sp, m, &u.c[i], p);
        for j in 0..3 {
            out += &(&m.c[j] * &grad_u.g[i][j]);
        }
        out += &(&u.c[i] * div_m);
        out *= 0.5;
        out
    };
    VectorField::new(comp(0), comp(1), comp(2))
}

/// `T(m)[q] = div(q m) + q div m + m . grad q` for an even scalar `q`.
/// Half of it is the split form of `div(q m)`.
pub fn skew_transport(
    sp: &Spectral,
    m: &VectorField,
    div_m: &ScalarField,
    q: &ScalarField,
    grad_q: &VectorField,
) -> ScalarField {
    let mut out = flux_divergence(sp, m, q, Parity::Even);
    out += &(q * div_m);
    out += &m.dot(grad_q);
    out
}
