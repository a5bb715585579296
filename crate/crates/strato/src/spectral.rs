//! Spectral differentiation on the slab.
//!
//! Horizontal derivatives use FFTs with the Nyquist wavenumber set to zero so
//! the discrete operator stays skew-symmetric. Vertical derivatives map even
//! (cosine) fields to odd (sine) fields and back through dense matrices
//! `D_eo` and `D_oe = -D_eo^T`, which makes summation by parts exact for the
//! midpoint quadrature.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array3;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{Parity, ScalarField, SlabGrid, VectorField};

pub type Spectrum = Vec<Complex64>;

pub struct Spectral {
    grid: SlabGrid,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    dz_eo: Vec<f64>,
    dz_oe: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

/// Signed integer wavenumber of FFT bin `i` out of `n`.
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Wavenumber index used by first derivatives; the Nyquist bin maps to 0.
pub fn effective_index(i: usize, n: usize) -> i64 {
    if i == n / 2 {
        0
    } else {
        signed_index(i, n)
    }
}

/// Even-to-odd vertical derivative on `n` cell centers, row-major.
pub fn vertical_derivative_matrix(n: usize) -> Vec<f64> {
    let z: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect();
    let mut d = vec![0.0; n * n];
    for j in 0..n {
        for l in 0..n {
            let mut s = 0.0;
            for m in 1..n {
                let w = m as f64 * PI;
                s -= (2.0 / n as f64) * w * (w * z[j]).sin() * (w * z[l]).cos();
            }
            d[j * n + l] = s;
        }
    }
    d
}

impl Spectral {
    pub fn new(grid: SlabGrid) -> Self {
        let mut planner = FftPlanner::new();
        let kx = (0..grid.nx)
            .map(|i| 2.0 * PI * effective_index(i, grid.nx) as f64)
            .collect();
        let ky = (0..grid.ny)
            .map(|i| 2.0 * PI * effective_index(i, grid.ny) as f64)
            .collect();
        let n = grid.nz;
        let dz_eo = vertical_derivative_matrix(n);
        let mut dz_oe = vec![0.0; n * n];
        for j in 0..n {
            for l in 0..n {
                dz_oe[j * n + l] = -dz_eo[l * n + j];
            }
        }
        Spectral {
            grid,
            fft_x: planner.plan_fft_forward(grid.nx),
            ifft_x: planner.plan_fft_inverse(grid.nx),
            fft_y: planner.plan_fft_forward(grid.ny),
            ifft_y: planner.plan_fft_inverse(grid.ny),
            kx,
            ky,
            dz_eo,
            dz_oe,
        }
    }

    pub fn grid(&self) -> &SlabGrid {
        &self.grid
    }

    /// Effective `x` wavenumber `2 pi k` of bin `i`.
    pub fn kx(&self, i: usize) -> f64 {
        self.kx[i]
    }

    pub fn ky(&self, j: usize) -> f64 {
        self.ky[j]
    }

    /// `D_eo`, row-major `nz x nz`.
    pub fn dz_even_matrix(&self) -> &[f64] {
        &self.dz_eo
    }

    pub fn dz_odd_matrix(&self) -> &[f64] {
        &self.dz_oe
    }

    /// Horizontal transform of every level. Layout `[k][ix][iy]`.
    pub fn forward(&self, f: &ScalarField) -> Spectrum {
        let (nx, ny, nz) = (self.grid.nx, self.grid.ny, self.grid.nz);
        let plane = nx * ny;
        let src = f.as_slice().expect("standard layout");
        let mut out = vec![Complex64::new(0.0, 0.0); plane * nz];
        let mut buf = vec![Complex64::new(0.0, 0.0); plane];
        for k in 0..nz {
            for (b, &v) in buf.iter_mut().zip(&src[k * plane..(k + 1) * plane]) {
                *b = Complex64::new(v, 0.0);
            }
            self.fft_x.process(&mut buf);
            let lvl = &mut out[k * plane..(k + 1) * plane];
            for iy in 0..ny {
                for ix in 0..nx {
                    lvl[ix * ny + iy] = buf[iy * nx + ix];
                }
            }
            self.fft_y.process(lvl);
        }
        out
    }

    /// Inverse of [`Spectral::forward`], keeping the real part.
    pub fn inverse(&self, s: &[Complex64]) -> ScalarField {
        let (nx, ny, nz) = (self.grid.nx, self.grid.ny, self.grid.nz);
        let plane = nx * ny;
        let scale = 1.0 / plane as f64;
        let mut out = Array3::zeros(self.grid.shape());
        let dst = out.as_slice_mut().expect("standard layout");
        let mut t = vec![Complex64::new(0.0, 0.0); plane];
        let mut buf = vec![Complex64::new(0.0, 0.0); plane];
        for k in 0..nz {
            t.copy_from_slice(&s[k * plane..(k + 1) * plane]);
            self.ifft_y.process(&mut t);
            for ix in 0..nx {
                for iy in 0..ny {
                    buf[iy * nx + ix] = t[ix * ny + iy];
                }
            }
            self.ifft_x.process(&mut buf);
            for (d, b) in dst[k * plane..(k + 1) * plane].iter_mut().zip(&buf) {
                *d = b.re * scale;
            }
        }
        out
    }

    fn times_ik(&self, s: &mut [Complex64], along_x: bool) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for (idx, c) in s.iter_mut().enumerate() {
            let ix = (idx / ny) % nx;
            let iy = idx % ny;
            let k = if along_x { self.kx[ix] } else { self.ky[iy] };
            *c = Complex64::new(-k * c.im, k * c.re);
        }
    }

    pub fn dx(&self, f: &ScalarField) -> ScalarField {
        let mut s = self.forward(f);
        self.times_ik(&mut s, true);
        self.inverse(&s)
    }

    pub fn dy(&self, f: &ScalarField) -> ScalarField {
        let mut s = self.forward(f);
        self.times_ik(&mut s, false);
        self.inverse(&s)
    }

    /// `(d/dx f, d/dy f)` from a single forward transform.
    pub fn grad_h(&self, f: &ScalarField) -> (ScalarField, ScalarField) {
        let s = self.forward(f);
        let mut sx = s.clone();
        self.times_ik(&mut sx, true);
        let mut sy = s;
        self.times_ik(&mut sy, false);
        (self.inverse(&sx), self.inverse(&sy))
    }

    /// `d/dx fx + d/dy fy` with one inverse transform.
    pub fn div_h(&self, fx: &ScalarField, fy: &ScalarField) -> ScalarField {
        let mut sx = self.forward(fx);
        self.times_ik(&mut sx, true);
        let mut sy = self.forward(fy);
        self.times_ik(&mut sy, false);
        for (a, b) in sx.iter_mut().zip(&sy) {
            *a += b;
        }
        self.inverse(&sx)
    }

    /// Applies a row-major `nz x nz` matrix along every vertical column.
    pub fn apply_vertical(&self, mat: &[f64], f: &ScalarField) -> ScalarField {
        let nz = self.grid.nz;
        let plane = self.grid.nx * self.grid.ny;
        let src = f.as_slice().expect("standard layout");
        let mut out = Array3::zeros(self.grid.shape());
        let dst = out.as_slice_mut().expect("standard layout");
        for k in 0..nz {
            let o = &mut dst[k * plane..(k + 1) * plane];
            for l in 0..nz {
                let a = mat[k * nz + l];
                if a == 0.0 {
                    continue;
                }
                for (d, &v) in o.iter_mut().zip(&src[l * plane..(l + 1) * plane]) {
                    *d += a * v;
                }
            }
        }
        out
    }

    /// Vertical derivative of a field with the given parity.
    pub fn dz(&self, f: &ScalarField, parity: Parity) -> ScalarField {
        match parity {
            Parity::Even => self.apply_vertical(&self.dz_eo, f),
            Parity::Odd => self.apply_vertical(&self.dz_oe, f),
        }
    }

    /// Gradient of a scalar; the vertical component has flipped parity.
    pub fn grad(&self, f: &ScalarField, parity: Parity) -> VectorField {
        let (gx, gy) = self.grad_h(f);
        VectorField::new(gx, gy, self.dz(f, parity))
    }

    /// Divergence of a vector whose horizontal components have parity `p`
    /// and whose vertical component has the opposite parity.
    pub fn div(&self, v: &VectorField, p: Parity) -> ScalarField {
        let mut out = self.div_h(&v.c[0], &v.c[1]);
        out += &self.dz(&v.c[2], p.flip());
        out
    }

    /// Spectral resampling onto a grid with at least as many nodes in every
    /// direction.
    pub fn resample(&self, f: &ScalarField, parity: Parity, target: &SlabGrid) -> ScalarField {
        let src = &self.grid;
        assert!(target.nx >= src.nx && target.ny >= src.ny && target.nz >= src.nz);
        let s = self.forward(f);
        let (nz, nx, ny) = (src.nz, src.nx, src.ny);
        // vertical analysis into modes, then synthesis on the target levels
        let zs = src.z_nodes();
        let zt = target.z_nodes();
        let modes: Vec<(usize, f64)> = match parity {
            Parity::Even => (0..nz)
                .map(|m| (m, if m == 0 { 1.0 } else { 2.0 }))
                .collect(),
            Parity::Odd => (1..=nz)
                .map(|m| (m, if m == nz { 1.0 } else { 2.0 }))
                .collect(),
        };
        let basis = |m: usize, z: f64| match parity {
            Parity::Even => (m as f64 * PI * z).cos(),
            Parity::Odd => (m as f64 * PI * z).sin(),
        };
        let tplane = target.nx * target.ny;
        let mut ts = vec![Complex64::new(0.0, 0.0); tplane * target.nz];
        for ix in 0..nx {
            for iy in 0..ny {
                let col: Vec<Complex64> = (0..nz).map(|k| s[(k * nx + ix) * ny + iy]).collect();
                let coef: Vec<Complex64> = modes
                    .iter()
                    .map(|&(m, w)| {
                        let mut c = Complex64::new(0.0, 0.0);
                        for k in 0..nz {
                            c += col[k] * basis(m, zs[k]);
                        }
                        c * (w / nz as f64)
                    })
                    .collect();
                // horizontal zero padding; a Nyquist bin is split between +-n/2
                let sx = signed_index(ix, nx);
                let sy = signed_index(iy, ny);
                let xs: Vec<(i64, f64)> = if 2 * ix == nx && target.nx > nx {
                    vec![(sx, 0.5), (-sx, 0.5)]
                } else {
                    vec![(sx, 1.0)]
                };
                let ys: Vec<(i64, f64)> = if 2 * iy == ny && target.ny > ny {
                    vec![(sy, 0.5), (-sy, 0.5)]
                } else {
                    vec![(sy, 1.0)]
                };
                let scale = tplane as f64 / (nx * ny) as f64;
                for &(ax, wx) in &xs {
                    for &(ay, wy) in &ys {
                        let tix = ax.rem_euclid(target.nx as i64) as usize;
                        let tiy = ay.rem_euclid(target.ny as i64) as usize;
                        for (k, &z) in zt.iter().enumerate() {
                            let mut v = Complex64::new(0.0, 0.0);
                            for (c, &(m, _)) in coef.iter().zip(&modes) {
                                v += c * basis(m, z);
                            }
                            ts[(k * target.nx + tix) * target.ny + tiy] += v * (wx * wy * scale);
                        }
                    }
                }
            }
        }
        Spectral::new(*target).inverse(&ts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SlabGrid {
        SlabGrid::new(8, 8, 8).unwrap()
    }

    #[test]
    fn horizontal_derivative_of_trig() {
        let g = grid();
        let sp = Spectral::new(g);
        let f = g.sample(|x, y, _| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
        let fx = sp.dx(&f);
        let fy = sp.dy(&f);
        let ex = g.sample(|x, y, _| 2.0 * PI * (2.0 * PI * x).cos() * (4.0 * PI * y).cos());
        let ey = g.sample(|x, y, _| -4.0 * PI * (2.0 * PI * x).sin() * (4.0 * PI * y).sin());
        assert!((&fx - &ex).iter().all(|d| d.abs() < 1e-12));
        assert!((&fy - &ey).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn vertical_derivatives_of_cosine_and_sine() {
        let g = grid();
        let sp = Spectral::new(g);
        let c = g.sample(|_, _, z| (3.0 * PI * z).cos());
        let s = g.sample(|_, _, z| (3.0 * PI * z).sin());
        let dc = sp.dz(&c, Parity::Even);
        let ds = sp.dz(&s, Parity::Odd);
        assert!((&dc + &(&s * (3.0 * PI))).iter().all(|d| d.abs() < 1e-11));
        assert!((&ds - &(&c * (3.0 * PI))).iter().all(|d| d.abs() < 1e-11));
    }

    #[test]
    fn summation_by_parts_is_exact() {
        let g = grid();
        let sp = Spectral::new(g);
        let f = g.sample(|x, y, z| (x * 7.0).sin() + z * z * y + (z * 5.0).exp());
        let w = VectorField::sample(&g, |x, y, z| {
            [(x + z).cos(), y * z, (PI * z).sin() * (1.0 + x)]
        });
        let lhs = g.integrate(&(&f * &sp.div(&w, Parity::Even)));
        let gf = sp.grad(&f, Parity::Even);
        let rhs = -g.integrate(&gf.dot(&w));
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
    }

    #[test]
    fn nyquist_mode_has_zero_derivative() {
        let g = grid();
        let sp = Spectral::new(g);
        let f = g.sample(|x, _, _| (8.0 * PI * x).cos());
        assert!(sp.dx(&f).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn resample_reproduces_resolved_modes() {
        let g = grid();
        let fine = SlabGrid::new(16, 12, 16).unwrap();
        let sp = Spectral::new(g);
        let f = |x: f64, y: f64, z: f64| {
            1.0 + (2.0 * PI * x).sin() * (2.0 * PI * z).cos() + (6.0 * PI * y).cos()
        };
        let r = sp.resample(&g.sample(f), Parity::Even, &fine);
        assert!((&r - &fine.sample(f)).iter().all(|d| d.abs() < 1e-12));
        let h = |x: f64, _y: f64, z: f64| (PI * z).sin() * (2.0 * PI * x).cos();
        let r = sp.resample(&g.sample(h), Parity::Odd, &fine);
        assert!((&r - &fine.sample(h)).iter().all(|d| d.abs() < 1e-12));
    }
}
