//! Self-convergence studies: temporal and spatial orders of the primitive
//! integrator and the convergence of the transport identity defect.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::anelastic::AnelasticSolver;
use crate::diagnostics::transport_identity_terms;
use crate::grid::{Parity, SlabGrid};
use crate::operators::component_parity;
use crate::primitive::{assemble_initial_state, PrimitiveSolver, Vars};
use crate::spectral::Spectral;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dt: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementSeries {
    pub name: String,
    pub levels: Vec<RefinementLevel>,
    /// `log2(e_k / e_(k+1))`.
    pub orders: Vec<f64>,
}

impl RefinementSeries {
    fn new(name: &str, levels: Vec<RefinementLevel>) -> Self {
        let orders = levels
            .windows(2)
            .map(|w| (w[0].error / w[1].error).log2())
            .collect();
        RefinementSeries {
            name: name.to_string(),
            levels,
            orders,
        }
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub temporal: RefinementSeries,
    pub spatial: RefinementSeries,
}

impl RefinementReport {
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "series,nx,ny,nz,dt,error,order")?;
        for s in [&self.temporal, &self.spatial] {
            for (i, l) in s.levels.iter().enumerate() {
                let order = s.orders.get(i).map(|o| format!("{o:e}")).unwrap_or_default();
                writeln!(f, "{},{},{},{},{:e},{:e},{}", s.name, l.nx, l.ny, l.nz, l.dt, l.error, order)?;
            }
        }
        f.flush()
    }
}

fn on_grid(cfg: &ExperimentConfig, g: SlabGrid) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.grid.nx = g.nx;
    c.grid.ny = g.ny;
    c.grid.nz = g.nz;
    c
}

fn integrate_primitive(cfg: &ExperimentConfig, dt: f64) -> Result<Vars, HarnessError> {
    let params = cfg.scaled_params();
    let profile = cfg.profile()?;
    let mut solver = PrimitiveSolver::new(&params, &profile, &cfg.stepper_config(dt))?;
    let helm = crate::helmholtz::Helmholtz::new(&profile);
    let (spec, _) = cfg.initial_data(&helm)?;
    let mut v = solver.vars_from_state(&assemble_initial_state(&spec, &params, &profile)?);
    let steps = (cfg.stepper.final_time / dt).round() as usize;
    for _ in 0..steps {
        v = solver.step_vars(&v)?;
    }
    Ok(v)
}

/// L2 distance of `(rho, m, Y)` after spectral interpolation of `a` onto the
/// grid of `b`.
fn vars_distance(a: &Vars, b: &Vars) -> f64 {
    let ga = {
        let (nz, ny, nx) = a.rho.dim();
        SlabGrid { nx, ny, nz }
    };
    let gb = {
        let (nz, ny, nx) = b.rho.dim();
        SlabGrid { nx, ny, nz }
    };
    let sp = Spectral::new(ga);
    let up = |f: &crate::grid::ScalarField, p: Parity| sp.resample(f, p, &gb);
    let mut total = 0.0;
    let mut add = |x: crate::grid::ScalarField, y: &crate::grid::ScalarField| {
        let d = &x - y;
        total += gb.integrate(&(&d * &d));
    };
    add(up(&a.rho, Parity::Even), &b.rho);
    add(up(&a.y, Parity::Even), &b.y);
    for i in 0..3 {
        add(up(&a.m.c[i], component_parity(i)), &b.m.c[i]);
    }
    total.sqrt()
}

/// Successive-difference errors for `dt, dt/2, ...` on the configured grid.
pub fn temporal_series(cfg: &ExperimentConfig, dt: f64, levels: usize) -> Result<RefinementSeries, HarnessError> {
    let g = cfg.slab_grid()?;
    let runs = (0..=levels)
        .map(|k| integrate_primitive(cfg, dt / f64::powi(2.0, k as i32)))
        .collect::<Result<Vec<_>, _>>()?;
    let lv = runs
        .windows(2)
        .enumerate()
        .map(|(k, w)| RefinementLevel {
            nx: g.nx,
            ny: g.ny,
            nz: g.nz,
            dt: dt / f64::powi(2.0, k as i32),
            error: vars_distance(&w[0], &w[1]),
        })
        .collect();
    Ok(RefinementSeries::new("temporal", lv))
}

/// Successive-difference errors on grids `g, 2g, 4g, ...` at a fixed step.
pub fn spatial_series(
    cfg: &ExperimentConfig,
    coarsest: SlabGrid,
    dt: f64,
    levels: usize,
) -> Result<RefinementSeries, HarnessError> {
    let grids: Vec<SlabGrid> = (0..=levels)
        .map(|k| SlabGrid {
            nx: coarsest.nx << k,
            ny: coarsest.ny << k,
            nz: coarsest.nz << k,
        })
        .collect();
    let runs = grids
        .iter()
        .map(|g| integrate_primitive(&on_grid(cfg, *g), dt))
        .collect::<Result<Vec<_>, _>>()?;
    let lv = runs
        .windows(2)
        .zip(&grids)
        .map(|(w, g)| RefinementLevel {
            nx: g.nx,
            ny: g.ny,
            nz: g.nz,
            dt,
            error: vars_distance(&w[0], &w[1]),
        })
        .collect();
    Ok(RefinementSeries::new("spatial", lv))
}

/// Temporal orders from three halvings of the configured step on the
/// configured grid; spatial orders from grids `g/2, g, 2g` at a quarter step.
pub fn manufactured_study(cfg: &ExperimentConfig) -> Result<RefinementReport, HarnessError> {
    let dt = cfg.stepper.dt.unwrap_or(4e-3);
    let g = cfg.slab_grid()?;
    let coarse = SlabGrid {
        nx: (g.nx / 2).max(4),
        ny: (g.ny / 2).max(4),
        nz: (g.nz / 2).max(4),
    };
    Ok(RefinementReport {
        temporal: temporal_series(cfg, dt, 3)?,
        spatial: spatial_series(cfg, coarse, dt / 4.0, 2)?,
    })
}

/// Transport identity defect over `[0, T]` with `G(Theta) = (Theta - 1)/eps^2`,
/// evaluated every step.
pub fn transport_identity_run(cfg: &ExperimentConfig, dt: f64) -> Result<f64, HarnessError> {
    let params = cfg.scaled_params();
    let profile = cfg.profile()?;
    let stepper = cfg.stepper_config(dt);
    let mut ps = PrimitiveSolver::new(&params, &profile, &stepper)?;
    let asol = AnelasticSolver::new(&params, &profile, &stepper)?;
    let (pspec, aspec) = cfg.initial_data(asol.helmholtz())?;
    let mut p = assemble_initial_state(&pspec, &params, &profile)?;
    let mut a = asol.initial_state(&aspec);
    let mut v = ps.vars_from_state(&p);
    let e2 = params.epsilon * params.epsilon;
    let g = move |t: f64| (t - 1.0) / e2;
    let sp = Spectral::new(profile.grid);
    let (l0, mut prev) = transport_identity_terms(&sp, &p, &a, &g);
    let mut lhs = l0;
    let mut integral = 0.0;
    let steps = (cfg.stepper.final_time / dt).round() as usize;
    for _ in 0..steps {
        v = ps.step_vars(&v)?;
        a = asol.advance(&a)?;
        p = ps.state_from_vars(&v);
        let (l, r) = transport_identity_terms(&sp, &p, &a, &g);
        integral += 0.5 * dt * (prev + r);
        prev = r;
        lhs = l;
    }
    Ok(((lhs - l0) + integral).abs())
}

/// Defects under simultaneous halving of `h` and `dt`, starting from `coarsest`.
pub fn transport_identity_series(
    cfg: &ExperimentConfig,
    coarsest: SlabGrid,
    dt: f64,
    levels: usize,
) -> Result<RefinementSeries, HarnessError> {
    let lv = (0..levels)
        .map(|k| {
            let g = SlabGrid {
                nx: coarsest.nx << k,
                ny: coarsest.ny << k,
                nz: coarsest.nz << k,
            };
            let dtk = dt / f64::powi(2.0, k as i32);
            Ok(RefinementLevel {
                nx: g.nx,
                ny: g.ny,
                nz: g.nz,
                dt: dtk,
                error: transport_identity_run(&on_grid(cfg, g), dtk)?,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok(RefinementSeries::new("transport_identity", lv))
}
