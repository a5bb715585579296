//! `(epsilon, nu)` sweeps, parallel over runs.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::ExperimentConfig;
use super::fit::{fit_rate, RateFitResult};
use super::run::{hash_file, simulate, write_manifest, write_run, RunOutcome};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub nu: f64,
    pub sup_metric: f64,
    pub max_residual_measure: f64,
    pub max_pressure_residual: f64,
    pub max_density_residual: f64,
    pub final_vortical_distance: f64,
    pub final_acoustic_energy: f64,
    pub complete: bool,
}

impl SweepPoint {
    pub const HEADER: &'static str = "epsilon,nu,eps_plus_nu,sup_metric,max_residual_measure,max_pressure_residual,max_density_residual,final_vortical_distance,final_acoustic_energy,complete";

    pub fn from_outcome(o: &RunOutcome) -> Self {
        SweepPoint {
            epsilon: o.epsilon,
            nu: o.nu,
            sup_metric: o.sup_metric,
            max_residual_measure: o.max_bound(|b| b.residual_measure),
            max_pressure_residual: o.max_bound(|b| b.pressure_res),
            max_density_residual: o.max_bound(|b| b.density_res),
            final_vortical_distance: o.vortical_distance.last().copied().unwrap_or(0.0),
            final_acoustic_energy: o.records.last().map_or(0.0, |r| r.acoustic_energy),
            complete: o.complete(),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.epsilon,
            self.nu,
            self.epsilon + self.nu,
            self.sup_metric,
            self.max_residual_measure,
            self.max_pressure_residual,
            self.max_density_residual,
            self.final_vortical_distance,
            self.final_acoustic_energy,
            self.complete
        )
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub runs: Vec<RunOutcome>,
    pub points: Vec<SweepPoint>,
    pub fit: Option<RateFitResult>,
}

pub fn point_dir(epsilon: f64, nu: f64) -> String {
    format!("eps_{epsilon}_nu_{nu}")
}

/// Runs every sweep point on a pool of `threads` workers (one run per
/// worker; each run is single-threaded and independent of the others).
pub fn simulate_sweep(cfg: &ExperimentConfig, threads: usize) -> Result<SweepOutcome, HarnessError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| HarnessError::Runtime(e.to_string()))?;
    let pts = cfg.sweep_points();
    let runs: Vec<RunOutcome> = pool.install(|| {
        pts.par_iter()
            .map(|&(e, n)| simulate(&cfg.at_point(e, n)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let points: Vec<SweepPoint> = runs.iter().map(SweepPoint::from_outcome).collect();
    let fit = if points.len() >= 3 && points.iter().all(|p| p.complete) {
        let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.epsilon + p.nu, p.sup_metric)).collect();
        fit_rate(&xy).ok()
    } else {
        None
    };
    Ok(SweepOutcome { runs, points, fit })
}

pub fn write_rate_csv(path: &Path, points: &[SweepPoint]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", SweepPoint::HEADER)?;
    for p in points {
        writeln!(f, "{}", p.csv_row())?;
    }
    f.flush()
}

pub fn write_fit_csv(path: &Path, fit: &RateFitResult) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "fitted_order,fit_residual,points")?;
    writeln!(f, "{:e},{:e},{}", fit.fitted_order, fit.fit_residual, fit.points.len())?;
    f.flush()
}

/// One directory per point plus `rate.csv`, `fit.csv` and a top-level
/// manifest listing every file with its hash.
pub fn run_sweep(cfg: &ExperimentConfig, dir: Option<&Path>, threads: usize) -> Result<SweepOutcome, HarnessError> {
    let dir: PathBuf = dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    let out = simulate_sweep(cfg, threads)?;
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    for run in &out.runs {
        let sub = point_dir(run.epsilon, run.nu);
        let point_cfg = cfg.at_point(run.epsilon, run.nu);
        for f in write_run(&point_cfg, run, &dir.join(&sub), None)? {
            files.push(super::run::FileEntry {
                path: format!("{sub}/{}", f.path),
                sha256: f.sha256,
            });
        }
        files.push(hash_file(&dir, &format!("{sub}/manifest.json"))?);
    }
    write_rate_csv(&dir.join("rate.csv"), &out.points)?;
    files.push(hash_file(&dir, "rate.csv")?);
    if let Some(fit) = &out.fit {
        write_fit_csv(&dir.join("fit.csv"), fit)?;
        files.push(hash_file(&dir, "fit.csv")?);
    }
    let incomplete = out.points.iter().any(|p| !p.complete);
    write_manifest(
        &dir,
        &json!({
            "code_version": env!("CARGO_PKG_VERSION"),
            "config_hash": cfg.hash(),
            "config": cfg,
            "incomplete": incomplete,
            "points": out.points,
            "fit": out.fit,
            "files": files,
        }),
    )?;
    if incomplete {
        return Err(HarnessError::Runtime("at least one sweep point failed".into()));
    }
    Ok(out)
}
