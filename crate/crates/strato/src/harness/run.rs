//! Paired primitive/anelastic runs on a shared time axis.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::{hex_digest, ExperimentConfig, Preset};
use super::refine::{manufactured_study, RefinementReport};
use super::HarnessError;
use crate::anelastic::AnelasticSolver;
use crate::checkpoint::Checkpoint;
use crate::diagnostics::{
    relative_energy, thm1_metric, uniform_bound_monitors, AcousticAnalyzer, BoundMonitors,
    DiagnosticsRecord,
};
use crate::hydrostatics::HydrostaticProfile;
use crate::primitive::{assemble_initial_state, energy_parts, PrimitiveSolver};
use crate::state::{AnelasticState, PrimitiveState};

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub epsilon: f64,
    pub nu: f64,
    pub dt: f64,
    pub steps: usize,
    pub records: Vec<DiagnosticsRecord>,
    pub bounds: Vec<BoundMonitors>,
    /// `|| P(rho u) - rho_tilde v ||_2` at each record time.
    pub vortical_distance: Vec<f64>,
    /// `<Z, Z>_H`, the potential part of the acoustic energy, at each record time.
    pub acoustic_potential: Vec<f64>,
    /// Running sup of the convergence metric, sampled every step.
    pub sup_metric: f64,
    pub final_primitive: PrimitiveState,
    pub final_anelastic: AnelasticState,
    /// Solver failure that cut the run short.
    pub error: Option<String>,
}

impl RunOutcome {
    pub fn complete(&self) -> bool {
        self.error.is_none()
    }

    pub fn max_bound(&self, f: impl Fn(&BoundMonitors) -> f64) -> f64 {
        self.bounds.iter().map(f).fold(0.0, f64::max)
    }
}

struct Recorder<'a> {
    profile: &'a HydrostaticProfile,
    analyzer: AcousticAnalyzer,
    rho_t: crate::grid::ScalarField,
}

impl Recorder<'_> {
    fn record(
        &self,
        cfg: &ExperimentConfig,
        p: &PrimitiveState,
        a: &AnelasticState,
        dissipation: f64,
    ) -> Result<(DiagnosticsRecord, BoundMonitors, f64, f64), HarnessError> {
        let params = cfg.scaled_params();
        let grid = self.profile.grid;
        let (kin, int) = energy_parts(p, &params);
        let b = uniform_bound_monitors(p, self.profile, &params);
        let ac = self.analyzer.variables(p, &params)?;
        let dist = {
            let d = &self.analyzer.vortical_momentum(p) - &a.v.times(&self.rho_t);
            grid.integrate(&d.norm_sq()).sqrt()
        };
        let rec = DiagnosticsRecord {
            time: p.time,
            kinetic_energy: kin,
            internal_energy_scaled: int,
            total_energy: kin + int,
            dissipation_integral: dissipation,
            relative_energy: relative_energy(p, &self.rho_t, &a.v, &params)?,
            thm1_metric: thm1_metric(p, a, self.profile, &params),
            mass: grid.integrate(&p.rho),
            rho_theta_total: grid.integrate(&p.rho_theta),
            theta_pert_linf: b.theta_linf,
            theta_pert_l1: b.theta_l1,
            residual_measure: b.residual_measure,
            acoustic_energy: ac.acoustic_energy,
            vortical_energy: ac.vortical_energy,
        };
        let pot = crate::state::weighted_inner_product(&ac.z_eps, &ac.z_eps, self.profile)?;
        Ok((rec, b, dist, pot))
    }
}

/// Integrates both systems without touching the file system. Solver
/// failures end the run early and are reported in `error`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let params = cfg.scaled_params();
    let profile = cfg.profile()?;
    let mut psolver = PrimitiveSolver::new(&params, &profile, &cfg.stepper_config(1e-3))?;
    let mut asolver = AnelasticSolver::new(&params, &profile, &cfg.stepper_config(1e-3))?;
    let (pspec, aspec) = cfg.initial_data(asolver.helmholtz())?;
    let p0 = assemble_initial_state(&pspec, &params, &profile)?;
    let mut a = asolver.initial_state(&aspec);
    let mut vars = psolver.vars_from_state(&p0);

    let t_end = cfg.stepper.final_time;
    let dt_target = match cfg.stepper.dt {
        Some(dt) => dt,
        None => cfg.stepper.dt_safety * psolver.stable_dt(&vars),
    };
    let steps = (t_end / dt_target - 1e-9).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;
    psolver.set_dt(dt);
    asolver.set_dt(dt);

    let rec = Recorder {
        profile: &profile,
        analyzer: AcousticAnalyzer::new(&profile),
        rho_t: profile.rho_tilde_field(),
    };
    let mut out = RunOutcome {
        epsilon: params.epsilon,
        nu: params.nu,
        dt,
        steps,
        records: Vec::new(),
        bounds: Vec::new(),
        vortical_distance: Vec::new(),
        acoustic_potential: Vec::new(),
        sup_metric: 0.0,
        final_primitive: p0.clone(),
        final_anelastic: a.clone(),
        error: None,
    };
    let push = |out: &mut RunOutcome, p: &PrimitiveState, a: &AnelasticState, d: f64| -> Result<(), HarnessError> {
        let (r, b, dist, pot) = rec.record(cfg, p, a, d)?;
        out.acoustic_potential.push(pot);
        out.sup_metric = out.sup_metric.max(r.thm1_metric);
        out.records.push(r);
        out.bounds.push(b);
        out.vortical_distance.push(dist);
        Ok(())
    };
    push(&mut out, &p0, &a, 0.0)?;
    let mut dissipation = 0.0;
    let mut rate_prev = psolver.dissipation_rate(&p0);
    let mut state = p0;
    for n in 1..=steps {
        let stepped = psolver
            .step_vars(&vars)
            .and_then(|v| asolver.advance(&a).map(|a| (v, a)));
        let (v, anext) = match stepped {
            Ok(x) => x,
            Err(e) => {
                out.error = Some(e.to_string());
                break;
            }
        };
        vars = v;
        a = anext;
        state = psolver.state_from_vars(&vars);
        let rate = psolver.dissipation_rate(&state);
        dissipation += 0.5 * dt * (rate + rate_prev);
        rate_prev = rate;
        out.sup_metric = out.sup_metric.max(thm1_metric(&state, &a, &profile, &params));
        if n % cfg.stepper.record_interval == 0 || n == steps {
            push(&mut out, &state, &a, dissipation)?;
        }
    }
    out.final_primitive = state;
    out.final_anelastic = a;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

pub fn write_diagnostics_csv(path: &Path, records: &[DiagnosticsRecord]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{}", DiagnosticsRecord::HEADER.join(","))?;
    for r in records {
        writeln!(f, "{}", r.csv_row())?;
    }
    f.flush()
}

pub(crate) fn hash_file(dir: &Path, name: &str) -> Result<FileEntry, HarnessError> {
    let bytes = fs::read(dir.join(name))?;
    Ok(FileEntry {
        path: name.to_string(),
        sha256: hex_digest(&bytes),
    })
}

pub(crate) fn write_manifest(dir: &Path, value: &serde_json::Value) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// Artifacts of one run: `diagnostics.csv`, checkpoints, `manifest.json`
/// and, for the refinement preset, `refinement.csv`.
pub fn write_run(
    cfg: &ExperimentConfig,
    out: &RunOutcome,
    dir: &Path,
    refinement: Option<&RefinementReport>,
) -> Result<Vec<FileEntry>, HarnessError> {
    fs::create_dir_all(dir)?;
    let mut names = vec!["diagnostics.csv".to_string()];
    write_diagnostics_csv(&dir.join("diagnostics.csv"), &out.records)?;
    if cfg.output.checkpoints {
        let profile = cfg.profile()?;
        Checkpoint::from_primitive(&out.final_primitive, &profile).save(dir.join("primitive_final.strato"))?;
        Checkpoint::from_anelastic(&out.final_anelastic).save(dir.join("anelastic_final.strato"))?;
        names.push("primitive_final.strato".into());
        names.push("anelastic_final.strato".into());
    }
    if let Some(r) = refinement {
        r.write_csv(&dir.join("refinement.csv"))?;
        names.push("refinement.csv".into());
    }
    let files = names
        .iter()
        .map(|n| hash_file(dir, n))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "config": cfg,
        "incomplete": !out.complete(),
        "error": out.error,
        "dt": out.dt,
        "steps": out.steps,
        "sup_metric": out.sup_metric,
        "refinement": refinement,
        "files": files,
    });
    write_manifest(dir, &manifest)?;
    Ok(files)
}

/// Runs one configuration and writes its artifacts to `dir` (or the
/// configured output directory). Partial output is written before a solver
/// error is returned.
pub fn run_paired(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<RunOutcome, HarnessError> {
    let dir: PathBuf = dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    let out = simulate(cfg)?;
    let refinement = if cfg.preset == Preset::ManufacturedConvergence && out.complete() {
        Some(manufactured_study(cfg)?)
    } else {
        None
    };
    write_run(cfg, &out, &dir, refinement.as_ref())?;
    match &out.error {
        Some(e) => Err(HarnessError::Runtime(e.clone())),
        None => Ok(out),
    }
}
