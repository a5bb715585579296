use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use strato::diagnostics::{propagator_spectrum, DiagnosticsRecord};
use strato::harness::check::run_checks;
use strato::harness::config::ExperimentConfig;
use strato::harness::sweep::write_fit_csv;
use strato::harness::{fit_rate, run_paired, run_sweep, HarnessError, Preset};

#[derive(Parser, Debug)]
#[command(name = "strato", version, about = "Stratified low-Mach experiments")]
struct Cli {
    /// Experiment config (TOML or JSON); the bundled default when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for sweeps; STRATO_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized initial modes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// One paired primitive/anelastic run.
    Run {
        /// Use a built-in preset instead of the config file.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Runs every (epsilon, nu) point and fits the rate.
    Sweep,
    /// Fits the rate from a sweep's rate.csv.
    Fit {
        #[arg(long)]
        input: PathBuf,
    },
    /// Lowest eigenvalues of the acoustic propagator.
    Spectrum {
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
    /// Invariant suite on the config.
    Check,
    /// Version, presets and output schema.
    Info,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::bundled_default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn threads(cli: &Cli) -> Result<usize, HarnessError> {
    match std::env::var("STRATO_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| HarnessError::Config(format!("STRATO_THREADS={v:?} is not a count"))),
        Err(_) => Ok(cli.threads.unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        })),
    }
}

fn read_rate_points(path: &Path) -> Result<Vec<(f64, f64)>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| HarnessError::Config(format!("{} has no column {name}", path.display())))
    };
    let (ix, iy) = (col("eps_plus_nu")?, col("sup_metric")?);
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let num = |i: usize| {
                f.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| HarnessError::Config(format!("bad row {l:?}")))
            };
            Ok((num(ix)?, num(iy)?))
        })
        .collect()
}

fn execute(cli: &Cli) -> Result<(), HarnessError> {
    match &cli.cmd {
        Cmd::Run { preset } => {
            let cfg = match preset {
                Some(name) => {
                    let p = Preset::parse(name)
                        .ok_or_else(|| HarnessError::Config(format!("unknown preset {name:?}")))?;
                    let mut c = ExperimentConfig::preset(p);
                    c.sweep = Default::default();
                    if let Some(s) = cli.seed {
                        c.seed = s;
                    }
                    c
                }
                None => {
                    let c = load(cli)?;
                    let (e, n) = c.sweep_points()[0];
                    c.at_point(e, n)
                }
            };
            let out = run_paired(&cfg, cli.output.as_deref())?;
            println!(
                "steps {} dt {:e} sup_metric {:e} final_relative_energy {:e}",
                out.steps,
                out.dt,
                out.sup_metric,
                out.records.last().map_or(0.0, |r| r.relative_energy)
            );
        }
        Cmd::Sweep => {
            let cfg = load(cli)?;
            let out = run_sweep(&cfg, cli.output.as_deref(), threads(cli)?)?;
            for p in &out.points {
                println!("epsilon {:e} nu {:e} sup_metric {:e}", p.epsilon, p.nu, p.sup_metric);
            }
            if let Some(f) = &out.fit {
                println!("fitted_order {:.6} fit_residual {:e}", f.fitted_order, f.fit_residual);
            }
        }
        Cmd::Fit { input } => {
            let fit = fit_rate(&read_rate_points(input)?)?;
            println!("fitted_order {:.6} fit_residual {:e}", fit.fitted_order, fit.fit_residual);
            if let Some(dir) = &cli.output {
                std::fs::create_dir_all(dir)?;
                write_fit_csv(&dir.join("fit.csv"), &fit)?;
            }
        }
        Cmd::Spectrum { count } => {
            let cfg = load(cli)?;
            let profile = cfg.profile()?;
            let modes = propagator_spectrum(&profile, &profile.grid, *count)
                .map_err(|e| match e {
                    strato::diagnostics::DiagError::TooManyEigenvalues { .. } => HarnessError::Config(e.to_string()),
                    e => e.into(),
                })?;
            let mut csv = String::from("index,eigenvalue,kx,ky,m\n");
            for (i, m) in modes.iter().enumerate() {
                csv.push_str(&format!("{i},{:e},{},{},{}\n", m.eigenvalue, m.kx, m.ky, m.m));
            }
            print!("{csv}");
            if let Some(dir) = &cli.output {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("spectrum.csv"), csv)?;
            }
        }
        Cmd::Check => {
            let cfg = load(cli)?;
            let results = run_checks(&cfg)?;
            let mut ok = true;
            for r in &results {
                ok &= r.pass;
                println!(
                    "{} {} value={:e} tol={:e}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.value,
                    r.tolerance
                );
            }
            if !ok {
                return Err(HarnessError::Runtime("invariant suite failed".into()));
            }
        }
        Cmd::Info => {
            println!("strato {}", env!("CARGO_PKG_VERSION"));
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            println!("presets: {}", names.join(", "));
            println!("diagnostics.csv: {}", DiagnosticsRecord::HEADER.join(","));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
