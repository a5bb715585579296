//! Experiment configuration. A config file names a preset and overrides any
//! subset of its sections; TOML and JSON are both accepted.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::anelastic::AnelasticInitSpec;
use crate::diagnostics::random_smooth_field;
use crate::grid::{Parity, SlabGrid, VectorField};
use crate::helmholtz::Helmholtz;
use crate::hydrostatics::{solve_hydrostatic, HydrostaticProfile};
use crate::params::ScaledParams;
use crate::primitive::{DataKind, InitialDataSpec, StepperConfig};

/// Bundled default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../../../../configs/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Equilibrium,
    WellPreparedRate,
    IllPreparedQualitative,
    ManufacturedConvergence,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Equilibrium,
        Preset::WellPreparedRate,
        Preset::IllPreparedQualitative,
        Preset::ManufacturedConvergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Equilibrium => "equilibrium",
            Preset::WellPreparedRate => "well_prepared_rate",
            Preset::IllPreparedQualitative => "ill_prepared_qualitative",
            Preset::ManufacturedConvergence => "manufactured_convergence",
        }
    }

    pub fn parse(s: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub epsilon: f64,
    pub nu: f64,
    pub gamma: f64,
    pub mu: f64,
    pub lambda_bulk: f64,
    pub g: f64,
    pub rho_bottom: f64,
}

/// Amplitudes of fixed perturbation shapes. The shapes do not depend on
/// `epsilon` or `nu`, so every point of a sweep starts from the same data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: DataKind,
    /// Weighted-solenoidal velocity shared by both systems.
    pub velocity_amplitude: f64,
    /// Temperature perturbation `T0 = Theta2`.
    pub theta_amplitude: f64,
    /// Density perturbation `rho1` (ill-prepared only).
    pub density_amplitude: f64,
    /// Gradient velocity added to the primitive data (ill-prepared only).
    pub acoustic_amplitude: f64,
    /// Seeded random smooth modes added to velocity and temperature.
    pub random_amplitude: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSection {
    /// Fixed step; when absent the step is `dt_safety * stable_dt` at `t = 0`.
    pub dt: Option<f64>,
    pub dt_safety: f64,
    pub final_time: f64,
    /// Steps between diagnostic rows.
    pub record_interval: usize,
    pub cfl_advective: f64,
    pub implicit_tol: f64,
    pub implicit_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub checkpoints: bool,
}

/// `nu` empty means `nu = epsilon`; a single entry is held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    pub grid: GridSection,
    pub params: ParamsSection,
    pub initial: InitialSection,
    pub stepper: StepperSection,
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> Self {
        let grid = GridSection { nx: 32, ny: 32, nz: 16 };
        let params = ParamsSection {
            epsilon: 0.1,
            nu: 0.1,
            gamma: 2.0,
            mu: 0.05,
            lambda_bulk: 0.0,
            g: 1.0,
            rho_bottom: 1.0,
        };
        let initial = InitialSection {
            kind: DataKind::WellPrepared,
            velocity_amplitude: 0.5,
            theta_amplitude: 1.0,
            density_amplitude: 0.0,
            acoustic_amplitude: 0.0,
            random_amplitude: 0.0,
            bound: 10.0,
        };
        let stepper = StepperSection {
            dt: None,
            dt_safety: 1.0,
            final_time: 0.5,
            record_interval: 5,
            cfl_advective: 0.4,
            implicit_tol: 1e-14,
            implicit_max_iter: 200,
        };
        let mut cfg = ExperimentConfig {
            preset: p,
            seed: 0,
            grid,
            params,
            initial,
            stepper,
            output: OutputSection {
                dir: PathBuf::from("out").join(p.name()),
                checkpoints: true,
            },
            sweep: SweepSection::default(),
        };
        match p {
            Preset::Equilibrium => {
                cfg.initial.velocity_amplitude = 0.0;
                cfg.initial.theta_amplitude = 0.0;
                cfg.stepper.dt = Some(1e-3);
                cfg.stepper.final_time = 0.2;
                cfg.stepper.record_interval = 20;
            }
            Preset::WellPreparedRate => {
                cfg.sweep.epsilon = vec![0.2, 0.1, 0.05];
            }
            Preset::IllPreparedQualitative => {
                cfg.params.gamma = 3.5;
                cfg.params.nu = 0.05;
                cfg.initial.kind = DataKind::IllPrepared;
                cfg.initial.density_amplitude = 0.5;
                cfg.initial.acoustic_amplitude = 0.2;
                cfg.stepper.record_interval = 1;
                cfg.sweep.epsilon = vec![0.2, 0.1, 0.05];
                cfg.sweep.nu = vec![0.05];
            }
            Preset::ManufacturedConvergence => {
                cfg.grid = GridSection { nx: 16, ny: 16, nz: 8 };
                cfg.params.epsilon = 0.2;
                cfg.initial.random_amplitude = 0.1;
                cfg.stepper.dt = Some(4e-3);
                cfg.stepper.final_time = 0.1;
            }
        }
        cfg
    }

    /// Parses TOML or JSON text. The `preset` key selects the base config
    /// (default `well_prepared_rate`) that the remaining keys override.
    pub fn parse(text: &str, json: bool) -> Result<Self, HarnessError> {
        let user: Value = if json {
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?
        } else {
            let t: toml::Value = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
            serde_json::to_value(t).map_err(|e| HarnessError::Config(e.to_string()))?
        };
        let preset = match user.get("preset") {
            None => Preset::WellPreparedRate,
            Some(Value::String(s)) => {
                Preset::parse(s).ok_or_else(|| HarnessError::Config(format!("unknown preset {s:?}")))?
            }
            Some(v) => return Err(HarnessError::Config(format!("preset must be a string, got {v}"))),
        };
        let mut base = serde_json::to_value(Self::preset(preset)).expect("config serializes");
        merge(&mut base, user);
        let cfg: Self = serde_json::from_value(base).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        Self::parse(&text, json)
    }

    pub fn bundled_default() -> Self {
        Self::parse(DEFAULT_CONFIG, false).expect("bundled config is valid")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.slab_grid()?;
        self.scaled_params().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(self.params.rho_bottom > 0.0) {
            return bad(format!("rho_bottom = {} must be positive", self.params.rho_bottom));
        }
        let s = &self.stepper;
        if !(s.final_time > 0.0 && s.final_time.is_finite()) {
            return bad(format!("final_time = {} must be positive", s.final_time));
        }
        if s.record_interval == 0 {
            return bad("record_interval must be at least 1".into());
        }
        if !(s.dt_safety > 0.0 && s.dt_safety <= 1.0) {
            return bad(format!("dt_safety = {} must lie in (0, 1]", s.dt_safety));
        }
        self.stepper_config(s.dt.unwrap_or(1e-3))
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let decreasing = |name: &str, v: &[f64]| -> Result<(), HarnessError> {
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) || v.windows(2).any(|w| w[1] >= w[0]) {
                return Err(HarnessError::Config(format!(
                    "sweep.{name} must be positive and strictly decreasing: {v:?}"
                )));
            }
            Ok(())
        };
        decreasing("epsilon", &self.sweep.epsilon)?;
        if self.sweep.nu.len() > 1 {
            decreasing("nu", &self.sweep.nu)?;
            if self.sweep.nu.len() != self.sweep.epsilon.len() {
                return bad("sweep.nu must be empty, a single value, or match sweep.epsilon".into());
            }
        } else if self.sweep.nu.iter().any(|x| !(*x >= 0.0)) {
            return bad("sweep.nu must be nonnegative".into());
        }
        let i = &self.initial;
        for (name, v) in [
            ("velocity_amplitude", i.velocity_amplitude),
            ("theta_amplitude", i.theta_amplitude),
            ("density_amplitude", i.density_amplitude),
            ("acoustic_amplitude", i.acoustic_amplitude),
            ("random_amplitude", i.random_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("initial.{name} = {v} must be nonnegative"));
            }
        }
        if i.kind == DataKind::WellPrepared && (i.density_amplitude > 0.0 || i.acoustic_amplitude > 0.0) {
            return bad("well-prepared data carries no density or acoustic perturbation".into());
        }
        if self.preset == Preset::WellPreparedRate {
            self.scaled_params()
                .validate_rate_regime()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            if i.kind != DataKind::WellPrepared {
                return bad("the rate preset needs well-prepared data".into());
            }
        }
        Ok(())
    }

    pub fn slab_grid(&self) -> Result<SlabGrid, HarnessError> {
        SlabGrid::new(self.grid.nx, self.grid.ny, self.grid.nz).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn scaled_params(&self) -> ScaledParams {
        let p = &self.params;
        ScaledParams {
            epsilon: p.epsilon,
            nu: p.nu,
            gamma: p.gamma,
            mu: p.mu,
            lambda_bulk: p.lambda_bulk,
            g: p.g,
        }
    }

    pub fn stepper_config(&self, dt: f64) -> StepperConfig {
        StepperConfig {
            dt,
            cfl_advective: self.stepper.cfl_advective,
            implicit_tol: self.stepper.implicit_tol,
            implicit_max_iter: self.stepper.implicit_max_iter,
            ..StepperConfig::default()
        }
    }

    pub fn profile(&self) -> Result<HydrostaticProfile, HarnessError> {
        let p = &self.params;
        Ok(solve_hydrostatic(p.gamma, p.g, p.rho_bottom, self.slab_grid()?)?)
    }

    /// `(epsilon, nu)` pairs of the sweep; a single pair when no sweep is set.
    pub fn sweep_points(&self) -> Vec<(f64, f64)> {
        let s = &self.sweep;
        if s.epsilon.is_empty() {
            return vec![(self.params.epsilon, self.params.nu)];
        }
        s.epsilon
            .iter()
            .enumerate()
            .map(|(i, &e)| match s.nu.len() {
                0 => (e, e),
                1 => (e, s.nu[0]),
                _ => (e, s.nu[i]),
            })
            .collect()
    }

    /// Single-run config at one sweep point.
    pub fn at_point(&self, epsilon: f64, nu: f64) -> Self {
        let mut c = self.clone();
        c.params.epsilon = epsilon;
        c.params.nu = nu;
        c.sweep = SweepSection::default();
        c
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex_digest(self.canonical_json().as_bytes())
    }

    /// Primitive and anelastic initial data built from the shared shapes.
    pub fn initial_data(
        &self,
        helm: &Helmholtz,
    ) -> Result<(InitialDataSpec, AnelasticInitSpec), HarnessError> {
        let grid = self.slab_grid()?;
        let i = &self.initial;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let rt = helm.weight().to_vec();
        let mut w = VectorField::sample(&grid, |x, y, z| {
            let horiz = 1.0 + 0.5 * (PI * z).cos();
            let ph = 2.0 * PI * (x + y);
            [
                (2.0 * PI * y).sin() * horiz - 0.5 * PI * (PI * z).cos() * ph.cos(),
                (2.0 * PI * x).sin() * horiz,
                -PI * (PI * z).sin() * ph.sin(),
            ]
        });
        for (k, level) in rt.iter().enumerate() {
            for c in w.c.iter_mut() {
                c.index_axis_mut(ndarray::Axis(0), k).mapv_inplace(|v| v / level);
            }
        }
        let mut w = w.scaled(i.velocity_amplitude);
        let mut t0 = grid.sample(|x, y, z| {
            (2.0 * PI * x).cos() * (2.0 * PI * y).sin() * (PI * z).cos() + 0.5 * (2.0 * PI * z).cos()
        }) * i.theta_amplitude;
        if i.random_amplitude > 0.0 {
            for (c, p) in w.c.iter_mut().zip([Parity::Even, Parity::Even, Parity::Odd]) {
                c.scaled_add(i.random_amplitude, &random_smooth_field(&grid, &mut rng, p));
            }
            t0.scaled_add(i.random_amplitude, &random_smooth_field(&grid, &mut rng, Parity::Even));
        }
        let (v0, _) = helm.project_velocity(&w);
        let mut u0 = v0.clone();
        let mut rho1 = grid.zeros();
        if i.kind == DataKind::IllPrepared {
            // grad(cos(2 pi x) cos(pi z)) has no weighted-solenoidal part
            let acoustic = VectorField::sample(&grid, |x, _, z| {
                [
                    -2.0 * PI * (2.0 * PI * x).sin() * (PI * z).cos(),
                    0.0,
                    -PI * (2.0 * PI * x).cos() * (PI * z).sin(),
                ]
            });
            u0.axpy(i.acoustic_amplitude, &acoustic);
            rho1 = grid.sample(|x, y, z| (2.0 * PI * x).cos() * (PI * z).cos() + 0.5 * (2.0 * PI * y).sin())
                * i.density_amplitude;
        }
        Ok((
            InitialDataSpec {
                kind: i.kind,
                rho1,
                u0,
                theta2: t0.clone(),
                bound: i.bound,
            },
            AnelasticInitSpec { v0, t0 },
        ))
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
