//! Dimensionless parameters of the scaled system.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("parameter {name} = {value} violates {rule}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
}

/// Mach = Froude number `epsilon`, viscosity scale `nu`, adiabatic exponent,
/// shear and bulk viscosities, gravity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    pub epsilon: f64,
    pub nu: f64,
    pub gamma: f64,
    pub mu: f64,
    #[serde(default)]
    pub lambda_bulk: f64,
    pub g: f64,
}

impl ScaledParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let checks: [(&'static str, f64, bool, &'static str); 6] = [
            ("epsilon", self.epsilon, self.epsilon > 0.0, "epsilon > 0"),
            ("nu", self.nu, self.nu >= 0.0, "nu >= 0"),
            ("gamma", self.gamma, self.gamma > 1.0, "gamma > 1"),
            ("mu", self.mu, self.mu > 0.0, "mu > 0"),
            (
                "lambda_bulk",
                self.lambda_bulk,
                self.lambda_bulk >= 0.0,
                "lambda_bulk >= 0",
            ),
            ("g", self.g, self.g > 0.0, "g > 0"),
        ];
        for (name, value, ok, rule) in checks {
            if !ok || !value.is_finite() {
                return Err(ParamError::OutOfRange { name, value, rule });
            }
        }
        Ok(())
    }

    /// Exponent range required by the convergence-rate experiment.
    pub fn validate_rate_regime(&self) -> Result<(), ParamError> {
        self.validate()?;
        if self.gamma <= 1.5 {
            return Err(ParamError::OutOfRange {
                name: "gamma",
                value: self.gamma,
                rule: "gamma > 3/2 for the rate experiment",
            });
        }
        Ok(())
    }

    /// True when `gamma > 3`, the exponent range of the ill-prepared limit.
    pub fn ill_prepared_regime(&self) -> bool {
        self.gamma > 3.0
    }

    pub fn with_epsilon_nu(&self, epsilon: f64, nu: f64) -> Self {
        ScaledParams {
            epsilon,
            nu,
            ..*self
        }
    }
}
