use serde::{Deserialize, Serialize};

use crate::error::{HipError, Result};

/// Outcome family driving the prediction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MultiClass { classes: usize },
    Poisson,
    Zip,
}

impl Family {
    /// Number of columns of the coefficient matrix.
    pub fn outputs(&self) -> usize {
        match self {
            Family::MultiClass { classes } => *classes,
            Family::Poisson | Family::Zip => 1,
        }
    }

    pub fn is_count(&self) -> bool {
        matches!(self, Family::Poisson | Family::Zip)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Family::MultiClass { .. } => "multiclass",
            Family::Poisson => "poisson",
            Family::Zip => "zip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Standardization {
    #[default]
    Subgroup,
    None,
}

/// Step-size and stopping controls shared by the inner solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Initial step size of the backtracking gradient solvers.
    pub initial_step: f64,
    /// Factor applied to the step on each failed sufficient-decrease test.
    pub shrink: f64,
    pub max_inner_iter: usize,
    /// Relative objective change below which an inner solve stops.
    pub inner_tol: f64,
    pub adagrad_rate: f64,
    pub adagrad_eps: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            max_inner_iter: 500,
            inner_tol: 1e-6,
            adagrad_rate: 0.1,
            adagrad_eps: 1e-10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_step", self.initial_step),
            ("shrink", self.shrink),
            ("inner_tol", self.inner_tol),
            ("adagrad_rate", self.adagrad_rate),
            ("adagrad_eps", self.adagrad_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HipError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.shrink >= 1.0 {
            return Err(HipError::Config(format!(
                "shrink must be below 1, got {}",
                self.shrink
            )));
        }
        if self.max_inner_iter == 0 {
            return Err(HipError::Config("max_inner_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Everything needed to reproduce one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub lambda_g: f64,
    pub lambda_xi: f64,
    /// Per-view penalty indicators.
    pub gamma: Vec<bool>,
    pub family: Family,
    pub epsilon_conv: f64,
    pub iter_max: usize,
    pub solver: SolverSettings,
    pub seed: u64,
    pub standardization: Standardization,
}

impl FitConfig {
    /// Defaults for a dataset with `views` views: every view penalized,
    /// relative tolerance 1e-5, at most 200 outer iterations.
    pub fn new(k: usize, lambda_g: f64, lambda_xi: f64, views: usize, family: Family) -> Self {
        Self {
            k,
            lambda_g,
            lambda_xi,
            gamma: vec![true; views],
            family,
            epsilon_conv: 1e-5,
            iter_max: 200,
            solver: SolverSettings::default(),
            seed: 0,
            standardization: Standardization::Subgroup,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(HipError::Config("K must be positive".into()));
        }
        if !(self.lambda_g > 0.0 && self.lambda_g.is_finite()) {
            return Err(HipError::Config(format!("lambda_G must be positive, got {}", self.lambda_g)));
        }
        if !(self.lambda_xi > 0.0 && self.lambda_xi.is_finite()) {
            return Err(HipError::Config(format!("lambda_xi must be positive, got {}", self.lambda_xi)));
        }
        if !self.gamma.iter().any(|&g| g) {
            return Err(HipError::Config("at least one view must be penalized".into()));
        }
        if !(self.epsilon_conv > 0.0) {
            return Err(HipError::Config("epsilon_conv must be positive".into()));
        }
        if self.iter_max == 0 {
            return Err(HipError::Config("iter_max must be positive".into()));
        }
        if let Family::MultiClass { classes } = self.family {
            if classes < 2 {
                return Err(HipError::Config("multi-class outcomes need at least 2 classes".into()));
            }
        }
        self.solver.validate()
    }
}
