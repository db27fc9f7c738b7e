//! TOML run configuration and its validation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use mixhess_core::exprs::{parse, positivity_scan, Expr, ScalarField};
use mixhess_core::grid::{DomainSpec, Grid};
use mixhess_core::solver::{CoefficientField, EpsSchedule, NewtonSettings, DIM};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// An expression given either as text or as a bare number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExprSource {
    Number(f64),
    Text(String),
}

impl ExprSource {
    pub fn parse(&self, what: &str) -> Result<Expr, ConfigError> {
        match self {
            ExprSource::Number(v) => Ok(Expr::Num(*v)),
            ExprSource::Text(s) => parse(s).map_err(|e| invalid(format!("{what}: {e} in \"{s}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub eps0: f64,
    pub ratio: f64,
    pub eps_min: f64,
    pub max_iter: usize,
    pub tol_res: f64,
    pub tol_step: f64,
    pub tau_safety: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = EpsSchedule::default();
        Self {
            eps0: s.eps0,
            ratio: s.ratio,
            eps_min: s.eps_min,
            max_iter: s.newton.max_iter,
            tol_res: s.newton.tol_res,
            tol_step: s.newton.tol_step,
            tau_safety: s.newton.tau_safety,
        }
    }
}

impl ScheduleConfig {
    pub fn to_schedule(&self) -> EpsSchedule {
        EpsSchedule {
            eps0: self.eps0,
            ratio: self.ratio,
            eps_min: self.eps_min,
            newton: NewtonSettings {
                max_iter: self.max_iter,
                tol_res: self.tol_res,
                tol_step: self.tol_step,
                tau_safety: self.tau_safety,
                ..NewtonSettings::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub enabled: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// A known exact solution used for error tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub u: ExprSource,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub k: usize,
    pub alpha: Vec<ExprSource>,
    pub phi: ExprSource,
    pub h: f64,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub audits: AuditConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub reference: Option<ReferenceConfig>,
}

/// A validated configuration with the grid built and expressions parsed.
pub struct Prepared {
    pub grid: Grid,
    pub k: usize,
    pub field: CoefficientField,
    pub schedule: EpsSchedule,
    pub reference: Option<(Expr, Option<f64>)>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    /// Checks everything that can be checked without solving: `k`, the
    /// coefficient count, expression syntax, domain convexity, grid size,
    /// schedule and strict positivity of every `α_l` on the grid.
    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        if self.k < 2 {
            return Err(invalid(format!("k = {} is not allowed; k must be at least 2", self.k)));
        }
        if self.k > DIM {
            return Err(invalid(format!("k = {} exceeds the dimension {DIM}", self.k)));
        }
        if self.alpha.len() != self.k {
            return Err(invalid(format!(
                "alpha has {} entries, expected k = {} (alpha_0 .. alpha_{})",
                self.alpha.len(),
                self.k,
                self.k - 1
            )));
        }
        self.domain.validate().map_err(|e| invalid(format!("domain: {e}")))?;
        if !self.domain.is_strictly_convex() {
            let (kmin, _) = self.domain.curvature_bounds();
            return Err(invalid(format!("domain is not strictly convex (minimum curvature {kmin:e})")));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(invalid(format!("h = {} must be positive", self.h)));
        }
        let schedule = self.schedule.to_schedule();
        schedule.validate().map_err(|e| invalid(format!("schedule: {e}")))?;
        if !(schedule.newton.tol_res > 0.0 && schedule.newton.max_iter > 0) {
            return Err(invalid("schedule: tol_res and max_iter must be positive"));
        }
        let grid = Grid::build(self.domain, self.h).map_err(|e| invalid(format!("grid: {e}")))?;
        let mut alpha: Vec<Arc<dyn ScalarField>> = Vec::with_capacity(self.k);
        for (l, src) in self.alpha.iter().enumerate() {
            let e = src.parse(&format!("alpha[{l}]"))?;
            let (min, at) = positivity_scan(&e, &grid).map_err(|err| invalid(format!("alpha[{l}]: {err}")))?;
            if !(min > 0.0) {
                return Err(invalid(format!(
                    "alpha[{l}] must be positive on the closed domain; minimum {min} at ({:.6}, {:.6})",
                    at[0], at[1]
                )));
            }
            alpha.push(Arc::new(e));
        }
        let phi = self.phi.parse("phi")?;
        for b in grid.boundary() {
            phi.value(b.point).map_err(|err| invalid(format!("phi at ({:.6}, {:.6}): {err}", b.point[0], b.point[1])))?;
        }
        let reference = match &self.reference {
            Some(r) => Some((r.u.parse("reference.u")?, r.c)),
            None => None,
        };
        Ok(Prepared { grid, k: self.k, field: CoefficientField { alpha, phi: Arc::new(phi) }, schedule, reference })
    }
}
