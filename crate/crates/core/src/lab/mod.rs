//! Experiment orchestration: Monte-Carlo estimates of the integrated density
//! of states and its Laplace transform on the periodised torus, the choice
//! `M(t)`, scaling studies, exponent regression, numeric Tauberian checks and
//! report output.
//!
//! All estimates are *torus-proxy* quantities: the periodised trace is an
//! upper-bound object for the infinite-volume Laplace transform.

mod ensemble;
mod report;
mod study;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alloy::{LatticeLaw, SingleSite};
use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};
use crate::torus::DEFAULT_OVERSAMPLING;

pub use ensemble::{estimate_ids, estimate_laplace, run_ensemble, Cell, EnsembleResult, SampleSpectrum};
pub use report::{format_g17, write_ensemble, write_study, write_tauber, Metadata};
pub use study::{
    choose_m_of_t, fit_lifshitz_exponent, scaling_study, verify_tauberian_numeric, Band, LambdaRow, MChoice, StudyReport,
    StudyRow, SyntheticMeasure, TauberCheck, TauberReport, TauberRow, STABLE_FACTOR,
};

/// Default cap on the eigencount during auto-escalation.
pub const DEFAULT_K_CAP: usize = 1024;
/// Eigencount used before escalation, clipped to the number of unknowns.
pub const DEFAULT_K: usize = 64;

/// On-disk form of [`ExperimentConfig`]: a TOML table whose kinetic term,
/// profile and law use their canonical call syntax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    phi: String,
    site: String,
    law: String,
    d: usize,
    #[serde(default)]
    m: Vec<usize>,
    #[serde(default = "default_oversampling")]
    oversampling: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default = "default_k_cap")]
    k_cap: usize,
    #[serde(default)]
    t_grid: Vec<f64>,
    #[serde(default)]
    lambda_grid: Vec<f64>,
    samples: usize,
    seed: u64,
    #[serde(default = "default_eig_tol")]
    eig_tol: f64,
    #[serde(default = "default_trace_tol")]
    trace_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    #[serde(default)]
    free_control: bool,
}

fn default_oversampling() -> usize {
    DEFAULT_OVERSAMPLING
}
fn default_k_cap() -> usize {
    DEFAULT_K_CAP
}
fn default_eig_tol() -> f64 {
    1e-8
}
fn default_trace_tol() -> f64 {
    1e-10
}

/// A full ensemble experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub phi: BernsteinSpec,
    pub site: SingleSite,
    pub law: LatticeLaw,
    pub d: usize,
    /// Torus sides for `laplace` / `ids`; `study` picks its own.
    pub m_list: Vec<usize>,
    pub oversampling: usize,
    /// Initial eigencount; `None` means `min(64, N^d)`.
    pub k: Option<usize>,
    pub k_cap: usize,
    pub t_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Residual certificate of each eigenvalue.
    pub eig_tol: f64,
    /// Relative size of the heat-trace remainder that counts as certified.
    pub trace_tol: f64,
    pub output: Option<PathBuf>,
    /// Control runs with `V = 0`, bypassing the law (which cannot be
    /// degenerate). Testing only.
    pub free_control: bool,
    /// Worker count; never affects results.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// A config with library defaults for everything but the physics.
    pub fn new(phi: BernsteinSpec, site: SingleSite, law: LatticeLaw, samples: usize, seed: u64) -> Self {
        ExperimentConfig {
            d: site.d(),
            phi,
            site,
            law,
            m_list: vec![],
            oversampling: DEFAULT_OVERSAMPLING,
            k: None,
            k_cap: DEFAULT_K_CAP,
            t_grid: vec![],
            lambda_grid: vec![],
            samples,
            seed,
            eig_tol: default_eig_tol(),
            trace_tol: default_trace_tol(),
            output: None,
            free_control: false,
            threads: None,
        }
    }

    pub fn from_toml_str(src: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| Error::Parse(format!("experiment config: {e}")))?;
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let phi: BernsteinSpec = raw.phi.parse()?;
        let site = SingleSite::parse(&raw.site, raw.d, phi.alpha())?;
        let config = ExperimentConfig {
            phi,
            site,
            law: raw.law.parse()?,
            d: raw.d,
            m_list: raw.m,
            oversampling: raw.oversampling,
            k: raw.k,
            k_cap: raw.k_cap,
            t_grid: raw.t_grid,
            lambda_grid: raw.lambda_grid,
            samples: raw.samples,
            seed: raw.seed,
            eig_tol: raw.eig_tol,
            trace_tol: raw.trace_tol,
            output: raw.output,
            free_control: raw.free_control,
            threads: None,
        };
        config.validate()?;
        Ok(config)
    }

    fn to_raw(&self) -> RawConfig {
        RawConfig {
            phi: self.phi.to_string(),
            site: self.site.to_string(),
            law: self.law.to_string(),
            d: self.d,
            m: self.m_list.clone(),
            oversampling: self.oversampling,
            k: self.k,
            k_cap: self.k_cap,
            t_grid: self.t_grid.clone(),
            lambda_grid: self.lambda_grid.clone(),
            samples: self.samples,
            seed: self.seed,
            eig_tol: self.eig_tol,
            trace_tol: self.trace_tol,
            output: self.output.clone(),
            free_control: self.free_control,
        }
    }

    /// Canonical TOML text; parsing it back yields an equal config (up to
    /// the worker count, which is not part of an experiment).
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_raw()).expect("experiment config serialises")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks grids, sizes and tolerances.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > 3 {
            return Err(Error::Config(format!("dimension must be 1, 2 or 3, got {}", self.d)));
        }
        if self.site.d() != self.d {
            return Err(Error::Config(format!("site profile is {}-dimensional but d = {}", self.site.d(), self.d)));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.oversampling == 0 {
            return Err(Error::Config("oversampling must be positive".into()));
        }
        if self.m_list.contains(&0) {
            return Err(Error::Config("torus sides must be positive".into()));
        }
        if self.m_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("M list must be strictly increasing".into()));
        }
        for (name, grid) in [("t", &self.t_grid), ("lambda", &self.lambda_grid)] {
            if grid.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("{name} grid must be positive and finite")));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("{name} grid must be strictly increasing")));
            }
        }
        if self.k == Some(0) || self.k_cap == 0 {
            return Err(Error::Config("eigencount must be positive".into()));
        }
        if !(self.eig_tol > 0.0 && self.trace_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Initial eigencount for a problem with `dim` unknowns.
    pub fn initial_k(&self, dim: usize) -> usize {
        self.k.unwrap_or(DEFAULT_K).min(self.k_cap).min(dim).max(1)
    }
}
