//! Ensemble spectra and the estimators built from them.

use std::time::Instant;

use rayon::prelude::*;

use super::ExperimentConfig;
use crate::alloy::{mix64, periodized_potential, sample_config};
use crate::error::{Error, Result};
use crate::special::kahan_sum;
use crate::torus::{
    heat_trace_from_spectrum, lowest_eigenvalues, SchrodingerOperator, SpectralOperator, Spectrum, TorusGrid,
};

/// Lowest eigenvalues of one sample `H^omega_M`, each residual-certified.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpectrum {
    pub m: usize,
    pub sample: usize,
    /// `mix64(master seed, sample)`; keys both the configuration and the
    /// eigensolver start block.
    pub seed: u64,
    /// Number of grid unknowns `N^d`.
    pub dim: usize,
    /// Ascending eigenvalues `lambda_1 <= ... <= lambda_K`.
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Torus volume `M^d`.
    pub volume: f64,
}

impl SampleSpectrum {
    /// `M^-d sum_k exp(-t lambda_k)` and whether the unresolved remainder is
    /// below `tol` relative to it.
    pub fn laplace(&self, t: f64, tol: f64) -> (f64, bool) {
        let trace = heat_trace_from_spectrum(&self.values, self.dim, t);
        (trace.leading / self.volume, trace.certified(tol))
    }

    /// `M^-d #{k : lambda_k <= lambda}` and whether every eigenvalue up to
    /// `lambda` was computed.
    pub fn counting(&self, lambda: f64) -> (f64, bool) {
        let count = self.values.partition_point(|&v| v <= lambda);
        let resolved = self.values.len() == self.dim || self.values.last().is_some_and(|&top| top > lambda);
        (count as f64 / self.volume, resolved)
    }
}

/// One estimator cell: mean over samples with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub m: usize,
    /// `t` for Laplace cells, `lambda` for IDS cells.
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
    /// Some sample could not certify this cell even at the eigencount cap.
    pub flagged: bool,
}

/// Spectra and both estimator tables of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub spectra: Vec<SampleSpectrum>,
    pub laplace: Vec<Cell>,
    pub ids: Vec<Cell>,
    pub config_hash: String,
    /// Seconds; the only non-reproducible field.
    pub wall_time: f64,
}

impl EnsembleResult {
    pub fn flagged_cells(&self) -> usize {
        self.laplace.iter().chain(&self.ids).filter(|c| c.flagged).count()
    }
}

/// What the eigencount has to resolve.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Needs {
    pub t_min: Option<f64>,
    pub lambda_max: Option<f64>,
}

impl Needs {
    fn of(config: &ExperimentConfig, laplace: bool, ids: bool) -> Self {
        Needs {
            t_min: if laplace { config.t_grid.first().copied() } else { None },
            lambda_max: if ids { config.lambda_grid.last().copied() } else { None },
        }
    }

    fn satisfied(&self, spectrum: &SampleSpectrum, tol: f64) -> bool {
        self.t_min.is_none_or(|t| spectrum.laplace(t, tol).1) && self.lambda_max.is_none_or(|l| spectrum.counting(l).1)
    }
}

/// Runs `f` on a pool of `threads` workers (the global pool if `None`).
pub(crate) fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Usage(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn sample_operator(config: &ExperimentConfig, m: usize, seed: u64) -> Result<SchrodingerOperator> {
    let grid = TorusGrid::new(m, config.d, config.oversampling)?;
    let kinetic = SpectralOperator::new(grid, config.phi.clone());
    if config.free_control {
        return Ok(SchrodingerOperator::free(kinetic));
    }
    let omega = sample_config(&config.law, m, config.d, seed)?;
    let potential = periodized_potential(&omega, &config.site, &grid)?;
    SchrodingerOperator::new(kinetic, potential)
}

/// Computes one sample, doubling the eigencount until `needs` is met or the
/// cap is reached.
fn one_sample(config: &ExperimentConfig, m: usize, sample: usize, needs: Needs) -> Result<SampleSpectrum> {
    let seed = mix64(config.seed, sample as u64);
    let op = sample_operator(config, m, seed)?;
    let dim = op.grid().len();
    let cap = config.k_cap.min(dim);
    let mut k = config.initial_k(dim);
    let pack = |s: Spectrum| SampleSpectrum {
        m,
        sample,
        seed,
        dim,
        values: s.values,
        residuals: s.residuals,
        volume: (m as f64).powi(config.d as i32),
    };
    let mut best = pack(lowest_eigenvalues(&op, k, config.eig_tol, seed)?);
    while k < cap && !needs.satisfied(&best, config.trace_tol) {
        k = (2 * k).min(cap);
        match lowest_eigenvalues(&op, k, config.eig_tol, seed) {
            Ok(s) => best = pack(s),
            // The affected cells get flagged.
            Err(Error::Numeric(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

pub(crate) fn ensemble_at(config: &ExperimentConfig, m: usize, needs: Needs) -> Result<Vec<SampleSpectrum>> {
    with_pool(config.threads, || {
        (0..config.samples)
            .into_par_iter()
            .map(|i| one_sample(config, m, i, needs))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Mean and standard error, summed in sample order.
fn reduce(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = kahan_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = kahan_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub(crate) fn laplace_cells(spectra: &[SampleSpectrum], m: usize, t_grid: &[f64], tol: f64) -> Vec<Cell> {
    t_grid
        .iter()
        .map(|&t| {
            let (vals, ok): (Vec<f64>, Vec<bool>) = spectra.iter().map(|s| s.laplace(t, tol)).unzip();
            let (mean, stderr) = reduce(&vals);
            Cell { m, x: t, mean, stderr, flagged: ok.contains(&false) }
        })
        .collect()
}

pub(crate) fn ids_cells(spectra: &[SampleSpectrum], m: usize, lambda_grid: &[f64]) -> Vec<Cell> {
    lambda_grid
        .iter()
        .map(|&l| {
            let (vals, ok): (Vec<f64>, Vec<bool>) = spectra.iter().map(|s| s.counting(l)).unzip();
            let (mean, stderr) = reduce(&vals);
            Cell { m, x: l, mean, stderr, flagged: ok.contains(&false) }
        })
        .collect()
}

fn run(config: &ExperimentConfig, laplace: bool, ids: bool) -> Result<EnsembleResult> {
    config.validate()?;
    if config.m_list.is_empty() {
        return Err(Error::Config("no torus sides given".into()));
    }
    let start = Instant::now();
    let needs = Needs::of(config, laplace, ids);
    let mut result = EnsembleResult {
        spectra: vec![],
        laplace: vec![],
        ids: vec![],
        config_hash: config.config_hash(),
        wall_time: 0.0,
    };
    for &m in &config.m_list {
        let spectra = ensemble_at(config, m, needs)?;
        if laplace {
            result.laplace.extend(laplace_cells(&spectra, m, &config.t_grid, config.trace_tol));
        }
        if ids {
            result.ids.extend(ids_cells(&spectra, m, &config.lambda_grid));
        }
        result.spectra.extend(spectra);
    }
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Spectra plus both tables over `M-list x t-grid` and `M-list x lambda-grid`.
pub fn run_ensemble(config: &ExperimentConfig) -> Result<EnsembleResult> {
    run(config, !config.t_grid.is_empty(), !config.lambda_grid.is_empty())
}

/// `L_M(t) = E[M^-d tr exp(-t H^omega_M)]` over `M-list x t-grid`; an upper
/// proxy for the infinite-volume Laplace transform.
pub fn estimate_laplace(config: &ExperimentConfig) -> Result<Vec<Cell>> {
    if config.t_grid.is_empty() {
        return Err(Error::Config("empty t grid".into()));
    }
    Ok(run(config, true, false)?.laplace)
}

/// `l_M(lambda) = E[M^-d #{k : lambda_k <= lambda}]` over `M-list x lambda-grid`.
pub fn estimate_ids(config: &ExperimentConfig) -> Result<Vec<Cell>> {
    if config.lambda_grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    Ok(run(config, false, true)?.ids)
}
