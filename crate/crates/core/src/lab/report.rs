//! CSV tables (`%.17g` floats) and the TOML run-metadata document.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::study::{StudyReport, TauberReport};
use super::{EnsembleResult, ExperimentConfig};
use crate::error::{Error, Result};

/// C's `%.17g`: seventeen significant digits, trailing zeros removed,
/// exponent form outside `[1e-4, 1e17)`.
pub fn format_g17(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{v:.*}", (16 - exp) as usize)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

struct Table {
    text: String,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { text: header.join(",") + "\n" }
    }

    fn row(&mut self, fields: &[Field]) {
        let cells: Vec<String> = fields
            .iter()
            .map(|f| match f {
                Field::F(v) => format_g17(*v),
                Field::U(v) => v.to_string(),
                Field::B(v) => u8::from(*v).to_string(),
            })
            .collect();
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    fn save(&self, dir: &Path, name: &str, written: &mut Vec<PathBuf>) -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, &self.text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
        Ok(())
    }
}

enum Field {
    F(f64),
    U(u64),
    B(bool),
}
use Field::{B, F, U};

/// Run metadata; the only output that may differ between replays.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub command: String,
    pub estimator: String,
    pub crate_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub sample_seed_rule: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub wall_time_seconds: f64,
    pub flagged_cells: usize,
    pub config: toml::Table,
}

impl Metadata {
    pub fn new(command: &str, config: &ExperimentConfig, wall_time: f64, flagged_cells: usize) -> Self {
        Metadata {
            command: command.into(),
            estimator: "torus-proxy: periodised heat trace, an upper-bound object for L(t)".into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config.config_hash(),
            master_seed: config.seed,
            sample_seed_rule: "seed_i = splitmix64(master ^ splitmix64(i))".into(),
            threads: config.threads,
            wall_time_seconds: wall_time,
            flagged_cells,
            config: toml::from_str(&config.to_toml_string()).expect("canonical config is TOML"),
        }
    }

    fn save(&self, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Io(format!("metadata: {e}")))?;
        let path = dir.join("metadata.toml");
        fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
        Ok(())
    }
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

/// Writes `spectra.csv`, `laplace.csv`, `ids.csv` (when nonempty) and
/// `metadata.toml` into `dir`.
pub fn write_ensemble(result: &EnsembleResult, config: &ExperimentConfig, command: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = vec![];
    let mut spectra = Table::new(&["M", "sample", "seed", "k", "lambda", "residual"]);
    for s in &result.spectra {
        for (k, (l, r)) in s.values.iter().zip(&s.residuals).enumerate() {
            spectra.row(&[U(s.m as u64), U(s.sample as u64), U(s.seed), U(k as u64 + 1), F(*l), F(*r)]);
        }
    }
    spectra.save(dir, "spectra.csv", &mut written)?;
    if !result.laplace.is_empty() {
        let mut t = Table::new(&["M", "t", "L_hat_torus_proxy", "stderr", "flagged"]);
        for c in &result.laplace {
            t.row(&[U(c.m as u64), F(c.x), F(c.mean), F(c.stderr), B(c.flagged)]);
        }
        t.save(dir, "laplace.csv", &mut written)?;
    }
    if !result.ids.is_empty() {
        let mut t = Table::new(&["M", "lambda", "ell_hat_torus_proxy", "stderr", "flagged"]);
        for c in &result.ids {
            t.row(&[U(c.m as u64), F(c.x), F(c.mean), F(c.stderr), B(c.flagged)]);
        }
        t.save(dir, "ids.csv", &mut written)?;
    }
    Metadata::new(command, config, result.wall_time, result.flagged_cells()).save(dir, &mut written)?;
    Ok(written)
}

/// Writes `study_t.csv`, `study_lambda.csv`, `study_summary.csv` and
/// `metadata.toml` into `dir`.
pub fn write_study(report: &StudyReport, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = vec![];
    let mut t = Table::new(&["t", "M", "L_hat_torus_proxy", "stderr", "rate_denominator", "ratio", "ratio_sqrt_t", "flagged"]);
    for r in &report.rows_t {
        t.row(&[F(r.t), U(r.m as u64), F(r.l_hat), F(r.stderr), F(r.rate), F(r.ratio), F(r.ratio_sqrt), B(r.flagged)]);
    }
    t.save(dir, "study_t.csv", &mut written)?;
    let mut l = Table::new(&["lambda", "M", "ell_hat_torus_proxy", "stderr", "normalized_log_ell", "flagged"]);
    for r in &report.rows_lambda {
        l.row(&[F(r.lambda), U(r.m as u64), F(r.ell_hat), F(r.stderr), F(r.normalized), B(r.flagged)]);
    }
    l.save(dir, "study_lambda.csv", &mut written)?;
    let mut s = Table::new(&["quantity", "value"]);
    let mut kv = |k: &str, v: f64| {
        let _ = writeln!(s.text, "{k},{}", format_g17(v));
    };
    kv("gamma", report.bundle.gamma());
    kv("D0", report.bundle.d0());
    for (name, band) in [("ratio", &report.band), ("ratio_sqrt_t", &report.band_sqrt)] {
        kv(&format!("{name}_upper_half_min"), band.min);
        kv(&format!("{name}_upper_half_max"), band.max);
        kv(&format!("{name}_band_factor"), band.factor);
        kv(&format!("{name}_slope_vs_log_t"), band.slope);
        kv(&format!("{name}_slope_stderr"), band.slope_stderr);
    }
    if let (Some((slope, err)), Some((lo, hi))) = (report.exponent_fit, report.fit_window) {
        kv("loglog_slope", slope);
        kv("loglog_slope_stderr", err);
        kv("fit_lambda_min", lo);
        kv("fit_lambda_max", hi);
    }
    s.save(dir, "study_summary.csv", &mut written)?;
    Metadata::new("study", config, report.wall_time, report.flagged_cells()).save(dir, &mut written)?;
    Ok(written)
}

/// Writes `tauber_t.csv` and `tauber_checks.csv` into `dir`.
pub fn write_tauber(report: &TauberReport, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = vec![];
    let mut t = Table::new(&["t", "log_L", "rate_denominator", "ratio"]);
    for r in &report.rows {
        t.row(&[F(r.t), F(r.log_l), F(r.rate), F(r.ratio)]);
    }
    t.save(dir, "tauber_t.csv", &mut written)?;
    let mut c = Table::new(&["side", "A", "B", "x", "normalized_log_rho", "bound", "holds"]);
    for k in &report.checks {
        let side = if k.lower { "lower" } else { "upper" };
        let _ = writeln!(
            c.text,
            "{side},{},{},{},{},{},{}",
            format_g17(k.a),
            format_g17(k.b),
            format_g17(k.x),
            format_g17(k.value),
            format_g17(k.bound),
            u8::from(k.holds)
        );
    }
    c.save(dir, "tauber_checks.csv", &mut written)?;
    Ok(written)
}
