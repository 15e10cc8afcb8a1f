//! `M(t)`, scaling studies, loglog regression and the numeric Tauberian check.

use std::collections::BTreeMap;
use std::time::Instant;

use super::ensemble::{ensemble_at, ids_cells, laplace_cells, Needs};
use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};
use crate::rates::RateBundle;
use crate::special::{kahan_sum, linear_fit, log_spaced};

/// Torus sides for the upper (`floor(x_t) + 1`) and lower (`floor(x_t)`)
/// experiments at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MChoice {
    pub x_t: f64,
    pub upper: usize,
    pub lower: usize,
}

pub fn choose_m_of_t(bundle: &RateBundle, t: f64) -> Result<MChoice> {
    let x_t = bundle.x_t(t)?;
    let mut floor = x_t.floor();
    // x_t is only accurate to an ulp; settle integers through j itself.
    if bundle.j(floor + 1.0)? <= t * (1.0 + 1e-12) {
        floor += 1.0;
    }
    if floor >= usize::MAX as f64 {
        return Err(Error::Numeric(format!("x_t = {x_t} does not fit a torus side")));
    }
    Ok(MChoice { x_t, upper: floor as usize + 1, lower: floor as usize })
}

/// Least-squares slope of `log|log l|` against `log lambda` with its
/// standard error.
pub fn fit_lifshitz_exponent(series: &[(f64, f64)]) -> Result<(f64, f64)> {
    if series.len() < 5 {
        return Err(Error::Usage(format!("exponent fit needs at least 5 points, got {}", series.len())));
    }
    let mut xs = Vec::with_capacity(series.len());
    let mut ys = Vec::with_capacity(series.len());
    for &(lambda, ell) in series {
        if !(lambda > 0.0 && ell > 0.0 && ell < 1.0) {
            return Err(Error::Usage(format!("exponent fit needs lambda > 0 and 0 < l < 1, got ({lambda}, {ell})")));
        }
        xs.push(lambda.ln());
        ys.push((-ell.ln()).ln());
    }
    Ok(linear_fit(&xs, &ys))
}

/// Synthetic distribution function with
/// `log rho(x) = -scale x^(-d/alpha) g(1/x)`, `g` taken from the bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticMeasure {
    pub scale: f64,
}

impl SyntheticMeasure {
    pub fn log_rho(&self, bundle: &RateBundle, x: f64) -> f64 {
        match bundle.g_eval(1.0 / x) {
            Ok(g) => -self.scale * x.powf(-bundle.d_over_alpha()) * g,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// `log L(t)` with `L(t) = int e^(-tx) rho(dx) = t int e^(-tx) rho(x) dx`,
    /// integrated around the maximiser of the exponent so that values like
    /// `e^-2000` stay representable.
    pub fn log_laplace(&self, bundle: &RateBundle, t: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("Laplace transform needs t > 0, got {t}")));
        }
        let exponent = |x: f64| -t * x + self.log_rho(bundle, x);
        let hi = 1e4 * t.recip().max(1.0);
        let xs = log_spaced(1e-14 * hi, hi, 2001);
        let phis: Vec<f64> = xs.iter().map(|&x| exponent(x)).collect();
        let peak = phis.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::Numeric(format!("synthetic Laplace exponent has no finite maximum at t = {t}")));
        }
        // Everything more than e^-60 below the peak is dropped.
        let inside: Vec<usize> = (0..xs.len()).filter(|&i| phis[i] >= peak - 60.0).collect();
        let first = inside[0].saturating_sub(1);
        let last = (inside[inside.len() - 1] + 1).min(xs.len() - 1);
        let a0 = if first == 0 { 0.0 } else { xs[first] };
        let integrand = |x: f64| if x > 0.0 { (exponent(x) - peak).exp() } else { 0.0 };
        let opts = QuadOptions { abs_tol: 1e-300, rel_tol: 1e-12, max_panels: 4000 };
        let mut pieces = Vec::with_capacity(last - first);
        let mut a = a0;
        for &b in &xs[first + 1..=last] {
            pieces.push(integrate(integrand, a, b, opts)?.value);
            a = b;
        }
        let mass = kahan_sum(pieces);
        if !(mass > 0.0) {
            return Err(Error::Numeric(format!("synthetic Laplace integral vanished at t = {t}")));
        }
        Ok(t.ln() + peak + mass.ln())
    }
}

/// Measured rate ratio at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauberRow {
    pub t: f64,
    pub log_l: f64,
    pub rate: f64,
    /// `log L(t) / (t^gamma h^(1-gamma))`.
    pub ratio: f64,
}

/// One desk check of a Tauberian conclusion at a small `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauberCheck {
    /// `true` for the lower conclusion (`B1 > A1`), `false` for the upper.
    pub lower: bool,
    pub a: f64,
    pub b: f64,
    pub x: f64,
    /// `normalizer_B(x) log rho(x)`.
    pub value: f64,
    /// `-A1 B1^(d/alpha)` or `-(A2 - B2) B2^(d/alpha)`.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauberReport {
    pub rows: Vec<TauberRow>,
    /// `max_t (-ratio)` and `min_t (-ratio)` over the grid.
    pub a1: f64,
    pub a2: f64,
    pub checks: Vec<TauberCheck>,
    pub all_hold: bool,
}

const LOWER_FACTORS: [f64; 4] = [1.05, 1.25, 1.5, 2.0];
const UPPER_FACTORS: [f64; 4] = [0.25, 0.5, 0.75, 0.95];

/// Computes `L(t)` for a synthetic measure by quadrature, measures the rate
/// constants on `t_grid`, and checks both Tauberian conclusions on `x_grid`
/// for a sweep of `B` values.
pub fn verify_tauberian_numeric(
    bundle: &RateBundle,
    measure: SyntheticMeasure,
    t_grid: &[f64],
    x_grid: &[f64],
) -> Result<TauberReport> {
    if t_grid.is_empty() || x_grid.is_empty() {
        return Err(Error::Usage("Tauberian check needs nonempty t and x grids".into()));
    }
    if !(measure.scale > 0.0) {
        return Err(Error::Usage(format!("synthetic measure scale must be positive, got {}", measure.scale)));
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let log_l = measure.log_laplace(bundle, t)?;
        let rate = bundle.rate_denominator(t)?;
        rows.push(TauberRow { t, log_l, rate, ratio: log_l / rate });
    }
    let a1 = rows.iter().map(|r| -r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let a2 = rows.iter().map(|r| -r.ratio).fold(f64::INFINITY, f64::min);
    if !(a2 > 0.0) {
        return Err(Error::Numeric(format!("measured rate constant is not positive (min = {a2})")));
    }
    let mut checks = vec![];
    let slack = |bound: f64| 1e-9 * bound.abs();
    for f in LOWER_FACTORS {
        let bound = bundle.tauber_lower(a1, a1 * f)?;
        for &x in x_grid {
            let value = bound.normalizer(x)? * measure.log_rho(bundle, x);
            let holds = value >= bound.constant - slack(bound.constant);
            checks.push(TauberCheck { lower: true, a: a1, b: bound.b, x, value, bound: bound.constant, holds });
        }
    }
    for f in UPPER_FACTORS {
        let bound = bundle.tauber_upper(a2, a2 * f)?;
        for &x in x_grid {
            let value = bound.normalizer(x)? * measure.log_rho(bundle, x);
            let holds = value <= bound.constant + slack(bound.constant);
            checks.push(TauberCheck { lower: false, a: a2, b: bound.b, x, value, bound: bound.constant, holds });
        }
    }
    let all_hold = checks.iter().all(|c| c.holds);
    Ok(TauberReport { rows, a1, a2, checks, all_hold })
}

/// Per-`t` row of a scaling study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub t: f64,
    pub m: usize,
    pub l_hat: f64,
    pub stderr: f64,
    pub rate: f64,
    /// `log L(t) / (t^gamma h^(1-gamma))`.
    pub ratio: f64,
    /// `log L(t) / t^(1/2)`.
    pub ratio_sqrt: f64,
    pub flagged: bool,
}

/// Per-`lambda` row of a scaling study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRow {
    pub lambda: f64,
    pub m: usize,
    pub ell_hat: f64,
    pub stderr: f64,
    /// `lambda^(d/alpha) / g(1/lambda) * log l(lambda)`.
    pub normalized: f64,
    pub flagged: bool,
}

/// Spread of a ratio column over the upper half of the `t` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub min: f64,
    pub max: f64,
    /// `max |r| / min |r|`; infinite unless every ratio is negative.
    pub factor: f64,
    /// Slope of the ratio against `log t` with its standard error.
    pub slope: f64,
    pub slope_stderr: f64,
}

impl Band {
    fn of(rows: &[StudyRow], pick: impl Fn(&StudyRow) -> f64) -> Self {
        let upper = &rows[rows.len() / 2..];
        let vals: Vec<f64> = upper.iter().map(&pick).collect();
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let factor = if max < 0.0 { min / max } else { f64::INFINITY };
        let (slope, slope_stderr) = if upper.len() >= 2 {
            let lt: Vec<f64> = upper.iter().map(|r| r.t.ln()).collect();
            linear_fit(&lt, &vals)
        } else {
            (f64::NAN, f64::NAN)
        };
        Band { min, max, factor, slope, slope_stderr }
    }

    /// Negative throughout and within `factor` of itself.
    pub fn stable(&self, factor: f64) -> bool {
        self.max < 0.0 && self.factor <= factor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub bundle: RateBundle,
    pub rows_t: Vec<StudyRow>,
    pub rows_lambda: Vec<LambdaRow>,
    pub band: Band,
    pub band_sqrt: Band,
    /// Loglog slope over the unflagged `lambda` rows with `0 < l < 1`, if
    /// there are at least five, with the window used.
    pub exponent_fit: Option<(f64, f64)>,
    pub fit_window: Option<(f64, f64)>,
    pub config_hash: String,
    pub wall_time: f64,
}

impl StudyReport {
    pub fn flagged_cells(&self) -> usize {
        self.rows_t.iter().filter(|r| r.flagged).count() + self.rows_lambda.iter().filter(|r| r.flagged).count()
    }
}

/// Band factor under which a ratio column counts as stabilised.
pub const STABLE_FACTOR: f64 = 3.0;

/// Runs the ensemble at `M(t) = floor(x_t) + 1` for each `t` of the grid, and
/// the `lambda` grid at the largest of those sides.
pub fn scaling_study(config: &ExperimentConfig, bundle: &RateBundle) -> Result<StudyReport> {
    config.validate()?;
    if config.t_grid.is_empty() {
        return Err(Error::Config("scaling study needs a t grid".into()));
    }
    if bundle.d() != config.d {
        return Err(Error::Config(format!("bundle dimension {} differs from config dimension {}", bundle.d(), config.d)));
    }
    let start = Instant::now();
    let mut by_m: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &t in &config.t_grid {
        by_m.entry(choose_m_of_t(bundle, t)?.upper).or_default().push(t);
    }
    let m_lambda = *by_m.keys().next_back().expect("nonempty grid");
    let lambda_max = config.lambda_grid.last().copied();
    let mut laplace = vec![];
    let mut ids = vec![];
    for (&m, ts) in &by_m {
        let needs = Needs { t_min: Some(ts[0]), lambda_max: if m == m_lambda { lambda_max } else { None } };
        let spectra = ensemble_at(config, m, needs)?;
        laplace.extend(laplace_cells(&spectra, m, ts, config.trace_tol));
        if m == m_lambda {
            ids = ids_cells(&spectra, m, &config.lambda_grid);
        }
    }
    laplace.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut rows_t = Vec::with_capacity(laplace.len());
    for c in laplace {
        let rate = bundle.rate_denominator(c.x)?;
        let log_l = c.mean.ln();
        rows_t.push(StudyRow {
            t: c.x,
            m: c.m,
            l_hat: c.mean,
            stderr: c.stderr,
            rate,
            ratio: log_l / rate,
            ratio_sqrt: log_l / c.x.sqrt(),
            flagged: c.flagged,
        });
    }
    let mut rows_lambda = Vec::with_capacity(ids.len());
    for c in ids {
        let normalizer = match bundle.g_eval(1.0 / c.x) {
            Ok(g) => c.x.powf(bundle.d_over_alpha()) / g,
            Err(_) => f64::NAN,
        };
        rows_lambda.push(LambdaRow {
            lambda: c.x,
            m: c.m,
            ell_hat: c.mean,
            stderr: c.stderr,
            normalized: normalizer * c.mean.ln(),
            flagged: c.flagged,
        });
    }
    let series: Vec<(f64, f64)> = rows_lambda
        .iter()
        .filter(|r| !r.flagged && r.ell_hat > 0.0 && r.ell_hat < 1.0)
        .map(|r| (r.lambda, r.ell_hat))
        .collect();
    let (exponent_fit, fit_window) = if series.len() >= 5 {
        (Some(fit_lifshitz_exponent(&series)?), Some((series[0].0, series[series.len() - 1].0)))
    } else {
        (None, None)
    };
    Ok(StudyReport {
        bundle: *bundle,
        band: Band::of(&rows_t, |r| r.ratio),
        band_sqrt: Band::of(&rows_t, |r| r.ratio_sqrt),
        rows_t,
        rows_lambda,
        exponent_fit,
        fit_window,
        config_hash: config.config_hash(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}
