//! Complete Bernstein functions with low-frequency scaling metadata, the
//! subordination moment identity and free heat-kernel quadratures.
//!
//! A [`BernsteinSpec`] is a closed-form family together with the constants
//! `(alpha, c1, c2, lambda0)` of the two-sided bound
//! `c1 * lam^(alpha/2) <= phi(lam) <= c2 * lam^(alpha/2)` for `lam < lambda0`.
//! Every family comes with canonical constants; they can be overridden with
//! [`BernsteinSpec::with_scaling`] and are validated, never inferred.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_half_line, log_crossing, QuadOptions};
use crate::special::{gamma, unit_sphere_area};
use crate::textform::{num, parse_calls, Call};

/// Closed-form Bernstein function families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `b * lam` (Brownian motion run at speed `b`).
    Drift { b: f64 },
    /// `lam^(alpha/2)`.
    Stable { alpha: f64 },
    /// `sum_i lam^(alpha_i/2)`.
    Mixture { alphas: Vec<f64> },
    /// `b * lam + lam^(alpha/2)`.
    StableWithDrift { b: f64, alpha: f64 },
    /// `(lam + m^(2/theta))^(theta/2) - m`.
    Relativistic { theta: f64, m: f64 },
    /// `lam^(alpha/2) * log(1 + lam)^(beta/2)`.
    StableLog { alpha: f64, beta: f64 },
}

/// Low-frequency scaling constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
    pub lambda0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinSpec {
    family: Family,
    scaling: Scaling,
}

/// Outcome of [`BernsteinSpec::scaling_window_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingCheck {
    pub holds: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// The ratio `phi(lam) / lam^(alpha/2)` farthest outside `[c1, c2]`
    /// (or closest to an edge when the bound holds).
    pub worst_ratio: f64,
}

/// Outcome of [`BernsteinSpec::moment_bound_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentBound {
    pub holds: bool,
    pub c_tilde: f64,
    /// `moment_integral(t) * t^(2 gamma / alpha)` on the grid.
    pub scaled: Vec<f64>,
}

const RATIO_SLACK: f64 = 1e-14;

fn check_exponent(name: &str, a: f64, lo_open: f64, hi: f64, hi_closed: bool) -> Result<()> {
    let ok = a > lo_open && if hi_closed { a <= hi } else { a < hi };
    if ok && a.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {a} outside the admissible range")))
    }
}

impl Family {
    fn validate(&self) -> Result<()> {
        match self {
            Family::Drift { b } => {
                if !(*b > 0.0 && b.is_finite()) {
                    return Err(Error::Domain(format!("drift b = {b} must be positive")));
                }
            }
            Family::Stable { alpha } => check_exponent("alpha", *alpha, 0.0, 2.0, true)?,
            Family::Mixture { alphas } => {
                if alphas.is_empty() {
                    return Err(Error::Domain("mixture needs at least one exponent".into()));
                }
                for a in alphas {
                    check_exponent("alpha_i", *a, 0.0, 2.0, true)?;
                }
            }
            Family::StableWithDrift { b, alpha } => {
                if !(*b > 0.0 && b.is_finite()) {
                    return Err(Error::Domain(format!("drift b = {b} must be positive")));
                }
                check_exponent("alpha", *alpha, 0.0, 2.0, false)?;
            }
            Family::Relativistic { theta, m } => {
                check_exponent("theta", *theta, 0.0, 2.0, true)?;
                if !(*m > 0.0 && m.is_finite()) {
                    return Err(Error::Domain(format!("mass m = {m} must be positive")));
                }
            }
            Family::StableLog { alpha, beta } => {
                check_exponent("alpha", *alpha, 0.0, 2.0, false)?;
                let ok = (*beta > -alpha && *beta < 0.0) || (*beta > 0.0 && *beta < 2.0 - alpha);
                if !ok {
                    return Err(Error::Domain(format!(
                        "beta = {beta} must lie in (-alpha, 0) or (0, 2 - alpha)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluates the family at `lam >= 0`.
    fn eval(&self, lam: f64) -> f64 {
        if lam == 0.0 {
            return 0.0;
        }
        match self {
            Family::Drift { b } => b * lam,
            Family::Stable { alpha } => lam.powf(alpha / 2.0),
            Family::Mixture { alphas } => alphas.iter().map(|a| lam.powf(a / 2.0)).sum(),
            Family::StableWithDrift { b, alpha } => b * lam + lam.powf(alpha / 2.0),
            Family::Relativistic { theta, m } => {
                // m * ((1 + lam / m^(2/theta))^(theta/2) - 1), free of cancellation near 0.
                let shift = m.powf(2.0 / theta);
                m * ((theta / 2.0) * (lam / shift).ln_1p()).exp_m1()
            }
            Family::StableLog { alpha, beta } => lam.powf(alpha / 2.0) * lam.ln_1p().powf(beta / 2.0),
        }
    }

    /// Canonical scaling constants on the window `(0, 1)`.
    fn canonical_scaling(&self) -> Scaling {
        match self {
            Family::Drift { b } => Scaling { alpha: 2.0, c1: *b, c2: *b, lambda0: 1.0 },
            Family::Stable { alpha } => Scaling { alpha: *alpha, c1: 1.0, c2: 1.0, lambda0: 1.0 },
            Family::Mixture { alphas } => {
                let low = alphas.iter().cloned().fold(f64::INFINITY, f64::min);
                Scaling { alpha: low, c1: 1.0, c2: alphas.len() as f64, lambda0: 1.0 }
            }
            Family::StableWithDrift { b, alpha } => Scaling { alpha: *alpha, c1: 1.0, c2: 1.0 + b, lambda0: 1.0 },
            Family::Relativistic { theta, m } => {
                // Concave with phi(0) = 0: phi(lam)/lam decreases from phi'(0).
                let slope0 = (theta / 2.0) * m.powf(1.0 - 2.0 / theta);
                Scaling { alpha: 2.0, c1: self.eval(1.0), c2: slope0, lambda0: 1.0 }
            }
            Family::StableLog { alpha, beta } => {
                // log(1+lam)/lam lies in (log 2, 1) on (0, 1).
                let edge = std::f64::consts::LN_2.powf(beta / 2.0);
                Scaling { alpha: alpha + beta, c1: edge.min(1.0), c2: edge.max(1.0), lambda0: 1.0 }
            }
        }
    }

    fn to_call_text(&self) -> String {
        match self {
            Family::Drift { b } => format!("drift(b={})", num(*b)),
            Family::Stable { alpha } => format!("stable(alpha={})", num(*alpha)),
            Family::Mixture { alphas } => {
                let items: Vec<String> = alphas.iter().map(|a| num(*a)).collect();
                format!("mixture(alphas=[{}])", items.join(","))
            }
            Family::StableWithDrift { b, alpha } => format!("stabledrift(b={},alpha={})", num(*b), num(*alpha)),
            Family::Relativistic { theta, m } => format!("relativistic(theta={},m={})", num(*theta), num(*m)),
            Family::StableLog { alpha, beta } => format!("stablelog(alpha={},beta={})", num(*alpha), num(*beta)),
        }
    }

    fn from_call(call: &Call) -> Result<Family> {
        let family = match call.name.as_str() {
            "drift" => {
                call.expect_keys(&["b"])?;
                Family::Drift { b: call.number("b")? }
            }
            "stable" => {
                call.expect_keys(&["alpha"])?;
                Family::Stable { alpha: call.number("alpha")? }
            }
            "mixture" => {
                call.expect_keys(&["alphas"])?;
                Family::Mixture { alphas: call.list("alphas")? }
            }
            "stabledrift" => {
                call.expect_keys(&["b", "alpha"])?;
                Family::StableWithDrift { b: call.number("b")?, alpha: call.number("alpha")? }
            }
            "relativistic" => {
                call.expect_keys(&["theta", "m"])?;
                Family::Relativistic { theta: call.number("theta")?, m: call.number("m")? }
            }
            "stablelog" => {
                call.expect_keys(&["alpha", "beta"])?;
                Family::StableLog { alpha: call.number("alpha")?, beta: call.number("beta")? }
            }
            other => return Err(Error::Parse(format!("unknown Bernstein family `{other}`"))),
        };
        Ok(family)
    }
}

impl BernsteinSpec {
    /// Builds a spec with the family's canonical scaling constants.
    pub fn new(family: Family) -> Result<Self> {
        family.validate()?;
        let scaling = family.canonical_scaling();
        Ok(BernsteinSpec { family, scaling })
    }

    pub fn drift(b: f64) -> Result<Self> {
        Self::new(Family::Drift { b })
    }

    pub fn stable(alpha: f64) -> Result<Self> {
        Self::new(Family::Stable { alpha })
    }

    pub fn mixture(alphas: Vec<f64>) -> Result<Self> {
        Self::new(Family::Mixture { alphas })
    }

    pub fn stable_with_drift(b: f64, alpha: f64) -> Result<Self> {
        Self::new(Family::StableWithDrift { b, alpha })
    }

    pub fn relativistic(theta: f64, m: f64) -> Result<Self> {
        Self::new(Family::Relativistic { theta, m })
    }

    pub fn stable_log(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(Family::StableLog { alpha, beta })
    }

    /// Replaces the scaling metadata. The values are taken as declared.
    pub fn with_scaling(mut self, scaling: Scaling) -> Result<Self> {
        let Scaling { alpha, c1, c2, lambda0 } = scaling;
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::Domain(format!("scaling alpha = {alpha} outside (0, 2]")));
        }
        if !(c1 > 0.0 && c2 >= c1 && lambda0 > 0.0) {
            return Err(Error::Domain(format!(
                "scaling constants need 0 < c1 <= c2 and lambda0 > 0 (got c1 = {c1}, c2 = {c2}, lambda0 = {lambda0})"
            )));
        }
        self.scaling = scaling;
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn alpha(&self) -> f64 {
        self.scaling.alpha
    }

    pub fn c1(&self) -> f64 {
        self.scaling.c1
    }

    /// `phi(lam)` for `lam > 0`.
    pub fn phi_eval(&self, lam: f64) -> Result<f64> {
        if !(lam > 0.0) || lam.is_nan() {
            return Err(Error::Domain(format!("phi is evaluated on (0, inf), got {lam}")));
        }
        Ok(self.family.eval(lam))
    }

    /// `phi(lam)` extended by `phi(0) = 0`; `lam` must be nonnegative.
    pub(crate) fn phi_at(&self, lam: f64) -> f64 {
        debug_assert!(lam >= 0.0);
        self.family.eval(lam)
    }

    /// Checks `c1 <= phi(lam) / lam^(alpha/2) <= c2` on every grid point.
    pub fn scaling_window_check(&self, grid: &[f64]) -> Result<ScalingCheck> {
        if grid.is_empty() {
            return Err(Error::Usage("scaling window grid is empty".into()));
        }
        let Scaling { alpha, c1, c2, lambda0 } = self.scaling;
        let mut min_ratio = f64::INFINITY;
        let mut max_ratio = f64::NEG_INFINITY;
        for &lam in grid {
            if !(lam > 0.0 && lam < lambda0) {
                return Err(Error::Usage(format!("grid point {lam} outside (0, lambda0 = {lambda0})")));
            }
            let ratio = self.family.eval(lam) / lam.powf(alpha / 2.0);
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
        }
        // Round-off slack: exact power laws land a few ulps either side of c1 = c2.
        let holds = min_ratio >= c1 * (1.0 - RATIO_SLACK) && max_ratio <= c2 * (1.0 + RATIO_SLACK);
        // Distance outside (or margin inside) [c1, c2], measured in log ratio.
        let worst_ratio = if (c1 / min_ratio).ln() >= (max_ratio / c2).ln() { min_ratio } else { max_ratio };
        Ok(ScalingCheck { holds, min_ratio, max_ratio, worst_ratio })
    }

    /// Free heat kernel on the diagonal,
    /// `p_t(0) = (2 pi)^-d |S^{d-1}| int_0^inf exp(-t phi(r^2)) r^(d-1) dr`.
    pub fn heat_kernel_at_zero(&self, t: f64, d: usize) -> Result<f64> {
        if !(t > 0.0) || d == 0 {
            return Err(Error::Domain(format!("heat kernel needs t > 0 and d >= 1 (t = {t}, d = {d})")));
        }
        let scale = log_crossing(|r| t * self.phi_at(r * r), 1.0, 1.0);
        let power = (d - 1) as i32;
        let integral = integrate_half_line(
            |r| (-t * self.phi_at(r * r)).exp() * r.powi(power),
            scale,
            QuadOptions::default(),
        )
        .map_err(|e| Error::Numeric(format!("heat kernel p_{t}(0) in d = {d}: {e}")))?;
        Ok((2.0 * PI).powi(-(d as i32)) * unit_sphere_area(d) * integral.value)
    }

    /// `int u^-gamma eta_t(du)`, computed as
    /// `int_0^inf exp(-t phi(lam^(1/gamma))) dlam / Gamma(gamma + 1)`.
    pub fn moment_integral(&self, gamma_exp: f64, t: f64) -> Result<f64> {
        if !(gamma_exp > 0.0) || !(t > 0.0) {
            return Err(Error::Domain(format!("moment integral needs gamma > 0 and t > 0 (gamma = {gamma_exp}, t = {t})")));
        }
        let inv = 1.0 / gamma_exp;
        let scale = log_crossing(|lam| t * self.phi_at(lam.powf(inv)), 1.0, 1.0);
        let integral = integrate_half_line(
            |lam| (-t * self.phi_at(lam.powf(inv))).exp(),
            scale,
            QuadOptions::default(),
        )
        .map_err(|e| Error::Numeric(format!("moment integral (gamma = {gamma_exp}, t = {t}): {e}")))?;
        Ok(integral.value / gamma(gamma_exp + 1.0))
    }

    /// Fits `c_tilde = max_t moment(t) t^(2 gamma/alpha)` over `tgrid` and
    /// reports whether the scaled moments stay bounded: the bound holds when
    /// every value is finite and the scaled sequence is not still growing at
    /// the end of the grid.
    pub fn moment_bound_check(&self, gamma_exp: f64, t0: f64, tgrid: &[f64]) -> Result<MomentBound> {
        if tgrid.is_empty() {
            return Err(Error::Usage("moment bound grid is empty".into()));
        }
        if let Some(bad) = tgrid.iter().find(|&&t| t < t0) {
            return Err(Error::Usage(format!("grid point {bad} below t0 = {t0}")));
        }
        let power = 2.0 * gamma_exp / self.scaling.alpha;
        let scaled = tgrid
            .iter()
            .map(|&t| Ok(self.moment_integral(gamma_exp, t)? * t.powf(power)))
            .collect::<Result<Vec<f64>>>()?;
        let c_tilde = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let finite = scaled.iter().all(|v| v.is_finite() && *v > 0.0);
        let n = scaled.len();
        let settled = n < 2 || {
            let last = scaled[n - 1];
            let prev = scaled[n - 2];
            last < c_tilde || (last - prev).abs() <= 1e-3 * last
        };
        Ok(MomentBound { holds: finite && settled, c_tilde, scaled })
    }
}

impl fmt::Display for BernsteinSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family.to_call_text())?;
        if self.scaling != self.family.canonical_scaling() {
            let s = self.scaling;
            write!(
                f,
                "@scaling(alpha={},c1={},c2={},lambda0={})",
                num(s.alpha),
                num(s.c1),
                num(s.c2),
                num(s.lambda0)
            )?;
        }
        Ok(())
    }
}

impl FromStr for BernsteinSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let calls = parse_calls(s)?;
        let spec = BernsteinSpec::new(Family::from_call(&calls[0])?)?;
        match calls.len() {
            1 => Ok(spec),
            2 if calls[1].name == "scaling" => {
                let c = &calls[1];
                c.expect_keys(&["alpha", "c1", "c2", "lambda0"])?;
                spec.with_scaling(Scaling {
                    alpha: c.number("alpha")?,
                    c1: c.number("c1")?,
                    c2: c.number("c2")?,
                    lambda0: c.number("lambda0")?,
                })
            }
            _ => Err(Error::Parse(format!("unexpected suffix in `{s}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::log_spaced;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_values() {
        assert_eq!(BernsteinSpec::stable(1.0).unwrap().phi_eval(4.0).unwrap(), 2.0);
        let rel = BernsteinSpec::relativistic(1.0, 1.0).unwrap();
        assert_relative_eq!(rel.phi_eval(3.0).unwrap(), 1.0, max_relative = 1e-15);
        let mix = BernsteinSpec::mixture(vec![1.0, 0.5]).unwrap();
        assert_relative_eq!(mix.phi_eval(16.0).unwrap(), 6.0, max_relative = 1e-15);
        assert!(matches!(mix.phi_eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(mix.phi_eval(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn relativistic_is_accurate_near_zero() {
        let rel = BernsteinSpec::relativistic(1.0, 1.0).unwrap();
        // sqrt(1 + x) - 1 = x/2 - x^2/8 + ...
        let x = 1e-12;
        assert_relative_eq!(rel.phi_eval(x).unwrap(), x / 2.0 - x * x / 8.0, max_relative = 1e-14);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(BernsteinSpec::stable(0.0).is_err());
        assert!(BernsteinSpec::stable(2.5).is_err());
        assert!(BernsteinSpec::drift(-1.0).is_err());
        assert!(BernsteinSpec::mixture(vec![]).is_err());
        assert!(BernsteinSpec::stable_log(1.0, 1.5).is_err());
        assert!(BernsteinSpec::stable_log(1.0, -1.0).is_err());
        assert!(BernsteinSpec::relativistic(1.0, 0.0).is_err());
    }

    #[test]
    fn scaling_window_examples() {
        let grid = log_spaced(1e-8, 0.99, 100);
        let stable = BernsteinSpec::stable(1.0).unwrap();
        let check = stable.scaling_window_check(&grid).unwrap();
        assert!(check.holds);
        assert_relative_eq!(check.worst_ratio, 1.0, max_relative = 1e-15);

        let rel = BernsteinSpec::relativistic(1.0, 1.0)
            .unwrap()
            .with_scaling(Scaling { alpha: 2.0, c1: 0.25, c2: 0.5, lambda0: 1.0 })
            .unwrap();
        let check = rel.scaling_window_check(&grid).unwrap();
        assert!(check.holds);
        assert!(check.max_ratio < 0.5 && check.max_ratio > 0.4999);

        let wrong = BernsteinSpec::stable(1.0)
            .unwrap()
            .with_scaling(Scaling { alpha: 2.0, c1: 1.0, c2: 1.0, lambda0: 1.0 })
            .unwrap();
        assert!(!wrong.scaling_window_check(&grid).unwrap().holds);
        assert!(matches!(stable.scaling_window_check(&[]), Err(Error::Usage(_))));
        assert!(matches!(stable.scaling_window_check(&[2.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn canonical_scaling_holds_for_every_family() {
        let grid = log_spaced(1e-9, 0.999, 200);
        for spec in catalog() {
            let check = spec.scaling_window_check(&grid).unwrap();
            assert!(check.holds, "{spec}: {check:?}");
        }
    }

    #[test]
    fn heat_kernel_golden_values() {
        let drift = BernsteinSpec::drift(1.0).unwrap();
        assert_relative_eq!(drift.heat_kernel_at_zero(1.0, 2).unwrap(), 1.0 / (4.0 * PI), max_relative = 1e-10);
        assert_relative_eq!(drift.heat_kernel_at_zero(2.0, 1).unwrap(), (8.0 * PI).powf(-0.5), max_relative = 1e-10);
        let cauchy = BernsteinSpec::stable(1.0).unwrap();
        assert_relative_eq!(cauchy.heat_kernel_at_zero(1.0, 1).unwrap(), 1.0 / PI, max_relative = 1e-10);
        assert!(drift.heat_kernel_at_zero(0.0, 1).is_err());
    }

    #[test]
    fn moment_golden_values() {
        let drift = BernsteinSpec::drift(1.0).unwrap();
        assert_relative_eq!(drift.moment_integral(0.5, 4.0).unwrap(), 0.5, max_relative = 1e-10);
        assert_relative_eq!(drift.moment_integral(1.0, 10.0).unwrap(), 0.1, max_relative = 1e-10);
        let stable = BernsteinSpec::stable(1.0).unwrap();
        assert_relative_eq!(
            stable.moment_integral(0.5, 2.0).unwrap(),
            1.0 / (gamma(1.5) * 2.0),
            max_relative = 1e-10
        );
    }

    #[test]
    fn moment_bound_examples() {
        let grid = log_spaced(1.0, 1e4, 25);
        let stable = BernsteinSpec::stable(1.0).unwrap();
        let b = stable.moment_bound_check(0.5, 1.0, &grid).unwrap();
        assert!(b.holds);
        assert_relative_eq!(b.c_tilde, 1.0 / gamma(1.5), max_relative = 1e-8);

        let drift = BernsteinSpec::drift(1.0).unwrap();
        let b = drift.moment_bound_check(1.0, 1.0, &grid).unwrap();
        assert!(b.holds);
        assert_relative_eq!(b.c_tilde, 1.0, max_relative = 1e-8);

        let half = BernsteinSpec::stable(0.5).unwrap();
        let b = half.moment_bound_check(0.25, 1.0, &grid).unwrap();
        assert!(b.holds);
        // phi(lam^4) = lam, so every scaled moment equals 1/Gamma(5/4).
        assert_relative_eq!(b.c_tilde, 1.0 / gamma(1.25), max_relative = 1e-8);

        assert!(matches!(drift.moment_bound_check(1.0, 2.0, &grid), Err(Error::Usage(_))));
    }

    #[test]
    fn text_round_trip() {
        for text in [
            "stable(alpha=1.0)",
            "relativistic(theta=1.0,m=1.0)",
            "drift(b=1.0)",
            "mixture(alphas=[1.0,0.5])",
            "stablelog(alpha=1.0,beta=0.5)",
            "stabledrift(b=2.0,alpha=0.5)",
            "stable(alpha=1.0)@scaling(alpha=2.0,c1=1.0,c2=1.0,lambda0=1.0)",
        ] {
            let spec: BernsteinSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        assert!("stable(beta=1.0)".parse::<BernsteinSpec>().is_err());
        assert!("cauchy(alpha=1.0)".parse::<BernsteinSpec>().is_err());
    }

    pub(crate) fn catalog() -> Vec<BernsteinSpec> {
        vec![
            BernsteinSpec::drift(1.0).unwrap(),
            BernsteinSpec::drift(0.3).unwrap(),
            BernsteinSpec::stable(1.0).unwrap(),
            BernsteinSpec::stable(0.5).unwrap(),
            BernsteinSpec::stable(2.0).unwrap(),
            BernsteinSpec::mixture(vec![1.0, 0.5]).unwrap(),
            BernsteinSpec::stable_with_drift(1.0, 1.0).unwrap(),
            BernsteinSpec::relativistic(1.0, 1.0).unwrap(),
            BernsteinSpec::relativistic(0.5, 2.0).unwrap(),
            BernsteinSpec::stable_log(1.0, 0.5).unwrap(),
            BernsteinSpec::stable_log(1.0, -0.5).unwrap(),
        ]
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn phi_is_nondecreasing(idx in 0usize..11, a in -8.0f64..8.0, b in -8.0f64..8.0) {
                let spec = &catalog()[idx];
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let (l1, l2) = (10f64.powf(lo), 10f64.powf(hi));
                prop_assert!(spec.phi_eval(l1).unwrap() <= spec.phi_eval(l2).unwrap());
            }

            #[test]
            fn drift_subordination_identity(gi in 0usize..4, t in 0.1f64..100.0) {
                let g = [0.25, 0.5, 1.0, 2.0][gi];
                let drift = BernsteinSpec::drift(1.0).unwrap();
                let m = drift.moment_integral(g, t).unwrap();
                prop_assert!((m / t.powf(-g) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn phi_outgrows_logarithm() {
        let grid = log_spaced(1e3, 1e9, 13);
        for spec in catalog() {
            let ratios: Vec<f64> = grid.iter().map(|&l| spec.phi_eval(l).unwrap() / l.ln()).collect();
            assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{spec}: {ratios:?}");
        }
    }

    #[test]
    fn kernel_positive_decreasing_and_diagonally_bounded() {
        let ts = log_spaced(0.5, 5e3, 12);
        for spec in catalog() {
            for d in 1..=3 {
                let p: Vec<f64> = ts.iter().map(|&t| spec.heat_kernel_at_zero(t, d).unwrap()).collect();
                assert!(p.iter().all(|v| *v > 0.0));
                assert!(p.windows(2).all(|w| w[1] <= w[0]), "{spec} d={d}");
                let scaled: Vec<f64> = p.iter().zip(&ts).map(|(v, t)| v * t.powf(d as f64 / spec.alpha())).collect();
                // Bounded: the scaled kernel has levelled off by the end of the window.
                let n = scaled.len();
                let head = scaled[..n - 1].iter().cloned().fold(0.0, f64::max);
                assert!(scaled[n - 1] <= 1.05 * head, "{spec} d={d}: {scaled:?}");
            }
        }
    }
}
