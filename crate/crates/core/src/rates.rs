//! Rate-function algebra: `g`, `j`, `x_t = j^-1(t)`, `h(t) = g(x_t^alpha)`,
//! the Laplace-transform rate `t^gamma h^(1-gamma)`, Tauberian constants and
//! loglog exponents.

use std::fmt;
use std::str::FromStr;

use crate::alloy::LatticeLaw;
use crate::error::{Error, Result};
use crate::textform::{num, parse_call};

const MAX_DOUBLINGS: usize = 1000;

/// Dimension, kinetic order, structural constant and lattice law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBundle {
    d: usize,
    alpha: f64,
    d0: f64,
    law: LatticeLaw,
}

impl RateBundle {
    pub fn new(d: usize, alpha: f64, d0: f64, law: LatticeLaw) -> Result<Self> {
        if d == 0 {
            return Err(Error::Usage("dimension must be positive".into()));
        }
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::Usage(format!("kinetic order alpha must lie in (0, 2], got {alpha}")));
        }
        if !(d0 > 0.0 && d0.is_finite()) {
            return Err(Error::Usage(format!("D0 must be positive, got {d0}")));
        }
        Ok(RateBundle { d, alpha, d0, law })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn law(&self) -> &LatticeLaw {
        &self.law
    }

    /// `gamma = d / (d + alpha)`.
    pub fn gamma(&self) -> f64 {
        self.d as f64 / (self.d as f64 + self.alpha)
    }

    /// `d / alpha`.
    pub fn d_over_alpha(&self) -> f64 {
        self.d as f64 / self.alpha
    }

    /// `x0 = (D0 / kappa0)^(1/alpha)`.
    pub fn x0(&self) -> f64 {
        (self.d0 / self.law.kappa0()).powf(1.0 / self.alpha)
    }

    /// `t0 = j(x0)`.
    pub fn t0(&self) -> f64 {
        self.j_raw(self.x0())
    }

    fn g_raw(&self, x: f64) -> f64 {
        self.law.neg_log_cdf(self.d0 / x).max(0.0)
    }

    fn j_raw(&self, x: f64) -> f64 {
        x.powf(self.d as f64 + self.alpha) * self.g_raw(x.powf(self.alpha))
    }

    /// `g(x) = -log F_q(D0 / x)`.
    pub fn g_eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("g needs x > 0, got {x}")));
        }
        let g = self.g_raw(x);
        if !g.is_finite() {
            return Err(Error::Domain(format!(
                "F_q(D0/x) = 0 at x = {x}: below the support of {}",
                self.law
            )));
        }
        Ok(g)
    }

    /// `j(x) = x^(d+alpha) g(x^alpha)`.
    pub fn j(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("j needs x > 0, got {x}")));
        }
        let v = x.powf(self.d as f64 + self.alpha) * self.g_eval(x.powf(self.alpha))?;
        Ok(v)
    }

    fn check_t(&self, t: f64) -> Result<()> {
        let t0 = self.t0();
        if !(t >= t0 && t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("t = {t} lies below t0 = {t0}")));
        }
        Ok(())
    }

    /// Asymptotic inverse of `j` for the double-exponential law.
    fn double_exp_seed(&self, t: f64) -> Option<f64> {
        if !matches!(self.law, LatticeLaw::DoubleExp) || t < 10.0 {
            return None;
        }
        let p = (self.d as f64 + self.alpha) / self.alpha;
        let lt = (self.d0 * t.ln()).powf(p);
        let k = (self.d0 * (t / lt + 1.0).ln()).powf(1.0 / self.alpha);
        (k.is_finite() && k > self.x0()).then_some(k)
    }

    /// `x_t = j^-1(t)` by bracketed bisection, polished to machine precision.
    pub fn x_t(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        let x0 = self.x0();
        let (mut lo, mut hi) = match self.double_exp_seed(t) {
            Some(k) => (x0.max(0.5 * k), 2.0 * k),
            None => (x0, x0.max(1.0)),
        };
        if self.j_raw(lo) > t {
            lo = x0;
        }
        let mut doublings = 0;
        while self.j_raw(hi) < t {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::Numeric(format!("no bracket for x_t at t = {t} after {MAX_DOUBLINGS} doublings")));
            }
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.j_raw(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Pick the end point whose image is closer.
        let (elo, ehi) = ((self.j_raw(lo) - t).abs(), (self.j_raw(hi) - t).abs());
        Ok(if elo < ehi { lo } else { hi })
    }

    /// `h(t) = g(x_t^alpha)`.
    pub fn h_eval(&self, t: f64) -> Result<f64> {
        let x = self.x_t(t)?;
        self.g_eval(x.powf(self.alpha))
    }

    /// `t^gamma h(t)^(1-gamma)`.
    pub fn rate_denominator(&self, t: f64) -> Result<f64> {
        let g = self.gamma();
        Ok(t.powf(g) * self.h_eval(t)?.powf(1.0 - g))
    }

    /// `t / x_t^alpha`, equal to [`Self::rate_denominator`] by the defining relation.
    pub fn rate_identity(&self, t: f64) -> Result<f64> {
        Ok(t / self.x_t(t)?.powf(self.alpha))
    }

    /// Lower Tauberian conclusion for `B1 > A1`.
    pub fn tauber_lower(&self, a1: f64, b1: f64) -> Result<TauberBound> {
        if !(a1 > 0.0 && b1 > a1) {
            return Err(Error::Precondition(format!("lower Tauberian bound needs 0 < A1 < B1, got A1 = {a1}, B1 = {b1}")));
        }
        Ok(TauberBound { constant: -a1 * b1.powf(self.d_over_alpha()), b: b1, bundle: *self })
    }

    /// Upper Tauberian conclusion for `0 < B2 < A2`.
    pub fn tauber_upper(&self, a2: f64, b2: f64) -> Result<TauberBound> {
        if !(b2 > 0.0 && b2 < a2) {
            return Err(Error::Precondition(format!("upper Tauberian bound needs 0 < B2 < A2, got A2 = {a2}, B2 = {b2}")));
        }
        Ok(TauberBound { constant: -(a2 - b2) * b2.powf(self.d_over_alpha()), b: b2, bundle: *self })
    }

    /// The substitution `x = B t^(gamma-1) h^(1-gamma)` behind the Tauberian
    /// argument, returning `(x, lhs, rhs)` with
    /// `lhs = t^gamma h^(1-gamma)` and `rhs = B^(d/alpha) x^(-d/alpha) g(B/x)`.
    pub fn tauber_substitution(&self, t: f64, b: f64) -> Result<(f64, f64, f64)> {
        if !(b > 0.0) {
            return Err(Error::Usage(format!("B must be positive, got {b}")));
        }
        let g = self.gamma();
        let h = self.h_eval(t)?;
        let x = b * t.powf(g - 1.0) * h.powf(1.0 - g);
        let lhs = t.powf(g) * h.powf(1.0 - g);
        let da = self.d_over_alpha();
        let rhs = (b / x).powf(da) * self.g_eval(b / x)?;
        Ok((x, lhs, rhs))
    }
}

impl fmt::Display for RateBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rates(d={},alpha={},D0={},law={})", self.d, num(self.alpha), num(self.d0), self.law)
    }
}

impl FromStr for RateBundle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let call = parse_call(s)?;
        if call.name != "rates" {
            return Err(Error::Parse(format!("expected `rates(...)`, found `{}`", call.name)));
        }
        call.expect_keys(&["d", "alpha", "D0", "law"])?;
        let d = call.number("d")?;
        if d.fract() != 0.0 || d < 1.0 {
            return Err(Error::Parse(format!("dimension must be a positive integer, got {d}")));
        }
        let law = LatticeLaw::from_call(call.call("law")?)?;
        RateBundle::new(d as usize, call.number("alpha")?, call.number("D0")?, law)
    }
}

/// `liminf/limsup_{x -> 0} normalizer(x) log rho(x)` compared with `constant`,
/// where `normalizer(x) = x^(d/alpha) / g(B/x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauberBound {
    pub constant: f64,
    pub b: f64,
    bundle: RateBundle,
}

impl TauberBound {
    pub fn normalizer(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("normaliser needs x > 0, got {x}")));
        }
        Ok(x.powf(self.bundle.d_over_alpha()) / self.bundle.g_eval(self.b / x)?)
    }
}

/// Growth exponent `a = lim log g(x) / log x`, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthExponent {
    Finite(f64),
    Infinite,
}

impl GrowthExponent {
    /// Exponent of each lattice-law family.
    pub fn of_law(law: &LatticeLaw) -> Self {
        match *law {
            LatticeLaw::Atom { .. } | LatticeLaw::Power { .. } => GrowthExponent::Finite(0.0),
            LatticeLaw::Exponential { gamma } => GrowthExponent::Finite(gamma),
            LatticeLaw::DoubleExp => GrowthExponent::Infinite,
        }
    }
}

/// `(b, c)` with `b = 1 / (d + (a+1) alpha)` and `c = 1 - (d + alpha) b`.
pub fn loglog_limits(a: GrowthExponent, d: usize, alpha: f64) -> Result<(f64, f64)> {
    if d == 0 || !(alpha > 0.0) {
        return Err(Error::Usage(format!("loglog limits need d >= 1 and alpha > 0 (d = {d}, alpha = {alpha})")));
    }
    match a {
        GrowthExponent::Infinite => Ok((0.0, 1.0)),
        GrowthExponent::Finite(a) if a >= 0.0 => {
            let b = 1.0 / (d as f64 + (a + 1.0) * alpha);
            Ok((b, 1.0 - (d as f64 + alpha) * b))
        }
        GrowthExponent::Finite(a) => Err(Error::Usage(format!("growth exponent must be nonnegative, got {a}"))),
    }
}
