//! Alloy-type random potentials: single-site profiles, lattice laws,
//! seeded configurations, the periodised potential on a torus grid, and the
//! structural constant `D0` with the truncation it controls.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};
use crate::special::unit_sphere_area;
use crate::textform::{num, parse_call};
use crate::torus::{GridField, TorusGrid};

/// Second Laplacian eigenvalue on the unit torus, `|2 pi e_1|^2`.
pub const MU2_UNIT: f64 = 4.0 * PI * PI;

/// Sub-cell samples per axis used to average singular profiles over a grid cell.
const SUBCELL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `W = 1` on `[-h, h)^d`.
    Box { half_width: f64 },
    /// `W = H prod_j cos^2(pi x_j / 2r)` on `[-r, r]^d`.
    Bump { half_width: f64, height: f64 },
    /// `W = |x|^-beta` on the ball of radius `R`.
    TruncatedPower { beta: f64, radius: f64 },
}

/// Single-site profile `W >= 0` supported in `[-M0, M0]^d`, with closed-form norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleSite {
    profile: Profile,
    d: usize,
    m0: usize,
    norm1: f64,
    norm2sq: f64,
}

fn support_radius(r: f64) -> usize {
    (r.ceil() as usize).max(1)
}

fn check_dim(d: usize) -> Result<()> {
    if (1..=3).contains(&d) {
        Ok(())
    } else {
        Err(Error::Usage(format!("dimension d = {d} must be 1, 2 or 3")))
    }
}

impl SingleSite {
    pub fn box_indicator(d: usize, half_width: f64) -> Result<Self> {
        check_dim(d)?;
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Usage(format!("box half-width must be positive, got {half_width}")));
        }
        let vol = (2.0 * half_width).powi(d as i32);
        Ok(SingleSite { profile: Profile::Box { half_width }, d, m0: support_radius(half_width), norm1: vol, norm2sq: vol })
    }

    pub fn bump(d: usize, half_width: f64, height: f64) -> Result<Self> {
        check_dim(d)?;
        if !(half_width > 0.0 && height > 0.0 && half_width.is_finite() && height.is_finite()) {
            return Err(Error::Usage(format!("bump needs positive half-width and height, got {half_width}, {height}")));
        }
        Ok(SingleSite {
            profile: Profile::Bump { half_width, height },
            d,
            m0: support_radius(half_width),
            norm1: height * half_width.powi(d as i32),
            norm2sq: height * height * (0.75 * half_width).powi(d as i32),
        })
    }

    /// `|x|^-beta` on a ball; admitted only for `beta < min(alpha, d/2)`
    /// where `alpha` is the kinetic order.
    pub fn truncated_power(d: usize, beta: f64, radius: f64, alpha: f64) -> Result<Self> {
        check_dim(d)?;
        let limit = alpha.min(d as f64 / 2.0);
        if !(beta >= 0.0 && beta < limit) {
            return Err(Error::Precondition(format!(
                "truncated power needs 0 <= beta < min(alpha, d/2) = {limit}, got beta = {beta}"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Usage(format!("truncated power radius must be positive, got {radius}")));
        }
        let w = unit_sphere_area(d);
        let df = d as f64;
        Ok(SingleSite {
            profile: Profile::TruncatedPower { beta, radius },
            d,
            m0: support_radius(radius),
            norm1: w * radius.powf(df - beta) / (df - beta),
            norm2sq: w * radius.powf(df - 2.0 * beta) / (df - 2.0 * beta),
        })
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn norm1(&self) -> f64 {
        self.norm1
    }

    pub fn norm2sq(&self) -> f64 {
        self.norm2sq
    }

    /// Pointwise value at displacement `x` from the site.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.profile {
            Profile::Box { half_width: h } => {
                if x.iter().all(|&c| (-h..h).contains(&c)) {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Bump { half_width: r, height } => {
                if x.iter().all(|&c| c.abs() <= r) {
                    height * x.iter().map(|&c| (PI * c / (2.0 * r)).cos().powi(2)).product::<f64>()
                } else {
                    0.0
                }
            }
            Profile::TruncatedPower { beta, radius } => {
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                if r <= radius && r > 0.0 {
                    r.powf(-beta)
                } else if r == 0.0 && beta == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Value assigned to a grid node at displacement `x`: the point value,
    /// or for the singular profile the average over sub-cell midpoints.
    fn node_value(&self, x: &[f64], spacing: f64) -> f64 {
        match self.profile {
            Profile::TruncatedPower { .. } => {
                let total = SUBCELL.pow(self.d as u32);
                let mut acc = 0.0;
                let mut y = [0.0; 3];
                for s in 0..total {
                    let mut rem = s;
                    for j in 0..self.d {
                        let k = rem % SUBCELL;
                        rem /= SUBCELL;
                        y[j] = x[j] + spacing * ((k as f64 + 0.5) / SUBCELL as f64 - 0.5);
                    }
                    acc += self.eval(&y[..self.d]);
                }
                acc / total as f64
            }
            _ => self.eval(x),
        }
    }
}

impl SingleSite {
    /// Parses `box(h=..)`, `bump(h=..,height=..)` or
    /// `truncpower(beta=..,radius=..)`; `alpha` is the kinetic order that
    /// gates the singular profile.
    pub fn parse(text: &str, d: usize, alpha: f64) -> Result<Self> {
        let call = parse_call(text)?;
        match call.name.as_str() {
            "box" => {
                call.expect_keys(&["h"])?;
                Self::box_indicator(d, call.number("h")?)
            }
            "bump" => {
                call.expect_keys(&["h", "height"])?;
                Self::bump(d, call.number("h")?, call.number_or("height", 1.0)?)
            }
            "truncpower" => {
                call.expect_keys(&["beta", "radius"])?;
                Self::truncated_power(d, call.number("beta")?, call.number("radius")?, alpha)
            }
            other => Err(Error::Parse(format!("unknown single-site profile `{other}`"))),
        }
    }
}

impl fmt::Display for SingleSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.profile {
            Profile::Box { half_width } => write!(f, "box(h={})", num(half_width)),
            Profile::Bump { half_width, height } => write!(f, "bump(h={},height={})", num(half_width), num(height)),
            Profile::TruncatedPower { beta, radius } => write!(f, "truncpower(beta={},radius={})", num(beta), num(radius)),
        }
    }
}

/// Law of the lattice variables `q_i >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatticeLaw {
    /// Mass `p0` at zero, flat at `p0` up to `gap`, then rising with `slope`
    /// until it reaches one.
    Atom { p0: f64, slope: f64, gap: f64 },
    /// `F(k) = (k / cap)^gamma` on `[0, cap]`.
    Power { gamma: f64, cap: f64 },
    /// `F(k) = exp(-k^-gamma)`.
    Exponential { gamma: f64 },
    /// `F(k) = exp(1 - e^(1/k))`.
    DoubleExp,
}

impl LatticeLaw {
    pub fn atom(p0: f64, slope: f64) -> Result<Self> {
        Self::atom_with_gap(p0, slope, 0.0)
    }

    pub fn atom_with_gap(p0: f64, slope: f64, gap: f64) -> Result<Self> {
        let law = LatticeLaw::Atom { p0, slope, gap };
        law.validate()?;
        Ok(law)
    }

    pub fn power(gamma: f64) -> Result<Self> {
        Self::power_with_cap(gamma, 1.0)
    }

    pub fn power_with_cap(gamma: f64, cap: f64) -> Result<Self> {
        let law = LatticeLaw::Power { gamma, cap };
        law.validate()?;
        Ok(law)
    }

    pub fn exponential(gamma: f64) -> Result<Self> {
        let law = LatticeLaw::Exponential { gamma };
        law.validate()?;
        Ok(law)
    }

    pub fn double_exp() -> Self {
        LatticeLaw::DoubleExp
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Usage(format!("lattice law parameter {name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            LatticeLaw::Atom { p0, slope, gap } => {
                if !(0.0..1.0).contains(&p0) {
                    return Err(Error::Usage(format!(
                        "atom mass p0 must lie in [0, 1); p0 = {p0} gives a degenerate law"
                    )));
                }
                positive("slope", slope)?;
                if !(gap >= 0.0 && gap.is_finite()) {
                    return Err(Error::Usage(format!("atom gap must be nonnegative, got {gap}")));
                }
                if p0 == 0.0 && gap > 0.0 {
                    return Err(Error::Usage("atom law with p0 = 0 and a gap vanishes near zero".into()));
                }
                Ok(())
            }
            LatticeLaw::Power { gamma, cap } => {
                positive("gamma", gamma)?;
                positive("cap", cap)
            }
            LatticeLaw::Exponential { gamma } => positive("gamma", gamma),
            LatticeLaw::DoubleExp => Ok(()),
        }
    }

    /// `F_q(kappa) = P(q <= kappa)`; zero for negative arguments.
    pub fn cdf(&self, kappa: f64) -> f64 {
        if kappa < 0.0 {
            return 0.0;
        }
        match *self {
            LatticeLaw::Atom { p0, slope, gap } => {
                if kappa < gap {
                    p0
                } else {
                    (p0 + slope * (kappa - gap)).min(1.0)
                }
            }
            LatticeLaw::Power { gamma, cap } => (kappa / cap).min(1.0).powf(gamma),
            LatticeLaw::Exponential { gamma } => {
                if kappa == 0.0 {
                    0.0
                } else {
                    (-kappa.powf(-gamma)).exp()
                }
            }
            LatticeLaw::DoubleExp => {
                if kappa == 0.0 {
                    0.0
                } else {
                    (1.0 - (1.0 / kappa).exp()).exp()
                }
            }
        }
    }

    /// `-log F_q(kappa)` evaluated without forming tiny CDF values.
    pub fn neg_log_cdf(&self, kappa: f64) -> f64 {
        match *self {
            LatticeLaw::Exponential { gamma } if kappa > 0.0 => kappa.powf(-gamma),
            LatticeLaw::DoubleExp if kappa > 0.0 => (1.0 / kappa).exp_m1(),
            LatticeLaw::Power { gamma, cap } if kappa > 0.0 => -gamma * (kappa / cap).min(1.0).ln(),
            _ => -self.cdf(kappa).ln(),
        }
    }

    /// Generalised inverse `inf { k : F(k) >= u }` for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            LatticeLaw::Atom { p0, slope, gap } => {
                if u <= p0 {
                    0.0
                } else {
                    gap + (u - p0) / slope
                }
            }
            LatticeLaw::Power { gamma, cap } => cap * u.powf(1.0 / gamma),
            LatticeLaw::Exponential { gamma } => (-u.ln()).powf(-1.0 / gamma),
            LatticeLaw::DoubleExp => 1.0 / (1.0 - u.ln()).ln(),
        }
    }

    /// Right end `kappa0` of the window `[0, kappa0]` on which `F_q` is
    /// continuous and below one (except at the end point).
    pub fn kappa0(&self) -> f64 {
        match *self {
            LatticeLaw::Atom { p0, slope, gap } => gap + (1.0 - p0) / slope,
            LatticeLaw::Power { cap, .. } => cap,
            LatticeLaw::Exponential { .. } | LatticeLaw::DoubleExp => 1.0,
        }
    }
}

impl fmt::Display for LatticeLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LatticeLaw::Atom { p0, slope, gap } => {
                write!(f, "atom(p0={},slope={}", num(p0), num(slope))?;
                if gap != 0.0 {
                    write!(f, ",gap={}", num(gap))?;
                }
                write!(f, ")")
            }
            LatticeLaw::Power { gamma, cap } => {
                write!(f, "power(gamma={}", num(gamma))?;
                if cap != 1.0 {
                    write!(f, ",cap={}", num(cap))?;
                }
                write!(f, ")")
            }
            LatticeLaw::Exponential { gamma } => write!(f, "exponential(gamma={})", num(gamma)),
            LatticeLaw::DoubleExp => write!(f, "doubleexp()"),
        }
    }
}

impl FromStr for LatticeLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let call = parse_call(s)?;
        LatticeLaw::from_call(&call)
    }
}

impl LatticeLaw {
    pub(crate) fn from_call(call: &crate::textform::Call) -> Result<Self> {
        match call.name.as_str() {
            "atom" => {
                call.expect_keys(&["p0", "slope", "gap"])?;
                Self::atom_with_gap(call.number("p0")?, call.number("slope")?, call.number_or("gap", 0.0)?)
            }
            "power" => {
                call.expect_keys(&["gamma", "cap"])?;
                Self::power_with_cap(call.number("gamma")?, call.number_or("cap", 1.0)?)
            }
            "exponential" => {
                call.expect_keys(&["gamma"])?;
                Self::exponential(call.number("gamma")?)
            }
            "doubleexp" => {
                call.expect_keys(&[])?;
                Ok(LatticeLaw::DoubleExp)
            }
            other => Err(Error::Parse(format!("unknown lattice law `{other}`"))),
        }
    }
}

/// SplitMix64 finaliser.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based key mixing: `splitmix64(key ^ splitmix64(counter))`.
///
/// Derives per-sample seeds from a master seed and per-site streams from a
/// sample seed, so results never depend on iteration order.
pub fn mix64(key: u64, counter: u64) -> u64 {
    splitmix64(key ^ splitmix64(counter))
}

/// Uniform variate in the open interval `(0, 1)` from 53 random bits.
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Lattice variables `q_i`, `i in [0, M)^d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    m: usize,
    d: usize,
    values: Vec<f64>,
    seed: u64,
    law: LatticeLaw,
}

impl Configuration {
    pub fn from_values(m: usize, d: usize, values: Vec<f64>, seed: u64, law: LatticeLaw) -> Result<Self> {
        check_dim(d)?;
        if m == 0 || values.len() != m.pow(d as u32) {
            return Err(Error::Usage(format!("configuration needs M^d = {} values, got {}", m.pow(d as u32), values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Precondition(format!("lattice variables must be finite and nonnegative, found {v}")));
        }
        Ok(Configuration { m, d, values, seed, law })
    }

    /// All-zero configuration (free control run).
    pub fn zeros(m: usize, d: usize, law: LatticeLaw) -> Result<Self> {
        Self::from_values(m, d, vec![0.0; m.pow(d as u32)], 0, law)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn law(&self) -> &LatticeLaw {
        &self.law
    }

    /// Binary form: seed as little-endian `u64`, then the grid-field layout
    /// with `n = 1` (`N = M`).
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.seed.to_le_bytes())?;
        let grid = TorusGrid::with_cap(self.m, self.d, 1, usize::MAX)?;
        GridField::from_values(grid, self.values.clone())?.write_to(w)
    }

    pub fn read_from<R: Read>(mut r: R, law: LatticeLaw) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let seed = u64::from_le_bytes(word);
        let field = GridField::read_from(r)?;
        let g = *field.grid();
        if g.n() != 1 {
            return Err(Error::Parse(format!("configuration layout needs n = 1, found n = {}", g.n())));
        }
        Configuration::from_values(g.m(), g.d(), field.into_values(), seed, law)
    }
}

/// `M^d` i.i.d. draws by inverse-CDF sampling; site `i` uses the uniform
/// variate of `mix64(seed, i)`.
pub fn sample_config(law: &LatticeLaw, m: usize, d: usize, seed: u64) -> Result<Configuration> {
    check_dim(d)?;
    if m == 0 {
        return Err(Error::Usage("configuration side M must be positive".into()));
    }
    let values = (0..m.pow(d as u32) as u64).map(|i| law.quantile(unit_open(mix64(seed, i)))).collect();
    Configuration::from_values(m, d, values, seed, *law)
}

/// `V(x) = sum_{i in Z^d} q_{i mod M} W(x - i)` at the grid nodes.
pub fn periodized_potential(config: &Configuration, site: &SingleSite, grid: &TorusGrid) -> Result<GridField> {
    let (m, d, n) = (grid.m(), grid.d(), grid.n());
    if config.m != m || config.d != d || site.d != d {
        return Err(Error::Usage(format!(
            "configuration (M = {}, d = {}), site (d = {}) and grid (M = {m}, d = {d}) disagree",
            config.m, config.d, site.d
        )));
    }
    let side = grid.side() as i64;
    let reach = (site.m0 * n) as i64;
    let width = (2 * reach + 1) as usize;
    let spacing = grid.spacing();
    // W at node offsets a / n, a in [-reach, reach]^d.
    let stencil: Vec<f64> = (0..width.pow(d as u32))
        .map(|s| {
            let mut x = [0.0; 3];
            let mut rem = s;
            for j in (0..d).rev() {
                x[j] = ((rem % width) as i64 - reach) as f64 * spacing;
                rem /= width;
            }
            site.node_value(&x[..d], spacing)
        })
        .collect();

    let mut v = vec![0.0; grid.len()];
    for (site_idx, &q) in config.values.iter().enumerate() {
        if q == 0.0 {
            continue;
        }
        let mut origin = [0i64; 3];
        let mut rem = site_idx;
        for j in (0..d).rev() {
            origin[j] = (rem % m) as i64 * n as i64;
            rem /= m;
        }
        for (s, &w) in stencil.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mut node = 0usize;
            let mut rem = s;
            let mut offs = [0i64; 3];
            for j in (0..d).rev() {
                offs[j] = (rem % width) as i64 - reach;
                rem /= width;
            }
            for j in 0..d {
                node = node * side as usize + (origin[j] + offs[j]).rem_euclid(side) as usize;
            }
            v[node] += q * w;
        }
    }
    GridField::from_values(*grid, v)
}

/// `D0 = C1 mu2^(alpha/2) ||W||_1 / (2 (||W||_1^2 + (2 M0)^d ||W||_2^2))`,
/// after checking the admissibility inequality it is built to satisfy.
pub fn compute_d0(site: &SingleSite, phi: &BernsteinSpec) -> Result<f64> {
    let gap = phi.c1() * MU2_UNIT.powf(phi.alpha() / 2.0);
    let (n1, n2) = (site.norm1, site.norm2sq);
    let vol = (2.0 * site.m0 as f64).powi(site.d as i32);
    let d0 = 0.5 * gap * n1 / (n1 * n1 + vol * n2);
    admissibility_ratio(site, phi, d0)?;
    Ok(d0)
}

/// `(2 M0)^d D0 ||W||_2^2 / (C1 mu2^(alpha/2) - D0 ||W||_1)`, which must be
/// below `||W||_1` for the Temple bounds to be informative.
pub fn admissibility_ratio(site: &SingleSite, phi: &BernsteinSpec, d0: f64) -> Result<f64> {
    let gap = phi.c1() * MU2_UNIT.powf(phi.alpha() / 2.0);
    let denom = gap - d0 * site.norm1;
    let vol = (2.0 * site.m0 as f64).powi(site.d as i32);
    let ratio = vol * d0 * site.norm2sq / denom;
    if !(denom > 0.0 && ratio < site.norm1) {
        return Err(Error::Precondition(format!(
            "D0 = {d0} violates admissibility: ratio {ratio} must be below ||W||_1 = {} (denominator {denom})",
            site.norm1
        )));
    }
    Ok(ratio)
}

/// Truncation level `D0 / M^alpha`.
pub fn truncation_level(d0: f64, m: usize, alpha: f64) -> f64 {
    d0 / (m as f64).powf(alpha)
}

/// `q~_i = min(q_i, D0 / M^alpha)`.
pub fn truncate_config(config: &Configuration, d0: f64, alpha: f64) -> Result<Configuration> {
    if !(d0 > 0.0) {
        return Err(Error::Usage(format!("D0 must be positive, got {d0}")));
    }
    let tau = truncation_level(d0, config.m, alpha);
    let mut out = config.clone();
    out.values.iter_mut().for_each(|q| *q = q.min(tau));
    Ok(out)
}

/// Number of sites with `q_i > D0 / M^alpha`.
pub fn count_above(config: &Configuration, d0: f64, alpha: f64) -> usize {
    let tau = truncation_level(d0, config.m, alpha);
    config.values.iter().filter(|&&q| q > tau).count()
}

/// Membership in `{ #{i : q_i > D0/M^alpha} >= delta M^d }`.
pub fn in_a_delta(config: &Configuration, delta: f64, d0: f64, alpha: f64) -> Result<bool> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Usage(format!("delta must lie in (0, 1), got {delta}")));
    }
    let sites = config.values.len() as f64;
    Ok(count_above(config, d0, alpha) as f64 >= delta * sites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::ln_gamma;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn drift() -> BernsteinSpec {
        BernsteinSpec::drift(1.0).unwrap()
    }

    fn ln_choose(n: u64, k: u64) -> f64 {
        ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
    }

    fn ks_statistic(law: &LatticeLaw, samples: &mut [f64]) -> f64 {
        // Two-sided statistic that also handles atoms: compare both one-sided
        // limits at every distinct sample value.
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mut worst = 0.0f64;
        let mut i = 0;
        while i < samples.len() {
            let x = samples[i];
            let mut j = i;
            while j < samples.len() && samples[j] == x {
                j += 1;
            }
            let left = law.cdf(x - f64::EPSILON * x.abs().max(f64::MIN_POSITIVE));
            worst = worst.max((law.cdf(x) - j as f64 / n).abs()).max((left - i as f64 / n).abs());
            i = j;
        }
        worst
    }

    #[test]
    fn cdf_examples() {
        assert_relative_eq!(LatticeLaw::exponential(1.0).unwrap().cdf(1.0), (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(LatticeLaw::double_exp().cdf(1.0), (1.0 - std::f64::consts::E).exp(), max_relative = 1e-15);
        assert_eq!(LatticeLaw::atom(0.3, 0.7).unwrap().cdf(0.0), 0.3);
        assert_relative_eq!(LatticeLaw::atom(0.3, 0.7).unwrap().cdf(0.5), 0.65);
        assert_eq!(LatticeLaw::atom(0.3, 0.7).unwrap().cdf(2.0), 1.0);
    }

    #[test]
    fn degenerate_laws_rejected() {
        assert!(LatticeLaw::atom(1.0, 0.5).is_err());
        assert!(LatticeLaw::atom(0.0, 1.0).is_ok());
        assert!(LatticeLaw::atom_with_gap(0.0, 1.0, 2.0).is_err());
        assert!(LatticeLaw::power(0.0).is_err());
        assert!(LatticeLaw::exponential(-1.0).is_err());
    }

    #[test]
    fn law_text_round_trip() {
        for law in [
            LatticeLaw::exponential(1.0).unwrap(),
            LatticeLaw::atom(0.3, 0.7).unwrap(),
            LatticeLaw::atom_with_gap((-1.0f64).exp(), 0.25, 2.0).unwrap(),
            LatticeLaw::power(1.0).unwrap(),
            LatticeLaw::power_with_cap(2.5, 0.1).unwrap(),
            LatticeLaw::double_exp(),
        ] {
            let text = law.to_string();
            assert_eq!(text.parse::<LatticeLaw>().unwrap(), law, "{text}");
        }
        assert_eq!(LatticeLaw::exponential(1.0).unwrap().to_string(), "exponential(gamma=1.0)");
        assert_eq!(LatticeLaw::atom(0.3, 0.7).unwrap().to_string(), "atom(p0=0.3,slope=0.7)");
        assert_eq!(LatticeLaw::power(1.0).unwrap().to_string(), "power(gamma=1.0)");
        assert_eq!(LatticeLaw::double_exp().to_string(), "doubleexp()");
        assert!("atom(p0=1.0,slope=0.5)".parse::<LatticeLaw>().is_err());
        assert!("gauss(mu=0)".parse::<LatticeLaw>().is_err());
    }

    #[test]
    fn samplers_pass_ks() {
        for law in [
            LatticeLaw::exponential(1.0).unwrap(),
            LatticeLaw::exponential(2.5).unwrap(),
            LatticeLaw::power(0.5).unwrap(),
            LatticeLaw::power_with_cap(2.0, 3.0).unwrap(),
            LatticeLaw::double_exp(),
            LatticeLaw::atom(0.3, 0.7).unwrap(),
            LatticeLaw::atom_with_gap(0.4, 2.0, 1.5).unwrap(),
        ] {
            let cfg = sample_config(&law, 100_000, 1, 42).unwrap();
            let mut v = cfg.values().to_vec();
            let ks = ks_statistic(&law, &mut v);
            assert!(ks <= 0.02, "{law}: KS {ks}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let law = LatticeLaw::exponential(1.0).unwrap();
        let a = sample_config(&law, 7, 2, 99).unwrap();
        let b = sample_config(&law, 7, 2, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_config(&law, 7, 2, 100).unwrap();
        assert_ne!(a.values(), c.values());
        // Site streams do not depend on the configuration shape.
        let line = sample_config(&law, 49, 1, 99).unwrap();
        assert_eq!(line.values(), a.values());
    }

    #[test]
    fn configuration_binary_round_trip() {
        let law = LatticeLaw::power(1.0).unwrap();
        let cfg = sample_config(&law, 3, 2, 5).unwrap();
        let mut bytes = Vec::new();
        cfg.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..8], &5u64.to_le_bytes());
        assert_eq!(bytes.len(), 8 + 32 + 8 * 9);
        assert_eq!(Configuration::read_from(&bytes[..], law).unwrap(), cfg);
    }

    #[test]
    fn norms_match_closed_forms_by_quadrature() {
        // Riemann sums on a fine grid as an independent check.
        let h = 1e-3;
        for (site, d) in [
            (SingleSite::box_indicator(1, 0.7).unwrap(), 1usize),
            (SingleSite::bump(1, 1.3, 2.0).unwrap(), 1),
            (SingleSite::bump(2, 0.8, 0.5).unwrap(), 2),
        ] {
            let r = site.m0() as f64;
            let steps = (2.0 * r / h) as i64;
            let (mut s1, mut s2) = (0.0, 0.0);
            if d == 1 {
                for i in 0..steps {
                    let w = site.eval(&[-r + (i as f64 + 0.5) * h]);
                    s1 += w * h;
                    s2 += w * w * h;
                }
            } else {
                let hh = 4.0 * h;
                let steps = (2.0 * r / hh) as i64;
                for i in 0..steps {
                    for j in 0..steps {
                        let w = site.eval(&[-r + (i as f64 + 0.5) * hh, -r + (j as f64 + 0.5) * hh]);
                        s1 += w * hh * hh;
                        s2 += w * w * hh * hh;
                    }
                }
            }
            assert_relative_eq!(s1, site.norm1(), max_relative = 1e-4);
            assert_relative_eq!(s2, site.norm2sq(), max_relative = 1e-4);
        }
        let p = SingleSite::truncated_power(1, 0.3, 0.9, 2.0).unwrap();
        let w1: f64 = 2.0 * 0.9f64.powf(0.7) / 0.7;
        assert_relative_eq!(p.norm1(), w1, max_relative = 1e-14);
        assert!(SingleSite::truncated_power(1, 0.5, 1.0, 2.0).is_err());
        assert!(SingleSite::truncated_power(3, 1.0, 1.0, 0.8).is_err());
        assert!(SingleSite::truncated_power(3, 0.7, 1.0, 0.8).is_ok());
    }

    #[test]
    fn site_text_round_trip() {
        for (text, d) in [("box(h=0.5)", 1usize), ("bump(h=1.5,height=2.0)", 2), ("truncpower(beta=0.3,radius=1.0)", 1)] {
            let site = SingleSite::parse(text, d, 2.0).unwrap();
            assert_eq!(site.to_string(), text);
            assert_eq!(SingleSite::parse(&site.to_string(), d, 2.0).unwrap(), site);
        }
        assert!(SingleSite::parse("truncpower(beta=0.3,radius=1.0)", 1, 0.2).is_err());
        assert!(SingleSite::parse("ring(r=1)", 1, 2.0).is_err());
    }

    #[test]
    fn box_tiles_constant_potential() {
        let site = SingleSite::box_indicator(1, 0.5).unwrap();
        let law = LatticeLaw::power(1.0).unwrap();
        for m in [1usize, 2, 5] {
            let grid = TorusGrid::new(m, 1, 8).unwrap();
            let cfg = Configuration::from_values(m, 1, vec![1.7; m], 0, law).unwrap();
            let v = periodized_potential(&cfg, &site, &grid).unwrap();
            assert!(v.values().iter().all(|&x| x == 1.7));
        }
        let site2 = SingleSite::box_indicator(2, 0.5).unwrap();
        let grid = TorusGrid::new(3, 2, 4).unwrap();
        let cfg = Configuration::from_values(3, 2, vec![0.4; 9], 0, law).unwrap();
        let v = periodized_potential(&cfg, &site2, &grid).unwrap();
        assert!(v.values().iter().all(|&x| (x - 0.4).abs() < 1e-15));
    }

    #[test]
    fn single_site_is_wrapped_translate() {
        let site = SingleSite::bump(1, 1.5, 1.0).unwrap();
        let law = LatticeLaw::power(1.0).unwrap();
        let grid = TorusGrid::new(3, 1, 4).unwrap();
        let mut q = vec![0.0; 3];
        q[2] = 2.0;
        let cfg = Configuration::from_values(3, 1, q, 0, law).unwrap();
        let v = periodized_potential(&cfg, &site, &grid).unwrap();
        for (idx, &val) in v.values().iter().enumerate() {
            let x = idx as f64 / 4.0;
            let direct: f64 = (-3..=3).map(|k| 2.0 * site.eval(&[x - 2.0 - 3.0 * k as f64])).sum();
            assert_relative_eq!(val, direct, max_relative = 1e-14, epsilon = 1e-15);
        }
    }

    #[test]
    fn discrete_integral_identity() {
        let law = LatticeLaw::exponential(1.0).unwrap();
        let cfg = sample_config(&law, 6, 1, 3).unwrap();
        let total: f64 = cfg.values().iter().sum();
        // Unaligned widths: each site covers 2hn nodes up to one, so the
        // relative error is at most 1/(2hn).
        for h in [0.8, 0.55, 1.3] {
            let site = SingleSite::box_indicator(1, h).unwrap();
            for n in [8usize, 16, 32, 64] {
                let grid = TorusGrid::new(6, 1, n).unwrap();
                let v = periodized_potential(&cfg, &site, &grid).unwrap();
                let int: f64 = v.values().iter().sum::<f64>() * grid.spacing();
                let err = (int - site.norm1() * total).abs() / (site.norm1() * total);
                assert!(err <= 1.0 / (2.0 * h * n as f64) + 1e-12, "h {h} n {n} err {err}");
            }
        }
        let site = SingleSite::box_indicator(1, 0.75).unwrap();
        let grid = TorusGrid::new(6, 1, 8).unwrap();
        let v = periodized_potential(&cfg, &site, &grid).unwrap();
        let int: f64 = v.values().iter().sum::<f64>() * grid.spacing();
        assert!((int - site.norm1() * total).abs() <= 0.01 * site.norm1() * total);
        // Half-width 1/2 tiles exactly.
        let site = SingleSite::box_indicator(2, 0.5).unwrap();
        let cfg = sample_config(&law, 4, 2, 8).unwrap();
        let grid = TorusGrid::new(4, 2, 8).unwrap();
        let v = periodized_potential(&cfg, &site, &grid).unwrap();
        let int: f64 = v.values().iter().sum::<f64>() * grid.cell_volume();
        assert_relative_eq!(int, cfg.values().iter().sum::<f64>(), max_relative = 1e-13);
    }

    #[test]
    fn truncation_dominates_pointwise() {
        let law = LatticeLaw::exponential(1.0).unwrap();
        let cfg = sample_config(&law, 8, 1, 17).unwrap();
        let t = truncate_config(&cfg, 2.0, 0.5).unwrap();
        let site = SingleSite::bump(1, 1.2, 1.0).unwrap();
        let grid = TorusGrid::new(8, 1, 4).unwrap();
        let a = periodized_potential(&cfg, &site, &grid).unwrap();
        let b = periodized_potential(&t, &site, &grid).unwrap();
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| y <= x));
        assert_eq!(truncate_config(&t, 2.0, 0.5).unwrap(), t);
    }

    #[test]
    fn truncation_examples() {
        let law = LatticeLaw::power(1.0).unwrap();
        let cfg = Configuration::from_values(2, 1, vec![0.1, 5.0], 0, law).unwrap();
        // Threshold D0 / M^alpha = 1 with D0 = 2, alpha = 1.
        assert_eq!(truncate_config(&cfg, 2.0, 1.0).unwrap().values(), &[0.1, 1.0]);
        assert_eq!(truncate_config(&cfg, 20.0, 1.0).unwrap().values(), cfg.values());
    }

    #[test]
    fn d0_example_and_admissibility() {
        let site = SingleSite::box_indicator(1, 0.5).unwrap();
        let d0 = compute_d0(&site, &drift()).unwrap();
        assert_relative_eq!(d0, 2.0 * PI * PI / 3.0, max_relative = 1e-14);
        assert_relative_eq!(admissibility_ratio(&site, &drift(), d0).unwrap(), 0.4, max_relative = 1e-14);
        assert!(admissibility_ratio(&site, &drift(), 30.0).is_err());
        let wide = SingleSite::box_indicator(1, 1.0).unwrap();
        let d_wide = compute_d0(&wide, &drift()).unwrap();
        assert_relative_eq!(d_wide, 0.5 * 4.0 * PI * PI * 2.0 / (4.0 + 2.0 * 2.0), max_relative = 1e-14);
    }

    #[test]
    fn a_delta_examples() {
        let law = LatticeLaw::power(1.0).unwrap();
        let tau = truncation_level(3.0, 2, 1.0);
        let hi = Configuration::from_values(2, 1, vec![2.0 * tau; 2], 0, law).unwrap();
        let lo = Configuration::from_values(2, 1, vec![tau / 2.0; 2], 0, law).unwrap();
        assert!(in_a_delta(&hi, 0.5, 3.0, 1.0).unwrap());
        assert!(!in_a_delta(&lo, 0.5, 3.0, 1.0).unwrap());
        assert!(in_a_delta(&hi, 1.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn a_delta_frequency_matches_binomial() {
        let law = LatticeLaw::exponential(1.0).unwrap();
        let (m, d0, alpha, delta) = (4usize, 2.0, 0.5, 0.5);
        let p = 1.0 - law.cdf(truncation_level(d0, m, alpha));
        let n = m as u64;
        let need = (delta * m as f64).ceil() as u64;
        let exact: f64 = (need..=n).map(|k| (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()).sum();
        let trials = 10_000u64;
        let hits = (0..trials)
            .filter(|&s| in_a_delta(&sample_config(&law, m, 1, mix64(7, s)).unwrap(), delta, d0, alpha).unwrap())
            .count() as f64;
        let freq = hits / trials as f64;
        let se = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((freq - exact).abs() <= 3.0 * se, "freq {freq} exact {exact} se {se}");
    }

    proptest! {
        #[test]
        fn potential_is_periodic(seed in 0u64..1000, shift in 0usize..3) {
            let law = LatticeLaw::exponential(1.5).unwrap();
            let cfg = sample_config(&law, 3, 1, seed).unwrap();
            let site = SingleSite::bump(1, 2.2, 1.0).unwrap();
            let grid = TorusGrid::new(3, 1, 4).unwrap();
            let v = periodized_potential(&cfg, &site, &grid).unwrap();
            // Direct evaluation at x and x + M e_1 from the infinite lattice sum.
            let at = |x: f64| -> f64 {
                (-10i64..=10).map(|i| cfg.values()[i.rem_euclid(3) as usize] * site.eval(&[x - i as f64])).sum()
            };
            for (idx, &val) in v.values().iter().enumerate() {
                let x = idx as f64 / 4.0;
                prop_assert!((val - at(x + 3.0 * shift as f64)).abs() <= 1e-12 * (1.0 + val));
            }
        }

        #[test]
        fn membership_monotone(seed in 0u64..500, d1 in 0.05f64..0.95, d2 in 0.05f64..0.95, z1 in 0.1f64..5.0, z2 in 0.1f64..5.0) {
            let law = LatticeLaw::exponential(1.0).unwrap();
            let cfg = sample_config(&law, 6, 1, seed).unwrap();
            let (dl, dh) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            let (zl, zh) = if z1 < z2 { (z1, z2) } else { (z2, z1) };
            prop_assert!(in_a_delta(&cfg, dh, zl, 1.0).unwrap() <= in_a_delta(&cfg, dl, zl, 1.0).unwrap());
            prop_assert!(in_a_delta(&cfg, dl, zh, 1.0).unwrap() <= in_a_delta(&cfg, dl, zl, 1.0).unwrap());
        }
    }
}
