//! Computable eigenvalue and probability bounds: Temple lower bounds for the
//! ground state, the Chernoff-type binomial bound, the complement
//! probability bound, and the Dirichlet-box upper bound.

use std::f64::consts::{E, PI};

use crate::alloy::{periodized_potential, truncation_level, Configuration, Profile, SingleSite, MU2_UNIT};
use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};
use crate::torus::TorusGrid;

/// Ingredients of the Temple bound with the constant trial function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TempleInputs {
    /// `int V~` over the torus.
    pub int_v: f64,
    /// `int V~^2` over the torus.
    pub int_v2: f64,
    pub m: usize,
    pub d: usize,
    pub alpha: f64,
    pub c1: f64,
    pub d0: f64,
    pub norm_w1: f64,
    /// Whether `int_v2` came from grid quadrature rather than a closed form.
    pub quadrature: bool,
}

impl TempleInputs {
    /// Inputs for an (already truncated) configuration. `int V` is exact;
    /// `int V^2` is exact for non-overlapping boxes (`h <= 1/2`) and uses
    /// grid quadrature with `n` nodes per unit length otherwise.
    pub fn from_config(
        config: &Configuration,
        site: &SingleSite,
        phi: &BernsteinSpec,
        d0: f64,
        n: usize,
    ) -> Result<Self> {
        let int_v = site.norm1() * config.values().iter().sum::<f64>();
        let (int_v2, quadrature) = match site.profile() {
            Profile::Box { half_width } if half_width <= 0.5 => {
                (site.norm2sq() * config.values().iter().map(|q| q * q).sum::<f64>(), false)
            }
            _ => {
                let grid = TorusGrid::new(config.m(), config.d(), n)?;
                let v = periodized_potential(config, site, &grid)?;
                (grid.cell_volume() * v.values().iter().map(|x| x * x).sum::<f64>(), true)
            }
        };
        Ok(TempleInputs {
            int_v,
            int_v2,
            m: config.m(),
            d: config.d(),
            alpha: phi.alpha(),
            c1: phi.c1(),
            d0,
            norm_w1: site.norm1(),
            quadrature,
        })
    }
}

fn kinetic_gap(c1: f64, alpha: f64) -> f64 {
    c1 * MU2_UNIT.powf(alpha / 2.0)
}

/// `M^-d [int V~ - int V~^2 / ((C1 mu2^(alpha/2) - D0 ||W||_1) M^-alpha)]`.
///
/// Not clamped at zero.
pub fn temple_lower_bound(inp: &TempleInputs) -> Result<f64> {
    if !(inp.int_v >= 0.0 && inp.int_v2 >= 0.0) {
        return Err(Error::Precondition(format!(
            "Temple inputs must be nonnegative (int V = {}, int V^2 = {})",
            inp.int_v, inp.int_v2
        )));
    }
    let scale = (inp.m as f64).powf(-inp.alpha);
    let vol = (inp.m as f64).powi(inp.d as i32);
    let gap = kinetic_gap(inp.c1, inp.alpha);
    let mean = inp.int_v / vol;
    if !(mean < gap * scale) {
        return Err(Error::Precondition(format!(
            "Temple condition <psi, H psi> = {mean} < C1 mu2^(alpha/2) / M^alpha = {} fails",
            gap * scale
        )));
    }
    let slack = gap - inp.d0 * inp.norm_w1;
    if !(slack > 0.0) {
        return Err(Error::Precondition(format!(
            "C1 mu2^(alpha/2) - D0 ||W||_1 = {slack} must be positive"
        )));
    }
    // The denominator bounds lambda_2^M - <psi, H psi> from below only when
    // the truncation keeps the mean below D0 ||W||_1 / M^alpha.
    let cap = inp.d0 * inp.norm_w1 * scale;
    if mean > cap * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "<psi, H psi> = {mean} exceeds D0 ||W||_1 / M^alpha = {cap}; truncate the configuration first"
        )));
    }
    Ok((inp.int_v - inp.int_v2 / (slack * scale)) / vol)
}

/// `D0 delta [||W||_1 - (2 M0)^d D0 ||W||_2^2 / (C1 mu2^(alpha/2) - D0 ||W||_1)] M^-alpha`,
/// valid for configurations with at least `delta M^d` sites above `D0 / M^alpha`.
pub fn temple_delta_bound(delta: f64, d0: f64, m: usize, alpha: f64, site: &SingleSite, c1: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Usage(format!("delta must lie in (0, 1), got {delta}")));
    }
    if m < site.m0() {
        return Err(Error::Usage(format!("torus side M = {m} is below the support radius M0 = {}", site.m0())));
    }
    let slack = kinetic_gap(c1, alpha) - d0 * site.norm1();
    let vol = (2.0 * site.m0() as f64).powi(site.d() as i32);
    let bracket = site.norm1() - vol * d0 * site.norm2sq() / slack;
    if !(slack > 0.0 && bracket > 0.0) {
        return Err(Error::Config(format!(
            "structural constants inconsistent: bracket {bracket}, kinetic slack {slack} (D0 = {d0})"
        )));
    }
    Ok(d0 * delta * bracket * truncation_level(1.0, m, alpha))
}

/// `(((1-p)/(1-gamma))^(1-gamma) (p/gamma)^gamma)^n`, bounding `P[S_n >= gamma n]`
/// for `S_n ~ Binomial(n, p)`.
pub fn binomial_tail_bound(n: u64, p: f64, gamma: f64) -> Result<f64> {
    if n == 0 || !(p > 0.0 && p < 1.0) {
        return Err(Error::Usage(format!("binomial bound needs n >= 1 and p in (0, 1), got n = {n}, p = {p}")));
    }
    if !(gamma > p && gamma <= 1.0) {
        return Err(Error::Precondition(format!("binomial bound needs p < gamma <= 1, got p = {p}, gamma = {gamma}")));
    }
    // 0^0 = 1 at gamma = 1.
    let upper = if gamma < 1.0 { (1.0 - gamma) * ((1.0 - p) / (1.0 - gamma)).ln() } else { 0.0 };
    let log = n as f64 * (upper + gamma * (p / gamma).ln());
    Ok(log.exp().min(1.0))
}

/// Left side of the smallness condition,
/// `(1/(1-delta0)) (1/delta0)^(delta0/(1-delta0)) sqrt(pM)`, which must be `<= 1`.
pub fn smallness_factor(delta0: f64, p_m: f64) -> f64 {
    (1.0 / (1.0 - delta0)) * (1.0 / delta0).powf(delta0 / (1.0 - delta0)) * p_m.sqrt()
}

/// `pM^((1-delta0) M^d / 2)`, bounding the probability that fewer than
/// `delta0 M^d` sites exceed the truncation level.
pub fn complement_probability_bound(m: usize, d: usize, delta0: f64, p_m: f64) -> Result<f64> {
    if m == 0 || d == 0 || !(delta0 > 0.0 && delta0 < 1.0) || !(p_m > 0.0 && p_m < 1.0) {
        return Err(Error::Usage(format!(
            "complement bound needs M, d >= 1, delta0 in (0, 1), pM in (0, 1); got M = {m}, d = {d}, delta0 = {delta0}, pM = {p_m}"
        )));
    }
    let s = smallness_factor(delta0, p_m);
    if s > 1.0 {
        return Err(Error::Precondition(format!(
            "smallness condition fails ({s} > 1): increase M or decrease delta0"
        )));
    }
    let sites = (m as f64).powi(d as i32);
    Ok((-(1.0 - delta0) / 2.0 * sites * (1.0 / p_m).ln()).exp())
}

/// `Phi(d pi^2 / M^2) + e p_s(0) ||V||_1` with `s = 1 / Phi(d pi^2 / M^2)`.
pub fn dirichlet_upper_bound(phi: &BernsteinSpec, m: usize, d: usize, norm_v1: f64) -> Result<f64> {
    if m == 0 || d == 0 || !(norm_v1 >= 0.0) {
        return Err(Error::Usage(format!("Dirichlet bound needs M, d >= 1 and ||V||_1 >= 0 (M = {m}, d = {d}, ||V||_1 = {norm_v1})")));
    }
    let lam = phi.phi_eval(d as f64 * PI * PI / (m * m) as f64)?;
    if norm_v1 == 0.0 {
        return Ok(lam);
    }
    Ok(lam + E * phi.heat_kernel_at_zero(1.0 / lam, d)? * norm_v1)
}

/// `||V_kappa||_1 = kappa (3M)^d ||W||_1` for the constant-`kappa` potential
/// on the enlarged box of the lower-bound construction.
pub fn lower_construction_norm(kappa: f64, m: usize, site: &SingleSite) -> f64 {
    kappa * (3.0 * m as f64).powi(site.d() as i32) * site.norm1()
}
