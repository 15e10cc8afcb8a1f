//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals and
//! on the half line through the substitution `r = scale * tan(theta)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and panel budget for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_panels: 4000,
        }
    }
}

/// Value and error estimate of a converged integral.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]`, bisecting the panel with the largest error
/// estimate until the total estimate meets `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    let (value, error) = gk15(&f, a, b);
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "integrand is not finite on [{a}, {b}]"
        )));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    while total_err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if heap.len() >= opts.max_panels {
            return Err(Error::Numeric(format!(
                "quadrature did not converge on [{a}, {b}]: value {total:e}, error estimate {total_err:e} after {} panels",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Numeric(format!(
                "quadrature panel [{}, {}] cannot be refined further (error {:e})",
                worst.a, worst.b, worst.error
            )));
        }
        let (lv, le) = gk15(&f, worst.a, mid);
        let (rv, re) = gk15(&f, mid, worst.b);
        if !(lv.is_finite() && rv.is_finite()) {
            return Err(Error::Numeric(format!(
                "integrand is not finite on [{}, {}]",
                worst.a, worst.b
            )));
        }
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Panel { a: mid, b: worst.b, value: rv, error: re });
        // Resum occasionally so cancellation in the running totals cannot drift.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult { value, error, panels: heap.len() })
}

/// Integrates `f` over `(0, inf)` using `r = scale * tan(theta)`.
///
/// `scale` should sit near the bulk of the integrand's mass; it only affects
/// efficiency, not the result.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, scale: f64, opts: QuadOptions) -> Result<QuadResult> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Usage(format!("half-line scale must be positive, got {scale}")));
    }
    let mapped = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let r = scale * s / c;
        let v = f(r);
        if v == 0.0 {
            0.0
        } else {
            v * scale / (c * c)
        }
    };
    integrate(mapped, 0.0, FRAC_PI_2, opts)
}

/// Finds the point where a nondecreasing `f` crosses `target` by bracketing
/// from `start` and bisecting in log space. Used to pick quadrature scales.
pub(crate) fn log_crossing<F: Fn(f64) -> f64>(f: F, target: f64, start: f64) -> f64 {
    let mut lo = start;
    let mut hi = start;
    let mut guard = 0;
    while f(hi) < target && guard < 2000 {
        hi *= 2.0;
        guard += 1;
    }
    while f(lo) > target && guard < 4000 {
        lo *= 0.5;
        guard += 1;
    }
    if lo == hi {
        return lo;
    }
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}
