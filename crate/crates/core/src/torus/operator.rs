use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{GridField, TorusGrid};
use crate::bernstein::BernsteinSpec;
use crate::error::{Error, Result};

#[derive(Clone)]
struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Plans keyed by transform length, shared by every operator in the process.
fn plans_for(len: usize) -> Plans {
    static CACHE: OnceLock<RwLock<HashMap<usize, Plans>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(p) = cache.read().expect("plan cache poisoned").get(&len) {
        return p.clone();
    }
    let mut planner = FftPlanner::new();
    let plans = Plans { forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) };
    cache.write().expect("plan cache poisoned").entry(len).or_insert(plans).clone()
}

/// Signed Fourier index of FFT bin `j` on `side` points: `{-side/2, ..., side/2 - 1}`.
fn signed_index(j: usize, side: usize) -> i64 {
    if j < side.div_ceil(2) && !(side.is_multiple_of(2) && j == side / 2) {
        j as i64
    } else {
        j as i64 - side as i64
    }
}

/// `phi(-Laplacian)` on the torus grid, applied as a Fourier multiplier.
#[derive(Clone)]
pub struct SpectralOperator {
    grid: TorusGrid,
    phi: BernsteinSpec,
    multiplier: Vec<f64>,
    plans: Plans,
}

impl std::fmt::Debug for SpectralOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOperator").field("grid", &self.grid).field("phi", &self.phi).finish()
    }
}

impl SpectralOperator {
    pub fn new(grid: TorusGrid, phi: BernsteinSpec) -> Self {
        let side = grid.side();
        let base = (2.0 * PI / grid.m() as f64).powi(2);
        let multiplier = (0..grid.len())
            .map(|idx| {
                let ix = grid.unflatten(idx);
                let q: i64 = ix[..grid.d()].iter().map(|&j| signed_index(j, side).pow(2)).sum();
                phi.phi_at(base * q as f64)
            })
            .collect();
        SpectralOperator { grid, phi, multiplier, plans: plans_for(side) }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn phi(&self) -> &BernsteinSpec {
        &self.phi
    }

    /// Symbol values `phi(|2 pi k / M|^2)` in FFT bin order.
    pub fn multiplier(&self) -> &[f64] {
        &self.multiplier
    }

    /// Largest symbol value, an upper bound on the discrete kinetic spectrum.
    pub fn max_symbol(&self) -> f64 {
        self.multiplier.iter().cloned().fold(0.0, f64::max)
    }

    /// `out = phi(-Laplacian) psi` on raw node values.
    pub(crate) fn apply_slice(&self, psi: &[f64], out: &mut [f64], buf: &mut Vec<Complex64>) {
        buf.clear();
        buf.extend(psi.iter().map(|&v| Complex64::new(v, 0.0)));
        self.transform(buf, &self.plans.forward);
        for (c, m) in buf.iter_mut().zip(&self.multiplier) {
            *c *= m;
        }
        self.transform(buf, &self.plans.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        for (o, c) in out.iter_mut().zip(buf.iter()) {
            *o = c.re * scale;
        }
    }

    pub fn apply(&self, psi: &GridField) -> Result<GridField> {
        if psi.grid() != &self.grid {
            return Err(Error::Usage("field and operator live on different grids".into()));
        }
        let mut out = GridField::zeros(self.grid);
        let mut buf = Vec::with_capacity(self.grid.len());
        self.apply_slice(psi.values(), out.values_mut(), &mut buf);
        Ok(out)
    }

    /// Unnormalised d-dimensional transform, one axis at a time.
    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let side = self.grid.side();
        let d = self.grid.d();
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        // Last axis is contiguous.
        for line in data.chunks_exact_mut(side) {
            fft.process_with_scratch(line, &mut scratch);
        }
        let mut line = vec![Complex64::default(); side];
        for axis in 0..d - 1 {
            let stride = side.pow((d - 1 - axis) as u32);
            let block = stride * side;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (j, l) in line.iter_mut().enumerate() {
                        *l = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (j, l) in line.iter().enumerate() {
                        data[base + j * stride] = *l;
                    }
                }
            }
        }
    }
}

/// Matrix-free `H = phi(-Laplacian) + V` on a torus grid, `V >= 0` pointwise.
#[derive(Debug, Clone)]
pub struct SchrodingerOperator {
    kinetic: SpectralOperator,
    potential: GridField,
}

impl SchrodingerOperator {
    pub fn new(kinetic: SpectralOperator, potential: GridField) -> Result<Self> {
        if potential.grid() != kinetic.grid() {
            return Err(Error::Usage("potential and kinetic operator live on different grids".into()));
        }
        if let Some(v) = potential.values().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Precondition(format!("potential must be finite and nonnegative, found {v}")));
        }
        Ok(SchrodingerOperator { kinetic, potential })
    }

    /// Operator with `V = 0`.
    pub fn free(kinetic: SpectralOperator) -> Self {
        let potential = GridField::zeros(*kinetic.grid());
        SchrodingerOperator { kinetic, potential }
    }

    pub fn kinetic(&self) -> &SpectralOperator {
        &self.kinetic
    }

    pub fn potential(&self) -> &GridField {
        &self.potential
    }

    pub fn grid(&self) -> &TorusGrid {
        self.kinetic.grid()
    }

    /// Upper bound on the spectrum: `max symbol + max V`.
    pub fn norm_bound(&self) -> f64 {
        self.kinetic.max_symbol() + self.potential.values().iter().cloned().fold(0.0, f64::max)
    }

    pub(crate) fn apply_slice(&self, psi: &[f64], out: &mut [f64], buf: &mut Vec<Complex64>) {
        self.kinetic.apply_slice(psi, out, buf);
        for ((o, v), p) in out.iter_mut().zip(self.potential.values()).zip(psi) {
            *o += v * p;
        }
    }

    pub fn apply_h(&self, psi: &GridField) -> Result<GridField> {
        if psi.grid() != self.grid() {
            return Err(Error::Usage(format!(
                "field on a {:?} grid applied to an operator on a {:?} grid",
                psi.grid(),
                self.grid()
            )));
        }
        let mut out = GridField::zeros(*self.grid());
        let mut buf = Vec::with_capacity(self.grid().len());
        self.apply_slice(psi.values(), out.values_mut(), &mut buf);
        Ok(out)
    }

    /// `<psi, H psi> / <psi, psi>`.
    pub fn rayleigh_quotient(&self, psi: &GridField) -> Result<f64> {
        let h = self.apply_h(psi)?;
        Ok(psi.inner(&h)? / psi.inner(psi)?)
    }
}
