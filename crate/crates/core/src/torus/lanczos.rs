//! Restarted block Lanczos for the lowest eigenpairs of a
//! [`SchrodingerOperator`], with full reorthogonalisation and explicit
//! residual certificates.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::{GridField, SchrodingerOperator};
use crate::error::{Error, Result};

const BLOCK: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Certificate `||H phi - lambda phi|| <= tol * max(lambda, 1)`.
    pub tol: f64,
    pub seed: u64,
    /// Budget of operator applications over the whole solve.
    pub max_applications: usize,
}

impl EigenOptions {
    pub fn new(tol: f64, seed: u64) -> Self {
        EigenOptions { tol, seed, max_applications: 5000 }
    }
}

/// Eigenpairs sorted ascending; vectors have unit discrete L2 norm.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<GridField>,
    /// Relative residuals `||H phi - lambda phi|| / max(lambda, 1)`.
    pub residuals: Vec<f64>,
    pub applications: usize,
}

/// Eigenvalues only, with their certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub applications: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct Workspace<'a> {
    op: &'a SchrodingerOperator,
    opts: EigenOptions,
    rng: ChaCha8Rng,
    buf: Vec<Complex64>,
    applications: usize,
}

impl Workspace<'_> {
    fn apply(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        if self.applications >= self.opts.max_applications {
            return Err(Error::Numeric(format!(
                "eigensolver exhausted its budget of {} operator applications",
                self.opts.max_applications
            )));
        }
        self.applications += 1;
        let mut out = vec![0.0; v.len()];
        self.op.apply_slice(v, &mut out, &mut self.buf);
        Ok(out)
    }

    fn random_vector(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.gen_range(-1.0..1.0)).collect()
    }

    /// Orthogonalises `v` against `locked` and `basis` (two passes) and
    /// normalises. Falls back to random vectors when `v` is (numerically)
    /// inside their span; `None` once the whole space is spanned.
    fn orthonormalize(&mut self, mut v: Vec<f64>, locked: &[Vec<f64>], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
        for attempt in 0..4 {
            let before = norm(&v);
            if before > 0.0 {
                for _ in 0..2 {
                    for q in locked.iter().chain(basis) {
                        let c = dot(q, &v);
                        axpy(-c, q, &mut v);
                    }
                }
                let after = norm(&v);
                if after > 1e-8 * before {
                    v.iter_mut().for_each(|x| *x /= after);
                    return Some(v);
                }
            }
            if attempt < 3 {
                v = self.random_vector(v.len());
            }
        }
        None
    }
}

fn ritz(t: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(t.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(t.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn combine(basis: &[Vec<f64>], coeffs: impl Iterator<Item = f64>, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for (q, c) in basis.iter().zip(coeffs) {
        axpy(c, q, &mut y);
    }
    y
}

/// Lowest `want` eigenpairs of `H` restricted to the orthogonal complement
/// of `locked` (orthonormal in the Euclidean inner product).
fn restarted_block_lanczos(
    ws: &mut Workspace<'_>,
    want: usize,
    locked: &[Vec<f64>],
) -> Result<Vec<(f64, Vec<f64>, f64)>> {
    let n = ws.op.grid().len();
    let avail = n - locked.len();
    let max_basis = (3 * want + 20).max(40).min(avail);
    let keep = (want + (max_basis - want) / 3).max(want).min(max_basis.saturating_sub(BLOCK));
    let tol = ws.opts.tol;

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis + BLOCK);
    // Projections t[i][j] = q_i . H q_j, known for every j < processed.
    let mut t = DMatrix::<f64>::zeros(max_basis + BLOCK, max_basis + BLOCK);
    let mut processed = 0usize;
    let mut exhausted = false;

    for _ in 0..BLOCK.min(avail) {
        let r = ws.random_vector(n);
        match ws.orthonormalize(r, locked, &basis) {
            Some(q) => basis.push(q),
            None => break,
        }
    }

    let mut since_check = 0usize;
    loop {
        exhausted |= basis.len() >= avail;
        if processed < basis.len() && (basis.len() < max_basis || exhausted) {
            let block: Vec<usize> = (processed..(processed + BLOCK).min(basis.len())).collect();
            let mut images = Vec::with_capacity(block.len());
            for &j in &block {
                let mut w = ws.apply(&basis[j])?;
                for q in locked {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                }
                images.push(w);
            }
            for (&j, w) in block.iter().zip(&images) {
                for (i, q) in basis.iter().enumerate() {
                    let c = dot(q, w);
                    if i >= processed && i < j {
                        let s = 0.5 * (t[(i, j)] + c);
                        t[(i, j)] = s;
                        t[(j, i)] = s;
                    } else {
                        t[(i, j)] = c;
                        t[(j, i)] = c;
                    }
                }
            }
            processed += block.len();
            let first_new = basis.len();
            for w in &images {
                let mut r = w.clone();
                for q in &basis[..first_new] {
                    let c = dot(q, &r);
                    axpy(-c, q, &mut r);
                }
                if basis.len() >= avail {
                    exhausted = true;
                    continue;
                }
                if basis.len() >= t.nrows() {
                    continue;
                }
                match ws.orthonormalize(r, locked, &basis) {
                    Some(q) => basis.push(q),
                    None => exhausted = true,
                }
            }
            // Couplings of the new vectors to the block just processed.
            for k in first_new..basis.len() {
                for (&j, w) in block.iter().zip(&images) {
                    let c = dot(&basis[k], w);
                    t[(k, j)] = c;
                    t[(j, k)] = c;
                }
            }
            exhausted |= basis.len() >= avail;
            since_check += 1;
            if since_check < 4 && (basis.len() < max_basis || exhausted) && processed < basis.len() {
                continue;
            }
        }
        since_check = 0;

        let p = processed;
        if p == 0 {
            return Err(Error::Numeric("eigensolver could not build a Krylov basis".into()));
        }
        let tpp = t.view((0, 0), (p, p)).into_owned();
        let (theta, s) = ritz(&tpp);
        let tup = t.view((p, 0), (basis.len() - p, p)).into_owned();
        let got = want.min(p);
        let estimates: Vec<f64> = (0..got)
            .map(|c| {
                let coupling = &tup * s.column(c);
                coupling.norm()
            })
            .collect();
        let converged = got == want
            && (0..want).all(|c| estimates[c] <= 0.5 * tol * theta[c].abs().max(1.0));
        let complete = exhausted && processed == basis.len();

        if converged || complete {
            if got < want {
                return Err(Error::Numeric(format!("only {got} eigenpairs available, {want} requested")));
            }
            let mut out = Vec::with_capacity(want);
            let mut all_ok = true;
            for c in 0..want {
                let y = combine(&basis[..p], s.column(c).iter().cloned(), n);
                let hy = ws.apply(&y)?;
                let lambda = dot(&y, &hy);
                let mut r = hy;
                axpy(-lambda, &y, &mut r);
                let rel = norm(&r) / lambda.abs().max(1.0);
                all_ok &= rel <= tol;
                out.push((lambda, y, rel));
            }
            if all_ok || complete {
                if let Some(worst) = out.iter().map(|o| o.2).filter(|&r| r > tol).reduce(f64::max) {
                    return Err(Error::Numeric(format!(
                        "eigenpairs not certified: worst relative residual {worst:e} exceeds tol {tol:e}"
                    )));
                }
                return Ok(out);
            }
        }

        if !exhausted && (basis.len() >= max_basis || processed == basis.len()) {
            // Thick restart from the lowest Ritz vectors; the unprocessed
            // tail block carries the Krylov continuation.
            let k = keep.min(p);
            let mut kept: Vec<Vec<f64>> =
                (0..k).map(|c| combine(&basis[..p], s.column(c).iter().cloned(), n)).collect();
            let tail: Vec<Vec<f64>> = basis.drain(p..).collect();
            let coupling = &tup * s.columns(0, k);
            t.fill(0.0);
            for c in 0..k {
                t[(c, c)] = theta[c];
            }
            for (r, _) in tail.iter().enumerate() {
                for c in 0..k {
                    t[(k + r, c)] = coupling[(r, c)];
                    t[(c, k + r)] = coupling[(r, c)];
                }
            }
            kept.extend(tail);
            basis = kept;
            processed = k;
            if processed == basis.len() {
                // No continuation vector survived: inject a fresh direction.
                let r = ws.random_vector(n);
                match ws.orthonormalize(r, locked, &basis) {
                    Some(q) => basis.push(q),
                    None => exhausted = true,
                }
            }
        }
    }
}

/// Converged `(value, vector, residual)` triples.
type Ritz = (f64, Vec<f64>, f64);

fn solve(op: &SchrodingerOperator, count: usize, opts: EigenOptions) -> Result<(Vec<Ritz>, usize)> {
    let n = op.grid().len();
    if count == 0 || count > n {
        return Err(Error::Usage(format!("requested {count} eigenvalues of an operator of dimension {n}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Usage(format!("eigen tolerance must be positive, got {}", opts.tol)));
    }
    let mut ws = Workspace {
        op,
        opts,
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        buf: Vec::with_capacity(n),
        applications: 0,
    };
    let mut pairs = restarted_block_lanczos(&mut ws, count, &[])?;
    // Block size two cannot see a third copy of a degenerate eigenvalue, so
    // search the complement of the converged vectors for anything lower.
    if count > BLOCK {
        loop {
            let locked: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
            if locked.len() >= n {
                break;
            }
            let top = pairs.last().expect("nonempty").0;
            let extra = restarted_block_lanczos(&mut ws, 1, &locked)?.remove(0);
            let slack = ws.opts.tol * top.abs().max(1.0);
            if extra.0 < top - slack {
                pairs.push(extra);
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                pairs.pop();
            } else {
                break;
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((pairs, ws.applications))
}

/// Lowest `count` eigenpairs, each residual-certified.
pub fn lowest_eigenpairs(op: &SchrodingerOperator, count: usize, opts: EigenOptions) -> Result<Eigenpairs> {
    let (pairs, applications) = solve(op, count, opts)?;
    let scale = op.grid().cell_volume().sqrt().recip();
    let grid = *op.grid();
    let mut out = Eigenpairs { values: vec![], vectors: vec![], residuals: vec![], applications };
    for (lambda, y, rel) in pairs {
        out.values.push(lambda);
        out.residuals.push(rel);
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = y.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        let sign = if pivot < 0.0 { -scale } else { scale };
        out.vectors.push(GridField::from_values(grid, y.into_iter().map(|v| v * sign).collect())?);
    }
    Ok(out)
}

/// Lowest `count` eigenvalues with multiplicity.
pub fn lowest_eigenvalues(op: &SchrodingerOperator, count: usize, tol: f64, seed: u64) -> Result<Spectrum> {
    let (pairs, applications) = solve(op, count, EigenOptions::new(tol, seed))?;
    Ok(Spectrum {
        values: pairs.iter().map(|p| p.0).collect(),
        residuals: pairs.iter().map(|p| p.2).collect(),
        applications,
    })
}

/// Lowest eigenpair `(lambda_1, phi_1)`.
pub fn ground_state(op: &SchrodingerOperator, tol: f64, seed: u64) -> Result<(f64, GridField)> {
    let mut pairs = lowest_eigenpairs(op, 1, EigenOptions::new(tol, seed))?;
    Ok((pairs.values[0], pairs.vectors.remove(0)))
}

/// Partial heat trace with a worst-case remainder bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatTrace {
    /// `sum_{k <= K} exp(-t lambda_k)`.
    pub leading: f64,
    /// `(N^d - K) exp(-t lambda_K)`.
    pub remainder: f64,
}

impl HeatTrace {
    /// Whether the remainder is within `tol` of the leading term.
    pub fn certified(&self, tol: f64) -> bool {
        self.remainder <= tol * self.leading
    }
}

/// Heat trace from already computed lowest eigenvalues of an operator with
/// `dim` degrees of freedom.
pub fn heat_trace_from_spectrum(values: &[f64], dim: usize, t: f64) -> HeatTrace {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let leading = crate::special::kahan_sum(sorted.iter().map(|l| (-t * l).exp()));
    let top = sorted.first().copied().unwrap_or(0.0);
    HeatTrace { leading, remainder: (dim - values.len()) as f64 * (-t * top).exp() }
}

pub fn heat_trace(op: &SchrodingerOperator, t: f64, count: usize, tol: f64, seed: u64) -> Result<HeatTrace> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat trace needs t > 0, got {t}")));
    }
    let spectrum = lowest_eigenvalues(op, count, tol, seed)?;
    Ok(heat_trace_from_spectrum(&spectrum.values, op.grid().len(), t))
}
