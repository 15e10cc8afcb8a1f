use std::f64::consts::PI;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn drift() -> BernsteinSpec {
    BernsteinSpec::drift(1.0).unwrap()
}

fn stable(a: f64) -> BernsteinSpec {
    BernsteinSpec::stable(a).unwrap()
}

/// Dense 1-d oracle: kinetic matrix from the explicit cosine sum.
fn dense_1d(grid: &TorusGrid, phi: &BernsteinSpec, v: &[f64]) -> DMatrix<f64> {
    let n = grid.side();
    let m = grid.m() as f64;
    let half = (n / 2) as i64;
    DMatrix::from_fn(n, n, |a, b| {
        let mut s = 0.0;
        for k in -half..(n as i64 - half) {
            let lam = phi.phi_eval((2.0 * PI * k as f64 / m).powi(2)).unwrap_or(0.0);
            s += lam * (2.0 * PI * k as f64 * (a as f64 - b as f64) / n as f64).cos();
        }
        s / n as f64 + if a == b { v[a] } else { 0.0 }
    })
}

fn dense_spectrum(mat: DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = SymmetricEigen::new(mat).eigenvalues.iter().cloned().collect();
    e.sort_by(f64::total_cmp);
    e
}

fn gaussian_image_sum(m: f64, t: f64, delta: &[f64]) -> f64 {
    delta
        .iter()
        .map(|&dl| {
            (-200..=200)
                .map(|k| {
                    let r = dl + k as f64 * m;
                    (-r * r / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
                })
                .sum::<f64>()
        })
        .product()
}

#[test]
fn grid_validation() {
    assert!(TorusGrid::new(0, 1, 8).is_err());
    assert!(TorusGrid::new(4, 4, 8).is_err());
    assert!(TorusGrid::new(512, 3, 8).is_err());
    let g = TorusGrid::new(4, 2, 8).unwrap();
    assert_eq!(g.side(), 32);
    assert_eq!(g.len(), 1024);
    // Lattice sites sit on nodes.
    assert_eq!(g.node_position(24 * 32 + 8), [3.0, 1.0, 0.0]);
}

#[test]
fn kinetic_eigenvalue_examples() {
    assert_eq!(kinetic_eigenvalues(1, &drift(), 1, 1).unwrap(), vec![0.0]);
    let e = kinetic_eigenvalues(2, &drift(), 2, 1).unwrap();
    assert_eq!(e[0], 0.0);
    assert_relative_eq!(e[1], PI * PI, max_relative = 1e-14);
    let e = kinetic_eigenvalues(1, &stable(1.0), 2, 1).unwrap();
    assert_relative_eq!(e[1], 2.0 * PI, max_relative = 1e-14);
    let e = kinetic_eigenvalues(3, &drift(), 9, 2).unwrap();
    assert_eq!(e[..5].iter().filter(|&&x| x > 0.0 && x < 5.0).count(), 4);
}

#[test]
fn laplacian_eigenvalues_scale_with_side() {
    let base = laplacian_eigenvalues(1, 100, 3);
    for m in [1usize, 2, 4, 8] {
        let e = laplacian_eigenvalues(m, 100, 3);
        for (a, b) in e.iter().zip(&base) {
            assert_relative_eq!(*a, b / (m * m) as f64, max_relative = 1e-12);
        }
    }
}

#[test]
fn heat_kernel_matches_gaussian_images() {
    let g = TorusGrid::new(10, 1, 8).unwrap();
    let v = torus_heat_kernel(&g, &drift(), 1.0, &[0.3], &[0.3]).unwrap();
    assert_relative_eq!(v, (4.0 * PI).powf(-0.5), max_relative = 1e-10);
    for d in [1usize, 2] {
        for m in [2usize, 4] {
            let g = TorusGrid::new(m, d, 1).unwrap();
            for t in [0.1, 1.0, 10.0] {
                let x = vec![0.1; d];
                let y: Vec<f64> = (0..d).map(|i| 0.37 + 0.9 * i as f64 * m as f64 / 2.0).collect();
                let delta: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - a).collect();
                let p = torus_heat_kernel(&g, &drift(), t, &x, &y).unwrap();
                assert_relative_eq!(p, gaussian_image_sum(m as f64, t, &delta), max_relative = 1e-8);
            }
        }
    }
}

#[test]
fn heat_kernel_symmetric_and_periodic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = TorusGrid::new(3, 2, 1).unwrap();
    let phi = stable(1.0);
    for _ in 0..100 {
        let x = [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)];
        let y = [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)];
        let a = torus_heat_kernel(&g, &phi, 0.5, &x, &y).unwrap();
        let b = torus_heat_kernel(&g, &phi, 0.5, &y, &x).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }
    let a = torus_heat_kernel(&g, &phi, 0.5, &[0.2, 1.1], &[2.0, 0.4]).unwrap();
    let b = torus_heat_kernel(&g, &phi, 0.5, &[3.2, 1.1], &[2.0, 0.4]).unwrap();
    assert_relative_eq!(a, b, max_relative = 1e-12);
}

#[test]
fn image_tail_bound_dominates_direct_sum() {
    for &(m, n, t, d) in &[(4usize, 1usize, 0.25, 1usize), (2, 3, 1.0, 2), (1, 1, 1e4, 3), (3, 2, 5.0, 2)] {
        let bound = gaussian_image_tail_bound(m, n, t, d).unwrap();
        for f in [0.0, 0.5, 0.99] {
            let (mut full, mut inner) = (1.0, 1.0);
            for _ in 0..d {
                let (mut sf, mut si) = (0.0, 0.0);
                for k in -10_000i64..=10_000 {
                    let r = f * m as f64 + (k * m as i64) as f64;
                    let v = (-r * r / (4.0 * t)).exp() / (4.0 * PI * t).sqrt();
                    sf += v;
                    if k.unsigned_abs() as usize <= n {
                        si += v;
                    }
                }
                full *= sf;
                inner *= si;
            }
            assert!(full - inner <= bound, "tail {} > bound {bound}", full - inner);
        }
    }
    let mut prev = f64::INFINITY;
    for n in 1..10 {
        let b = gaussian_image_tail_bound(3, n, 2.0, 2).unwrap();
        assert!(b <= prev);
        prev = b;
    }
}

#[test]
fn apply_h_examples() {
    let g = TorusGrid::new(2, 2, 4).unwrap();
    let k = SpectralOperator::new(g, stable(1.3));
    assert_eq!(k.multiplier()[0], 0.0);
    let h = SchrodingerOperator::free(k.clone());
    let out = h.apply_h(&GridField::constant(g, 2.5)).unwrap();
    assert!(out.values().iter().all(|v| v.abs() < 1e-12));

    let k0 = [1.0, -2.0];
    let mode = GridField::from_fn(g, |x| (2.0 * PI * (k0[0] * x[0] + k0[1] * x[1]) / 2.0).cos());
    let lam = stable(1.3).phi_eval((2.0 * PI / 2.0).powi(2) * 5.0).unwrap();
    let out = h.apply_h(&mode).unwrap();
    for (a, b) in out.values().iter().zip(mode.values()) {
        assert!((a - lam * b).abs() < 1e-11);
    }

    let hv = SchrodingerOperator::new(k.clone(), GridField::constant(g, 0.7)).unwrap();
    let psi = GridField::from_fn(g, |x| (x[0] * 3.0).sin() + x[1]);
    let a = hv.apply_h(&psi).unwrap();
    let b = h.apply_h(&psi).unwrap();
    for ((a, b), p) in a.values().iter().zip(b.values()).zip(psi.values()) {
        assert!((a - b - 0.7 * p).abs() < 1e-12);
    }
    let other = GridField::zeros(TorusGrid::new(2, 2, 2).unwrap());
    assert!(matches!(h.apply_h(&other), Err(Error::Usage(_))));
    assert!(SchrodingerOperator::new(k, GridField::constant(g, -1.0)).is_err());
}

#[test]
fn apply_h_is_self_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = TorusGrid::new(3, 2, 4).unwrap();
    let v = GridField::from_fn(g, |x| if x[0] < 1.0 { 2.0 } else { 0.0 });
    let h = SchrodingerOperator::new(SpectralOperator::new(g, stable(0.8)), v).unwrap();
    for _ in 0..5 {
        let a = GridField::from_values(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let b = GridField::from_values(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let l = h.apply_h(&a).unwrap().inner(&b).unwrap();
        let r = a.inner(&h.apply_h(&b).unwrap()).unwrap();
        assert_relative_eq!(l, r, max_relative = 1e-10);
    }
}

#[test]
fn apply_matches_dense_oracle_3d() {
    let g = TorusGrid::new(1, 3, 4).unwrap();
    let phi = stable(1.5);
    let h = SchrodingerOperator::free(SpectralOperator::new(g, phi.clone()));
    let psi = GridField::from_fn(g, |x| (x[0] + 2.0 * x[1] * x[2]).exp());
    let out = h.apply_h(&psi).unwrap();
    let n = g.side() as i64;
    for idx in [0usize, 5, 37, 63] {
        let xa = g.unflatten(idx);
        let mut s = 0.0;
        for (jb, pb) in psi.values().iter().enumerate() {
            let xb = g.unflatten(jb);
            for k0 in -2..2i64 {
                for k1 in -2..2i64 {
                    for k2 in -2..2i64 {
                        let q = (k0 * k0 + k1 * k1 + k2 * k2) as f64;
                        let lam = if q == 0.0 { 0.0 } else { phi.phi_eval(4.0 * PI * PI * q).unwrap() };
                        let ph = [k0, k1, k2]
                            .iter()
                            .zip(xa.iter().zip(&xb))
                            .map(|(k, (a, b))| *k as f64 * (*a as f64 - *b as f64))
                            .sum::<f64>();
                        s += lam * (2.0 * PI * ph / n as f64).cos() * pb;
                    }
                }
            }
        }
        assert_relative_eq!(out.values()[idx], s / g.len() as f64, max_relative = 1e-10, epsilon = 1e-10);
    }
}

#[test]
fn ground_state_examples() {
    let g = TorusGrid::new(2, 1, 8).unwrap();
    let k = SpectralOperator::new(g, drift());
    let (l, phi) = ground_state(&SchrodingerOperator::free(k.clone()), 1e-10, 1).unwrap();
    assert!(l.abs() < 1e-10);
    assert_relative_eq!(phi.norm(), 1.0, max_relative = 1e-12);
    let (l, _) = ground_state(&SchrodingerOperator::new(k.clone(), GridField::constant(g, 3.5)).unwrap(), 1e-10, 2).unwrap();
    assert_relative_eq!(l, 3.5, max_relative = 1e-10);
    let v = GridField::constant(g, 1.0);
    let op = SchrodingerOperator::new(k, v.clone()).unwrap();
    let (l, phi) = ground_state(&op, 1e-10, 3).unwrap();
    let oracle = dense_spectrum(dense_1d(&g, &drift(), v.values()));
    assert_relative_eq!(l, oracle[0], max_relative = 1e-9);
    assert_relative_eq!(l, 1.0, max_relative = 1e-9);
    let r = op.apply_h(&phi).unwrap();
    let res: f64 = r.values().iter().zip(phi.values()).map(|(a, b)| (a - l * b).powi(2)).sum::<f64>();
    assert!((res * g.cell_volume()).sqrt() <= 1e-10 * l.max(1.0));
}

#[test]
fn lowest_eigenvalues_match_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (m, n, phi) in [(2usize, 8usize, drift()), (5, 4, stable(0.7)), (3, 16, BernsteinSpec::relativistic(1.0, 1.0).unwrap())] {
        let g = TorusGrid::new(m, 1, n).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|i| if (i / n) % 2 == 0 { rng.gen_range(0.0..3.0) } else { 0.0 }).collect();
        let op = SchrodingerOperator::new(SpectralOperator::new(g, phi.clone()), GridField::from_values(g, v.clone()).unwrap()).unwrap();
        let oracle = dense_spectrum(dense_1d(&g, &phi, &v));
        let got = lowest_eigenvalues(&op, 6, 1e-10, 5).unwrap();
        for (a, b) in got.values.iter().zip(&oracle) {
            assert_relative_eq!(*a, *b, max_relative = 1e-8, epsilon = 1e-9);
        }
        assert!(got.values.iter().all(|&x| x >= got.values[0] - 1e-12 && got.values[0] >= -1e-10));
    }
}

#[test]
fn free_spectrum_matches_kinetic_eigenvalues() {
    let g = TorusGrid::new(2, 1, 8).unwrap();
    let op = SchrodingerOperator::free(SpectralOperator::new(g, drift()));
    let got = lowest_eigenvalues(&op, 3, 1e-10, 9).unwrap();
    assert!(got.values[0].abs() < 1e-9);
    assert_relative_eq!(got.values[1], PI * PI, max_relative = 1e-9);
    assert_relative_eq!(got.values[2], PI * PI, max_relative = 1e-9);

    // Fourfold degenerate level in d = 2 needs the complement search.
    let g = TorusGrid::new(2, 2, 4).unwrap();
    let phi = stable(1.2);
    let op = SchrodingerOperator::free(SpectralOperator::new(g, phi.clone()));
    let got = lowest_eigenvalues(&op, 9, 1e-9, 4).unwrap();
    let want = kinetic_eigenvalues(2, &phi, 9, 2).unwrap();
    for (a, b) in got.values.iter().zip(&want) {
        assert_relative_eq!(*a, *b, max_relative = 1e-8, epsilon = 1e-9);
    }
}

#[test]
fn whole_spectrum_of_small_operator() {
    let g = TorusGrid::new(1, 1, 8).unwrap();
    let v: Vec<f64> = (0..8).map(|i| i as f64 * 0.3).collect();
    let op = SchrodingerOperator::new(SpectralOperator::new(g, drift()), GridField::from_values(g, v.clone()).unwrap()).unwrap();
    let got = lowest_eigenvalues(&op, 8, 1e-10, 1).unwrap();
    let oracle = dense_spectrum(dense_1d(&g, &drift(), &v));
    for (a, b) in got.values.iter().zip(&oracle) {
        assert_relative_eq!(*a, *b, max_relative = 1e-9, epsilon = 1e-9);
    }
}

#[test]
fn heat_trace_examples() {
    let g = TorusGrid::new(1, 1, 8).unwrap();
    let k = SpectralOperator::new(g, drift());
    let free = heat_trace(&SchrodingerOperator::free(k.clone()), 1.0, 5, 1e-10, 1).unwrap();
    let oracle: f64 = (-3i64..=3).map(|j| (-4.0 * PI * PI * (j * j) as f64).exp()).sum::<f64>()
        - (-4.0 * PI * PI * 9.0f64).exp();
    assert_relative_eq!(free.leading, oracle, max_relative = 1e-10);
    assert!(free.certified(1e-10));

    let shifted = heat_trace(&SchrodingerOperator::new(k.clone(), GridField::constant(g, 0.4)).unwrap(), 1.0, 5, 1e-10, 1).unwrap();
    assert_relative_eq!(shifted.leading, (-0.4f64).exp() * free.leading, max_relative = 1e-9);

    let v = GridField::from_fn(g, |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
    let op = SchrodingerOperator::new(k, v).unwrap();
    let (l1, _) = ground_state(&op, 1e-10, 1).unwrap();
    let t = 20.0;
    let tr = heat_trace(&op, t, 3, 1e-10, 1).unwrap();
    assert!(tr.leading <= free.leading);
    assert_relative_eq!(tr.leading, (-t * l1).exp(), max_relative = 1e-6);
}

#[test]
fn rayleigh_quotient_bounds_ground_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = TorusGrid::new(4, 1, 8).unwrap();
    let v = GridField::from_values(g, (0..g.len()).map(|_| rng.gen_range(0.0..2.0)).collect()).unwrap();
    let op = SchrodingerOperator::new(SpectralOperator::new(g, stable(1.0)), v).unwrap();
    let (l1, _) = ground_state(&op, 1e-10, 1).unwrap();
    for _ in 0..20 {
        let psi = GridField::from_values(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        assert!(l1 <= op.rayleigh_quotient(&psi).unwrap() + 1e-12);
    }
}

#[test]
fn field_binary_round_trip() {
    let g = TorusGrid::new(3, 2, 2).unwrap();
    let f = GridField::from_fn(g, |x| x[0] - 2.0 * x[1]);
    let mut bytes = Vec::new();
    f.write_to(&mut bytes).unwrap();
    assert_eq!(bytes.len(), 32 + 8 * 36);
    assert_eq!(&bytes[..8], &2u64.to_le_bytes());
    assert_eq!(&bytes[24..32], &6u64.to_le_bytes());
    assert_eq!(GridField::read_from(&bytes[..]).unwrap(), f);
    assert!(GridField::read_from(&bytes[..40]).is_err());
}
