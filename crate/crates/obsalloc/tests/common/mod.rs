//! Random system generators shared by the integration tests.
#![allow(dead_code)]

use obsalloc::core::allocation::observability_matrix;
use obsalloc::core::linalg::{singular_values, spectral_norm};
use obsalloc::core::measurement::MeasurementMatrix;
use obsalloc::core::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let qr = gaussian(rng, n, n).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn scaled_to_norm(m: DMatrix<f64>, norm: f64) -> DMatrix<f64> {
    let current = spectral_norm(&m);
    m * (norm / current)
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    let min = sv.get(m.nrows().min(m.ncols()).saturating_sub(1)).copied().unwrap_or(0.0);
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv[0] / min
    }
}

/// `[B, AB, ..., A^{k-1} B]`.
pub fn krylov(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (r, m) = b.shape();
    let mut out = DMatrix::zeros(r, m * k);
    let mut p = b.clone();
    for i in 0..k {
        out.columns_mut(i * m, m).copy_from(&p);
        p = a * p;
    }
    out
}

/// Nonempty random subset of `0..r`, sorted.
pub fn random_subset(rng: &mut ChaCha8Rng, r: usize) -> Vec<usize> {
    let size = rng.random_range(1..=r);
    let mut all: Vec<usize> = (0..r).collect();
    all.shuffle(rng);
    let mut pick = all[..size].to_vec();
    pick.sort_unstable();
    pick
}

/// Over every nonempty `C`: the smallest singular value of `O(C)` above
/// `1e-9 sigma_max`, and the largest one at or below it.
pub fn observability_margins(a: &DMatrix<f64>) -> (f64, f64) {
    let r = a.nrows();
    let (mut min_signal, mut max_null) = (f64::INFINITY, 0.0f64);
    for mask in 1u32..(1 << r) {
        let coords = (0..r).filter(|&i| mask & (1 << i) != 0).collect();
        let c = MeasurementMatrix::new(r, coords).unwrap();
        let sv = singular_values(&observability_matrix(a, &c).unwrap().0);
        let cut = 1e-9 * sv[0];
        for &s in &sv {
            if s > cut {
                min_signal = min_signal.min(s);
            } else {
                max_null = max_null.max(s);
            }
        }
    }
    (min_signal, max_null)
}

/// Stable `A` made of small decoupled blocks (weighted cycles, distinct
/// diagonals, Jordan-like chains, dense blocks) under a random coordinate
/// permutation. Drawn until every nonempty `O(C)` has its nonzero singular
/// values at least `1e-2` and its null ones below `1e-12`, so thresholded
/// ranks are unambiguous.
pub fn structured_stable(rng: &mut ChaCha8Rng, r: usize) -> DMatrix<f64> {
    loop {
        let mut a = DMatrix::zeros(r, r);
        let mut o = 0;
        while o < r {
            let k = rng.random_range(1..=(r - o).min(4));
            let block = match rng.random_range(0..4) {
                0 => {
                    let rho = rng.random_range(0.5..0.95);
                    let mut blk = DMatrix::zeros(k, k);
                    for j in 0..k {
                        blk[((j + 1) % k, j)] = rho * rng.random_range(0.6..1.0);
                    }
                    blk
                }
                1 => {
                    let start = rng.random_range(-0.9..(0.9 - 0.3 * (k as f64 - 1.0)).max(-0.85));
                    DMatrix::from_fn(k, k, |i, j| if i == j { start + 0.3 * i as f64 } else { 0.0 })
                }
                2 => {
                    let lambda = rng.random_range(-0.5..0.5);
                    DMatrix::from_fn(k, k, |i, j| match j as isize - i as isize {
                        0 => lambda,
                        1 => 0.4,
                        _ => 0.0,
                    })
                }
                _ => {
                    let norm = rng.random_range(0.3..0.9);
                    scaled_to_norm(gaussian(rng, k, k), norm)
                }
            };
            a.view_mut((o, o), (k, k)).copy_from(&block);
            o += k;
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.shuffle(rng);
        let a = DMatrix::from_fn(r, r, |i, j| a[(perm[i], perm[j])]);
        if spectral_norm(&a) >= 1.0 {
            continue;
        }
        let (signal, null) = observability_margins(&a);
        if signal >= 1e-2 && null <= 1e-12 {
            return a;
        }
    }
}

fn eigenvalues(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-14, 100_000).expect("Schur iteration converges");
    schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
}

/// Greedy one-to-one matching distance between two eigenvalue multisets.
pub fn eigenvalue_mismatch(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let ea = eigenvalues(a);
    let mut eb = eigenvalues(b);
    let mut worst = 0.0f64;
    for (re, im) in ea {
        let (k, dist) = eb
            .iter()
            .enumerate()
            .map(|(k, &(r2, i2))| (k, ((re - r2).powi(2) + (im - i2).powi(2)).sqrt()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("same size");
        worst = worst.max(dist);
        eb.swap_remove(k);
    }
    worst
}
