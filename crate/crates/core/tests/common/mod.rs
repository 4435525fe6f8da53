#![allow(dead_code)]

use admix_core::{AlleleFreqMatrix, AncestryMatrix, GenotypeMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row on the simplex with every entry at least `floor`.
pub fn random_simplex(k: usize, floor: f64, rng: &mut impl Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| floor + (1.0 - k as f64 * floor) * v / s).collect()
}

pub fn random_q(n: usize, k: usize, floor: f64, rng: &mut impl Rng) -> AncestryMatrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| random_simplex(k, floor, rng)).collect();
    AncestryMatrix::from_rows(&rows).unwrap()
}

pub fn random_p(k: usize, m: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> AlleleFreqMatrix {
    AlleleFreqMatrix::new(DMatrix::from_fn(k, m, |_, _| rng.random_range(lo..hi))).unwrap()
}

/// Binomial(2, c) draws straight from the definition, independent of the
/// library generator.
pub fn draw_genotypes(q: &DMatrix<f64>, p: &DMatrix<f64>, rng: &mut impl Rng) -> GenotypeMatrix {
    let (n, m) = (q.nrows(), p.ncols());
    let mut counts = Vec::with_capacity(n * m);
    for i in 0..n {
        for mm in 0..m {
            let c: f64 = (0..q.ncols()).map(|k| q[(i, k)] * p[(k, mm)]).sum();
            let mut x = 0u8;
            for _ in 0..2 {
                if rng.random::<f64>() < c {
                    x += 1;
                }
            }
            counts.push(x);
        }
    }
    GenotypeMatrix::new(n, m, counts).unwrap()
}

/// Plain log-likelihood from raw matrices (no validation, no clipping).
pub fn oracle_ll(x: &GenotypeMatrix, q: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let mut ll = 0.0;
    for i in 0..q.nrows() {
        for m in 0..p.ncols() {
            let Some(g) = x.get(i, m) else { continue };
            let c: f64 = (0..q.ncols()).map(|k| q[(i, k)] * p[(k, m)]).sum();
            let g = g as f64;
            if g > 0.0 {
                ll += g * c.ln();
            }
            if g < 2.0 {
                ll += (2.0 - g) * (1.0 - c).ln();
            }
        }
    }
    ll
}

/// Oracle log-likelihood of row `i` as a function of its first K-1 entries.
pub fn ll_reduced_row(x: &GenotypeMatrix, q: &DMatrix<f64>, p: &DMatrix<f64>, i: usize, t: &[f64]) -> f64 {
    let mut qq = q.clone();
    let k = q.ncols();
    for (j, &v) in t.iter().enumerate() {
        qq[(i, j)] = v;
    }
    qq[(i, k - 1)] = 1.0 - t.iter().sum::<f64>();
    oracle_ll(x, &qq, p)
}

pub fn central_gradient(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(at.len());
    for j in 0..at.len() {
        let mut a = at.to_vec();
        let mut b = at.to_vec();
        a[j] += h;
        b[j] -= h;
        g[j] = (f(&a) - f(&b)) / (2.0 * h);
    }
    g
}

pub fn central_hessian(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> DMatrix<f64> {
    let d = at.len();
    let mut hm = DMatrix::zeros(d, d);
    let eval = |dj: usize, sj: f64, dk: usize, sk: f64| {
        let mut v = at.to_vec();
        v[dj] += sj * h;
        v[dk] += sk * h;
        f(&v)
    };
    for j in 0..d {
        for k in 0..d {
            hm[(j, k)] = (eval(j, 1.0, k, 1.0) - eval(j, 1.0, k, -1.0) - eval(j, -1.0, k, 1.0) + eval(j, -1.0, k, -1.0))
                / (4.0 * h * h);
        }
    }
    hm
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}
