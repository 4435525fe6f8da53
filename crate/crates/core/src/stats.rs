//! Small statistical helpers shared by the experiment harness: KS tests,
//! normal utilities, sample moments and a least-squares slope.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value with Stephens' small-sample correction.
fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (j, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - j as f64 / n).max((j + 1) as f64 / n - f);
    }
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    }
}

/// One-sample KS test against `N(mean, sd^2)`.
pub fn ks_normal(samples: &[f64], mean: f64, sd: f64) -> KsResult {
    let normal = Normal::new(mean, sd).expect("sd must be positive");
    ks_one_sample(samples, |x| normal.cdf(x))
}

/// KS test against a normal with mean and standard deviation fitted to the sample.
pub fn ks_fitted_normal(samples: &[f64]) -> KsResult {
    let (mean, var) = mean_var(samples);
    ks_normal(samples, mean, var.sqrt())
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let n_eff = (na * nb) as f64 / (na + nb) as f64;
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
    }
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var)
}

/// Unbiased sample covariance of row vectors.
pub fn sample_covariance(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    let n = rows.len() as f64;
    let mean = rows.iter().fold(DVector::zeros(d), |acc, r| acc + r) / n;
    let mut cov = DMatrix::zeros(d, d);
    for r in rows {
        let c = r - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov / (n - 1.0).max(1.0)
}

/// `||a - b||_F / ||b||_F`.
pub fn frobenius_rel_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_pdf(x: f64, sd: f64) -> f64 {
    (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
