//! Limit laws of `sqrt(M) (q_hat - q0)`.
//!
//! In the interior the law is `N(0, Gamma^-1)`. When some `q0_k` sit on the
//! boundary the law is that of
//! `lambda_hat = argmin_{lambda in Lambda} (lambda - Z)^T Gamma (lambda - Z)`,
//! `Z ~ N(0, Gamma^-1)`, where `Lambda` is the tangent cone
//! `{v_i >= 0 (i in K_min), v_j <= 0 (j in K_max)}`. The projection is
//! solved exactly by enumerating active sets, so coordinates pinned at 0
//! are exactly 0 and the atoms of the law are well defined.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{dim_err, Error, Result};
use crate::fisher::{is_pd, FisherBlocks};
use crate::model::AlleleFreqMatrix;
use crate::stats::{normal_pdf, quantile_sorted, standard_normal_quantile};

/// Upper bound on `|K_min| + |K_max|` for exhaustive active-set search.
pub const MAX_CONSTRAINTS: usize = 12;

/// Sign constraints of the tangent cone in the reduced `K - 1` coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConeSpec {
    /// Reduced coordinates constrained to be `>= 0`.
    pub k_min: Vec<usize>,
    /// Reduced coordinates constrained to be `<= 0`.
    pub k_max: Vec<usize>,
    pub dim: usize,
    /// Population label of each reduced coordinate.
    pub labels: Vec<usize>,
    /// Population eliminated through the simplex constraint.
    pub dropped: usize,
}

impl ConeSpec {
    pub fn new(dim: usize, mut k_min: Vec<usize>, mut k_max: Vec<usize>) -> Result<Self> {
        k_min.sort_unstable();
        k_max.sort_unstable();
        k_min.dedup();
        k_max.dedup();
        if k_min.iter().chain(&k_max).any(|&j| j >= dim) {
            return dim_err("cone index out of range");
        }
        if k_min.iter().any(|j| k_max.contains(j)) {
            return Err(Error::InvalidInput("K_min and K_max must be disjoint".into()));
        }
        if k_min.len() + k_max.len() > MAX_CONSTRAINTS {
            return Err(Error::Unsupported(format!(
                "at most {MAX_CONSTRAINTS} boundary constraints are supported"
            )));
        }
        Ok(Self {
            k_min,
            k_max,
            dim,
            labels: (0..dim).collect(),
            dropped: dim,
        })
    }

    pub fn unconstrained(dim: usize) -> Self {
        Self {
            k_min: Vec::new(),
            k_max: Vec::new(),
            dim,
            labels: (0..dim).collect(),
            dropped: dim,
        }
    }

    /// Cone of an ancestry vector. The largest coordinate is eliminated so
    /// that the dropped population has positive ancestry; coordinates within
    /// `eps_boundary` of 0 or 1 are constrained.
    pub fn from_ancestry(q0: &[f64], eps_boundary: f64) -> Result<Self> {
        let k = q0.len();
        if k < 2 {
            return Err(Error::InvalidInput("need K >= 2".into()));
        }
        let dropped = (0..k)
            .max_by(|&a, &b| q0[a].total_cmp(&q0[b]).then(b.cmp(&a)))
            .expect("K >= 2");
        let labels: Vec<usize> = (0..k).filter(|&kk| kk != dropped).collect();
        let k_min = (0..k - 1).filter(|&j| q0[labels[j]] <= eps_boundary).collect();
        let k_max = (0..k - 1).filter(|&j| q0[labels[j]] >= 1.0 - eps_boundary).collect();
        let mut cone = Self::new(k - 1, k_min, k_max)?;
        cone.labels = labels;
        cone.dropped = dropped;
        Ok(cone)
    }

    pub fn n_constraints(&self) -> usize {
        self.k_min.len() + self.k_max.len()
    }

    pub fn is_constrained(&self, j: usize) -> bool {
        self.k_min.contains(&j) || self.k_max.contains(&j)
    }

    pub fn is_empty(&self) -> bool {
        self.n_constraints() == 0
    }

    /// Population order with the dropped population last.
    pub fn population_order(&self) -> Vec<usize> {
        let mut order = self.labels.clone();
        order.push(self.dropped);
        order
    }

    /// Reorders frequency rows into [`Self::population_order`].
    pub fn relabel_frequencies(&self, p: &AlleleFreqMatrix) -> Result<AlleleFreqMatrix> {
        let order = self.population_order();
        if order.len() != p.k() {
            return dim_err("cone and frequency matrix disagree on K");
        }
        let pm = p.as_matrix();
        AlleleFreqMatrix::new(DMatrix::from_fn(p.k(), pm.ncols(), |r, m| pm[(order[r], m)]))
    }

    pub fn relabel_ancestry(&self, q: &[f64]) -> Vec<f64> {
        self.population_order().iter().map(|&k| q[k]).collect()
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.k_min.iter().all(|&i| v[i] >= -tol) && self.k_max.iter().all(|&j| v[j] <= tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianLaw {
    #[serde(serialize_with = "ser_matrix")]
    pub covariance: DMatrix<f64>,
    /// `sqrt(diag(covariance))`: standard deviations of the scaled errors.
    pub asymptotic_sd: Vec<f64>,
    /// Standard errors of the estimates themselves, when the scaling
    /// (`sqrt(M)` for ancestries, `sqrt(N)` for frequencies) is known.
    pub std_errors: Option<Vec<f64>>,
}

pub(crate) fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Gaussian law with covariance `gamma^-1`.
pub fn interior_law(gamma: &DMatrix<f64>) -> Result<GaussianLaw> {
    if !gamma.is_square() {
        return dim_err("information matrix must be square");
    }
    if !is_pd(gamma) {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = symmetrize(gamma).cholesky().ok_or(Error::NotPositiveDefinite)?;
    let covariance = symmetrize(&chol.inverse());
    let asymptotic_sd = covariance.diagonal().iter().map(|v| v.sqrt()).collect();
    Ok(GaussianLaw {
        covariance,
        asymptotic_sd,
        std_errors: None,
    })
}

/// Gaussian law from information blocks; singular blocks are reported by
/// unit. Also fills the standard errors of the estimates.
pub fn interior_law_from_blocks(blocks: &FisherBlocks) -> Result<GaussianLaw> {
    let inverses = blocks.inverse_blocks(false)?;
    let dim = blocks.dimension();
    let mut covariance = DMatrix::zeros(dim, dim);
    let mut std_errors = Vec::with_capacity(dim);
    let mut at = 0;
    let n_q = blocks.q_blocks.len();
    for (b, inv) in inverses.iter().enumerate() {
        let d = inv.nrows();
        covariance.view_mut((at, at), (d, d)).copy_from(&symmetrize(inv));
        let scale = if b < n_q {
            blocks.q_normalizer
        } else {
            blocks.p_normalizer
        } as f64;
        std_errors.extend(inv.diagonal().iter().map(|v| (v / scale).sqrt()));
        at += d;
    }
    let asymptotic_sd = covariance.diagonal().iter().map(|v| v.sqrt()).collect();
    Ok(GaussianLaw {
        covariance,
        asymptotic_sd,
        std_errors: Some(std_errors),
    })
}

fn objective(lambda: &DVector<f64>, z: &DVector<f64>, gamma: &DMatrix<f64>) -> f64 {
    let d = lambda - z;
    (d.transpose() * gamma * &d)[(0, 0)]
}

/// Candidate minimizer with the coordinates in `pinned` fixed at 0.
fn face_minimizer(z: &DVector<f64>, gamma: &DMatrix<f64>, pinned: &[usize]) -> Option<DVector<f64>> {
    let n = z.len();
    let free: Vec<usize> = (0..n).filter(|j| !pinned.contains(j)).collect();
    let mut lambda = DVector::zeros(n);
    if free.is_empty() {
        return Some(lambda);
    }
    // Gamma_FF (lambda_F - z_F) = Gamma_FA z_A
    let g_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| gamma[(free[a], free[b])]);
    let rhs = DVector::from_fn(free.len(), |a, _| {
        pinned.iter().map(|&j| gamma[(free[a], j)] * z[j]).sum::<f64>()
    });
    let delta = g_ff.cholesky()?.solve(&rhs);
    for (a, &j) in free.iter().enumerate() {
        lambda[j] = z[j] + delta[a];
    }
    Some(lambda)
}

/// KKT residual of `lambda` for the cone projection: stationarity on free
/// coordinates, multiplier signs and primal feasibility on constrained ones.
pub fn projection_kkt_residual(lambda: &DVector<f64>, z: &DVector<f64>, gamma: &DMatrix<f64>, cone: &ConeSpec) -> f64 {
    let grad = gamma * (lambda - z) * 2.0;
    let mut res: f64 = 0.0;
    for j in 0..lambda.len() {
        let pinned = cone.is_constrained(j) && lambda[j] == 0.0;
        if !pinned {
            res = res.max(grad[j].abs());
        } else if cone.k_min.contains(&j) {
            res = res.max(-grad[j]);
        } else {
            res = res.max(grad[j]);
        }
    }
    for &i in &cone.k_min {
        res = res.max(-lambda[i]);
    }
    for &j in &cone.k_max {
        res = res.max(lambda[j]);
    }
    res
}

/// Exact `argmin_{lambda in cone} (lambda - z)^T gamma (lambda - z)` by
/// exhaustive active-set search.
pub fn project_onto_cone(z: &DVector<f64>, gamma: &DMatrix<f64>, cone: &ConeSpec) -> Result<DVector<f64>> {
    if z.len() != cone.dim || gamma.shape() != (cone.dim, cone.dim) {
        return dim_err("z, gamma and cone dimensions disagree");
    }
    if cone.contains(z, 0.0) {
        return Ok(z.clone());
    }
    let constrained: Vec<usize> = cone.k_min.iter().chain(&cone.k_max).copied().collect();
    let scale = gamma.abs().max() * z.abs().max().max(1.0);
    let tol = 1e-11 * scale.max(1e-300);

    let mut masks: Vec<u32> = (0..1u32 << constrained.len()).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in masks {
        let pinned: Vec<usize> = constrained
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &j)| j)
            .collect();
        let lambda = face_minimizer(z, gamma, &pinned).ok_or(Error::NotPositiveDefinite)?;
        if !cone.contains(&lambda, 0.0) {
            continue;
        }
        let grad = gamma * (&lambda - z) * 2.0;
        let signs_ok = pinned.iter().all(|&j| {
            if cone.k_min.contains(&j) {
                grad[j] >= -tol
            } else {
                grad[j] <= tol
            }
        });
        if signs_ok {
            return Ok(lambda);
        }
        let obj = objective(&lambda, z, gamma);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, lambda));
        }
    }
    // Rounding can defeat the sign test; the best feasible face point is
    // then the minimizer.
    best.map(|(_, l)| l).ok_or(Error::NotPositiveDefinite)
}

/// Sampled law of the projected Gaussian.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectedLaw {
    #[serde(serialize_with = "ser_matrix")]
    pub gamma: DMatrix<f64>,
    pub cone: ConeSpec,
    #[serde(skip)]
    pub samples: Vec<DVector<f64>>,
    /// Probability of each non-empty set of pinned coordinates.
    #[serde(serialize_with = "ser_faces")]
    pub point_masses: BTreeMap<Vec<usize>, f64>,
    /// Probability that no constrained coordinate is pinned.
    pub continuous_mass: f64,
}

fn ser_faces<S: serde::Serializer>(faces: &BTreeMap<Vec<usize>, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Face<'a> {
        pinned: &'a [usize],
        probability: f64,
    }
    let v: Vec<Face> = faces
        .iter()
        .map(|(k, &p)| Face {
            pinned: k,
            probability: p,
        })
        .collect();
    v.serialize(s)
}

impl ProjectedLaw {
    /// Probability that reduced coordinate `j` is exactly 0.
    pub fn atom_probability(&self, j: usize) -> f64 {
        self.point_masses
            .iter()
            .filter(|(face, _)| face.contains(&j))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn marginal(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[j]).collect()
    }
}

const CHUNK: usize = 4096;

/// Draws `n_samples` of `Z ~ N(0, gamma^-1)`, projects each onto the cone
/// and tabulates which coordinates end up pinned. Deterministic in `seed`
/// regardless of thread count: chunk `c` uses ChaCha stream `c`.
pub fn boundary_law(gamma: &DMatrix<f64>, cone: &ConeSpec, n_samples: usize, seed: u64) -> Result<ProjectedLaw> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    if gamma.shape() != (cone.dim, cone.dim) {
        return dim_err("gamma and cone dimensions disagree");
    }
    let law = interior_law(gamma)?;
    let chol_cov = law.covariance.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol_cov.l();
    let dim = cone.dim;
    let n_chunks = n_samples.div_ceil(CHUNK);

    let chunks: Vec<Result<Vec<DVector<f64>>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n_samples - c * CHUNK);
            (0..len)
                .map(|_| {
                    let e = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                    let z = &l * e;
                    let lambda = project_onto_cone(&z, gamma, cone)?;
                    debug_assert!(
                        projection_kkt_residual(&lambda, &z, gamma, cone)
                            <= 1e-8 * gamma.abs().max().max(1.0) * z.abs().max().max(1.0)
                    );
                    Ok(lambda)
                })
                .collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(n_samples);
    for chunk in chunks {
        samples.extend(chunk?);
    }

    let constrained: Vec<usize> = cone.k_min.iter().chain(&cone.k_max).copied().collect();
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut continuous = 0usize;
    for s in &samples {
        let mut face: Vec<usize> = constrained.iter().copied().filter(|&j| s[j] == 0.0).collect();
        face.sort_unstable();
        if face.is_empty() {
            continuous += 1;
        } else {
            *counts.entry(face).or_default() += 1;
        }
    }
    let total = samples.len() as f64;
    Ok(ProjectedLaw {
        gamma: gamma.clone(),
        cone: cone.clone(),
        point_masses: counts.into_iter().map(|(f, c)| (f, c as f64 / total)).collect(),
        continuous_mass: continuous as f64 / total,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub mass: f64,
}

/// Equally spaced bins over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramGrid {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl HistogramGrid {
    pub fn edges(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.bins as f64;
        (0..=self.bins).map(|b| self.lo + w * b as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    Gaussian,
    Projected,
}

/// One-coordinate summary of a limit law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateSummary {
    pub coord: usize,
    pub population: usize,
    pub kind: LawKind,
    pub atom_probability: f64,
    /// Monte Carlo standard error of `atom_probability` (0 for exact laws).
    pub atom_std_error: f64,
    pub bins: Vec<Bin>,
    /// Normal density at bin midpoints (Gaussian laws only).
    pub density: Vec<f64>,
    pub quantiles: Quantiles,
    /// 95% interval for the ancestry estimate: `estimate + quantile / sqrt(M)`,
    /// clipped to [0, 1].
    pub interval: Option<[f64; 2]>,
}

pub enum Law<'a> {
    Gaussian(&'a GaussianLaw),
    Projected(&'a ProjectedLaw),
}

/// Back-transform context for confidence intervals of one ancestry row.
#[derive(Debug, Clone, Copy)]
pub struct BackTransform {
    pub estimate: f64,
    pub n_markers: usize,
}

pub fn summarize_law(
    law: Law<'_>,
    coord: usize,
    population: usize,
    grid: Option<HistogramGrid>,
    back: Option<BackTransform>,
) -> Result<CoordinateSummary> {
    let interval = |q: &Quantiles| {
        back.map(|b| {
            let s = (b.n_markers as f64).sqrt();
            [
                (b.estimate + q.q025 / s).clamp(0.0, 1.0),
                (b.estimate + q.q975 / s).clamp(0.0, 1.0),
            ]
        })
    };
    match law {
        Law::Gaussian(g) => {
            if coord >= g.covariance.nrows() {
                return dim_err("coordinate out of range");
            }
            let sd = g.covariance[(coord, coord)].sqrt();
            let grid = grid.unwrap_or(HistogramGrid {
                lo: -4.0 * sd,
                hi: 4.0 * sd,
                bins: 80,
            });
            let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let edges = grid.edges();
            let bins: Vec<Bin> = edges
                .windows(2)
                .map(|w| Bin {
                    left: w[0],
                    right: w[1],
                    mass: normal.cdf(w[1]) - normal.cdf(w[0]),
                })
                .collect();
            let density = edges.windows(2).map(|w| normal_pdf(0.5 * (w[0] + w[1]), sd)).collect();
            let z = standard_normal_quantile(0.975);
            let quantiles = Quantiles {
                q025: -z * sd,
                q50: 0.0,
                q975: z * sd,
            };
            Ok(CoordinateSummary {
                coord,
                population,
                kind: LawKind::Gaussian,
                atom_probability: 0.0,
                atom_std_error: 0.0,
                bins,
                density,
                interval: interval(&quantiles),
                quantiles,
            })
        }
        Law::Projected(p) => {
            if coord >= p.cone.dim {
                return dim_err("coordinate out of range");
            }
            if p.samples.is_empty() {
                return Err(Error::InvalidInput("law has no samples".into()));
            }
            let mut all = p.marginal(coord);
            let n = all.len() as f64;
            let pinned_possible = p.cone.is_constrained(coord);
            let continuous: Vec<f64> = all
                .iter()
                .copied()
                .filter(|&v| !(pinned_possible && v == 0.0))
                .collect();
            let atom = if pinned_possible {
                1.0 - continuous.len() as f64 / n
            } else {
                0.0
            };
            let grid = grid.unwrap_or_else(|| {
                let lo = continuous.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = continuous.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if continuous.is_empty() {
                    HistogramGrid { lo: -1.0, hi: 1.0, bins: 1 }
                } else {
                    let pad = 1e-9 * (hi - lo).abs().max(1.0);
                    HistogramGrid { lo: lo - pad, hi: hi + pad, bins: 60 }
                }
            });
            let edges = grid.edges();
            let width = (grid.hi - grid.lo) / grid.bins as f64;
            let mut counts = vec![0usize; grid.bins];
            for &v in &continuous {
                if v >= grid.lo && v <= grid.hi {
                    let b = (((v - grid.lo) / width) as usize).min(grid.bins - 1);
                    counts[b] += 1;
                }
            }
            let bins = edges
                .windows(2)
                .zip(&counts)
                .map(|(w, &c)| Bin {
                    left: w[0],
                    right: w[1],
                    mass: c as f64 / n,
                })
                .collect();
            all.sort_by(f64::total_cmp);
            let quantiles = Quantiles {
                q025: quantile_sorted(&all, 0.025),
                q50: quantile_sorted(&all, 0.5),
                q975: quantile_sorted(&all, 0.975),
            };
            Ok(CoordinateSummary {
                coord,
                population,
                kind: LawKind::Projected,
                atom_probability: atom,
                atom_std_error: (atom * (1.0 - atom) / n).sqrt(),
                bins,
                density: Vec::new(),
                interval: interval(&quantiles),
                quantiles,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn cone_from_hg00096_style_estimate() {
        let cone = ConeSpec::from_ancestry(&[0.937166, 0.000010, 0.062824], 1e-4).unwrap();
        assert_eq!(cone.dropped, 0);
        assert_eq!(cone.labels, vec![1, 2]);
        assert_eq!(cone.k_min, vec![0]);
        assert!(cone.k_max.is_empty());

        let cone = ConeSpec::from_ancestry(&[0.000010, 0.999990], 1e-4).unwrap();
        assert_eq!(cone.dropped, 1);
        assert_eq!(cone.k_min, vec![0]);
    }

    #[test]
    fn cone_rejects_overlap() {
        assert!(ConeSpec::new(3, vec![0, 1], vec![1]).is_err());
        assert!(ConeSpec::new(2, vec![2], vec![]).is_err());
    }

    #[test]
    fn interior_scalar_inverse() {
        let g = DMatrix::from_element(1, 1, 8.0);
        let law = interior_law(&g).unwrap();
        assert!((law.covariance[(0, 0)] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn interior_rejects_singular() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(interior_law(&g), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn feasible_point_is_fixed() {
        let g = spd(3, 1);
        let cone = ConeSpec::new(3, vec![0], vec![2]).unwrap();
        let z = DVector::from_vec(vec![0.5, -3.0, -0.2]);
        assert_eq!(project_onto_cone(&z, &g, &cone).unwrap(), z);
    }

    #[test]
    fn scalar_projection_is_positive_part() {
        let g = DMatrix::from_element(1, 1, 3.7);
        let cone = ConeSpec::new(1, vec![0], vec![]).unwrap();
        for z in [-2.0, -1e-9, 0.0, 0.4, 5.0] {
            let l = project_onto_cone(&DVector::from_element(1, z), &g, &cone).unwrap();
            assert_eq!(l[0], f64::max(z, 0.0));
        }
    }

    #[test]
    fn projection_homogeneous_and_idempotent() {
        let g = spd(4, 7);
        let cone = ConeSpec::new(4, vec![0, 1], vec![3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let z = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
            let l = project_onto_cone(&z, &g, &cone).unwrap();
            let l2 = project_onto_cone(&(&z * 2.5), &g, &cone).unwrap();
            assert!((l2 - &l * 2.5).norm() < 1e-10);
            assert_eq!(project_onto_cone(&l, &g, &cone).unwrap(), l);
            assert!(projection_kkt_residual(&l, &z, &g, &cone) < 1e-10);
        }
    }

    #[test]
    fn boundary_law_is_seed_deterministic() {
        let g = spd(2, 5);
        let cone = ConeSpec::new(2, vec![0], vec![]).unwrap();
        let a = boundary_law(&g, &cone, 10_000, 42).unwrap();
        let b = boundary_law(&g, &cone, 10_000, 42).unwrap();
        assert_eq!(a.samples, b.samples);
        let total: f64 = a.point_masses.values().sum::<f64>() + a.continuous_mass;
        assert!((total - 1.0).abs() < 1e-12);
        assert!(a.samples.iter().all(|s| cone.contains(s, 1e-12)));
    }

    #[test]
    fn gaussian_summary_quantile() {
        let law = interior_law(&DMatrix::from_element(1, 1, 8.0)).unwrap();
        let s = summarize_law(Law::Gaussian(&law), 0, 0, None, None).unwrap();
        assert!((s.quantiles.q975 - 1.959964 * (0.125f64).sqrt()).abs() < 1e-6);
        assert_eq!(s.atom_probability, 0.0);
    }

    #[test]
    fn projected_summary_masses() {
        let g = DMatrix::from_element(1, 1, 2.0);
        let cone = ConeSpec::new(1, vec![0], vec![]).unwrap();
        let law = boundary_law(&g, &cone, 20_000, 9).unwrap();
        let s = summarize_law(
            Law::Projected(&law),
            0,
            0,
            None,
            Some(BackTransform {
                estimate: 0.0,
                n_markers: 55,
            }),
        )
        .unwrap();
        let hist: f64 = s.bins.iter().map(|b| b.mass).sum();
        assert!((hist + s.atom_probability - 1.0).abs() < 1e-12);
        assert!((s.atom_probability - 0.5).abs() < 4.0 * s.atom_std_error);
        let [lo, hi] = s.interval.unwrap();
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
    }

    #[test]
    fn empty_samples_rejected() {
        let g = DMatrix::from_element(1, 1, 2.0);
        let cone = ConeSpec::new(1, vec![0], vec![]).unwrap();
        let mut law = boundary_law(&g, &cone, 10, 9).unwrap();
        law.samples.clear();
        assert!(summarize_law(Law::Projected(&law), 0, 0, None, None).is_err());
    }
}
