//! Admixture Model data types, the binomial log-likelihood and its
//! derivatives.
//!
//! Genotypes count copies of the first allele at biallelic markers, so
//! `x[i][m] ~ Binomial(2, c[i][m])` with `c[i][m] = <q[i,.], p[., m]>`.
//! Derivatives are taken of the unnormalized sum
//! `sum_m x log c + (2 - x) log(1 - c)` (binomial coefficients dropped).
//! The q-direction uses the reduced parametrization `q_K = 1 - sum_{k<K} q_k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result, Unit};

/// Sentinel stored in a [`GenotypeMatrix`] for an unobserved genotype.
pub const MISSING: u8 = 9;

/// N x M matrix of reference-allele counts in {0, 1, 2}, with [`MISSING`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenotypeMatrix {
    n: usize,
    m: usize,
    counts: Vec<u8>,
}

impl GenotypeMatrix {
    /// Builds from row-major counts.
    pub fn new(n_individuals: usize, n_markers: usize, counts: Vec<u8>) -> Result<Self> {
        if n_individuals == 0 || n_markers == 0 {
            return Err(Error::InvalidInput(
                "genotype matrix must have at least one individual and one marker".into(),
            ));
        }
        if counts.len() != n_individuals * n_markers {
            return dim_err(format!(
                "{} counts for a {n_individuals}x{n_markers} genotype matrix",
                counts.len()
            ));
        }
        if let Some(pos) = counts.iter().position(|&x| x > 2 && x != MISSING) {
            return Err(Error::InvalidInput(format!(
                "genotype {} at individual {}, marker {} is not 0, 1, 2 or missing",
                counts[pos],
                pos / n_markers,
                pos % n_markers
            )));
        }
        Ok(Self {
            n: n_individuals,
            m: n_markers,
            counts,
        })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return dim_err("ragged genotype rows");
        }
        Self::new(rows.len(), m, rows.concat())
    }

    pub fn n_individuals(&self) -> usize {
        self.n
    }

    pub fn n_markers(&self) -> usize {
        self.m
    }

    /// Raw count, [`MISSING`] included.
    #[inline]
    pub fn raw(&self, i: usize, m: usize) -> u8 {
        self.counts[i * self.m + m]
    }

    #[inline]
    pub fn get(&self, i: usize, m: usize) -> Option<u8> {
        match self.raw(i, m) {
            MISSING => None,
            x => Some(x),
        }
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.counts[i * self.m..(i + 1) * self.m]
    }

    pub fn observed_in_row(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&x| x != MISSING).count()
    }

    pub fn observed_in_column(&self, m: usize) -> usize {
        (0..self.n).filter(|&i| self.raw(i, m) != MISSING).count()
    }

    pub fn n_observed(&self) -> usize {
        self.counts.iter().filter(|&&x| x != MISSING).count()
    }

    /// Keeps the first `n` individuals and first `m` markers.
    pub fn truncated(&self, n: usize, m: usize) -> Result<Self> {
        if n > self.n || m > self.m {
            return dim_err(format!(
                "cannot truncate {}x{} genotypes to {n}x{m}",
                self.n, self.m
            ));
        }
        let counts = (0..n)
            .flat_map(|i| self.row(i)[..m].iter().copied())
            .collect();
        Self::new(n, m, counts)
    }
}

/// N x K matrix of ancestry fractions; rows lie on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AncestryMatrix(DMatrix<f64>);

impl AncestryMatrix {
    pub const ROW_SUM_TOL: f64 = 1e-9;

    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        Self::with_tolerance(q, Self::ROW_SUM_TOL)
    }

    pub fn with_tolerance(q: DMatrix<f64>, tol: f64) -> Result<Self> {
        if q.nrows() == 0 || q.ncols() == 0 {
            return Err(Error::InvalidInput("empty ancestry matrix".into()));
        }
        for (i, row) in q.row_iter().enumerate() {
            if let Some(k) = row.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidInput(format!(
                    "ancestry q[{i}][{k}] = {} outside [0, 1]",
                    row[k]
                )));
            }
            let s = row.sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "ancestry row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(Self(q))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return dim_err("ragged ancestry rows");
        }
        Self::new(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
    }

    pub fn n_individuals(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.0.row(i).transpose()
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.0[(i, k)]
    }
}

/// K x M matrix of reference-allele frequencies.
///
/// On disk the ADMIXTURE `.P` layout is M x K; in memory populations are rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AlleleFreqMatrix(DMatrix<f64>);

impl AlleleFreqMatrix {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() == 0 || p.ncols() == 0 {
            return Err(Error::InvalidInput("empty allele frequency matrix".into()));
        }
        if let Some(pos) = p.iter().position(|v| !(0.0..=1.0).contains(v)) {
            let (k, m) = (pos % p.nrows(), pos / p.nrows());
            return Err(Error::InvalidInput(format!(
                "allele frequency p[{k}][{m}] = {} outside [0, 1]",
                p[(k, m)]
            )));
        }
        Ok(Self(p))
    }

    /// Builds from per-marker columns, each of length K.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let k = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != k) {
            return dim_err("ragged allele frequency columns");
        }
        Self::new(DMatrix::from_fn(k, cols.len(), |r, c| cols[c][r]))
    }

    pub fn k(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_markers(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn column(&self, m: usize) -> DVector<f64> {
        self.0.column(m).into_owned()
    }

    #[inline]
    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.0[(k, m)]
    }

    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.n_markers() {
            return dim_err(format!(
                "cannot keep {m} of {} markers",
                self.n_markers()
            ));
        }
        Self::new(self.0.columns(0, m).into_owned())
    }
}

/// N x M matrix of success probabilities `c = Q P`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessProbMatrix(DMatrix<f64>);

impl SuccessProbMatrix {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    #[inline]
    pub fn get(&self, i: usize, m: usize) -> f64 {
        self.0[(i, m)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub k_populations: usize,
    /// Iterates are kept in `[eps_clamp, 1 - eps_clamp]`.
    pub eps_clamp: f64,
    /// Estimates within this distance of 0 or 1 are reported as boundary.
    pub eps_boundary: f64,
    pub tol_simplex: f64,
}

impl ModelConfig {
    pub fn new(k_populations: usize) -> Self {
        Self {
            k_populations,
            eps_clamp: 1e-6,
            eps_boundary: 1e-4,
            tol_simplex: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_populations == 0 {
            return Err(Error::InvalidInput("K must be at least 1".into()));
        }
        if !(0.0 < self.eps_clamp && self.eps_clamp < self.eps_boundary && self.eps_boundary < 0.5)
        {
            return Err(Error::InvalidInput(format!(
                "need 0 < eps_clamp ({}) < eps_boundary ({}) < 0.5",
                self.eps_clamp, self.eps_boundary
            )));
        }
        if self.tol_simplex <= 0.0 {
            return Err(Error::InvalidInput("tol_simplex must be positive".into()));
        }
        Ok(())
    }
}

fn check_qp(q: &AncestryMatrix, p: &AlleleFreqMatrix) -> Result<()> {
    if q.k() != p.k() {
        return dim_err(format!("Q has K = {}, P has K = {}", q.k(), p.k()));
    }
    Ok(())
}

fn check_xqp(x: &GenotypeMatrix, q: &AncestryMatrix, p: &AlleleFreqMatrix) -> Result<()> {
    check_qp(q, p)?;
    if x.n_individuals() != q.n_individuals() || x.n_markers() != p.n_markers() {
        return dim_err(format!(
            "genotypes are {}x{}, Q has {} rows, P has {} markers",
            x.n_individuals(),
            x.n_markers(),
            q.n_individuals(),
            p.n_markers()
        ));
    }
    Ok(())
}

/// `<q_row, p[., m]>`, clipped into [0, 1] against rounding.
#[inline]
pub(crate) fn dot_qp(q_row: &[f64], p: &DMatrix<f64>, m: usize) -> f64 {
    let c: f64 = q_row.iter().enumerate().map(|(k, qk)| qk * p[(k, m)]).sum();
    c.clamp(0.0, 1.0)
}

pub fn success_probs(q: &AncestryMatrix, p: &AlleleFreqMatrix) -> Result<SuccessProbMatrix> {
    check_qp(q, p)?;
    let c = (q.as_matrix() * p.as_matrix()).map(|v| v.clamp(0.0, 1.0));
    Ok(SuccessProbMatrix(c))
}

/// `x log c + (2 - x) log(1 - c)` with `0 log 0 = 0`; `-inf` when a
/// positive coefficient meets a zero argument.
#[inline]
pub fn cell_log_likelihood(x: u8, c: f64) -> f64 {
    let x = f64::from(x);
    let mut ll = 0.0;
    if x > 0.0 {
        if c <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += x * c.ln();
    }
    if x < 2.0 {
        if c >= 1.0 {
            return f64::NEG_INFINITY;
        }
        ll += (2.0 - x) * (1.0 - c).ln();
    }
    ll
}

/// Score residual `x/c - (2-x)/(1-c)` and curvature weight
/// `x/c^2 + (2-x)/(1-c)^2` of one cell. `None` means -inf likelihood.
#[inline]
pub(crate) fn cell_terms(x: u8, c: f64) -> Option<(f64, f64)> {
    let x = f64::from(x);
    let (mut r, mut w) = (0.0, 0.0);
    if x > 0.0 {
        if c <= 0.0 {
            return None;
        }
        r += x / c;
        w += x / (c * c);
    }
    if x < 2.0 {
        if c >= 1.0 {
            return None;
        }
        let d = 1.0 - c;
        r -= (2.0 - x) / d;
        w += (2.0 - x) / (d * d);
    }
    Some((r, w))
}

/// Unnormalized log-likelihood of one individual over all observed markers.
pub(crate) fn row_log_likelihood(x: &GenotypeMatrix, i: usize, q_row: &[f64], p: &DMatrix<f64>) -> f64 {
    let mut ll = 0.0;
    for (m, &xm) in x.row(i).iter().enumerate() {
        if xm == MISSING {
            continue;
        }
        ll += cell_log_likelihood(xm, dot_qp(q_row, p, m));
        if ll == f64::NEG_INFINITY {
            break;
        }
    }
    ll
}

/// Unnormalized log-likelihood of one marker over all observed individuals.
pub(crate) fn column_log_likelihood(x: &GenotypeMatrix, m: usize, q: &DMatrix<f64>, p_col: &[f64]) -> f64 {
    let mut ll = 0.0;
    for i in 0..x.n_individuals() {
        let xm = x.raw(i, m);
        if xm == MISSING {
            continue;
        }
        let c: f64 = p_col.iter().enumerate().map(|(k, pk)| q[(i, k)] * pk).sum();
        ll += cell_log_likelihood(xm, c.clamp(0.0, 1.0));
        if ll == f64::NEG_INFINITY {
            break;
        }
    }
    ll
}

/// Sum over observed cells of `x log c + (2 - x) log(1 - c)`.
pub fn log_likelihood_sum(x: &GenotypeMatrix, q: &AncestryMatrix, p: &AlleleFreqMatrix) -> Result<f64> {
    check_xqp(x, q, p)?;
    let qm = q.as_matrix();
    let mut total = 0.0;
    let mut row = vec![0.0; q.k()];
    for i in 0..x.n_individuals() {
        row.iter_mut().enumerate().for_each(|(k, v)| *v = qm[(i, k)]);
        total += row_log_likelihood(x, i, &row, p.as_matrix());
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    Ok(total)
}

/// Log-likelihood normalized by `2 * (number of observed cells)`.
pub fn log_likelihood(x: &GenotypeMatrix, q: &AncestryMatrix, p: &AlleleFreqMatrix) -> Result<f64> {
    let total = log_likelihood_sum(x, q, p)?;
    let observed = x.n_observed();
    if observed == 0 {
        return Ok(0.0);
    }
    Ok(total / (2.0 * observed as f64))
}

fn interior_row(q: &AncestryMatrix, i: usize) -> Result<Vec<f64>> {
    let row: Vec<f64> = q.as_matrix().row(i).iter().copied().collect();
    if row.iter().any(|&v| v <= 0.0 || v >= 1.0) {
        return Err(Error::Boundary {
            unit: Unit::Individual,
            index: i,
        });
    }
    Ok(row)
}

/// `(p_{1,m} - p_{K,m}, ..., p_{K-1,m} - p_{K,m})`.
pub(crate) fn reduced_freq(p: &DMatrix<f64>, m: usize) -> DVector<f64> {
    let k = p.nrows();
    DVector::from_fn(k - 1, |j, _| p[(j, m)] - p[(k - 1, m)])
}

/// Gradient of the individual's log-likelihood in `(q_1, ..., q_{K-1})`.
pub fn grad_q(x: &GenotypeMatrix, q: &AncestryMatrix, p: &AlleleFreqMatrix, individual: usize) -> Result<DVector<f64>> {
    check_xqp(x, q, p)?;
    let row = interior_row(q, individual)?;
    let pm = p.as_matrix();
    let mut g = DVector::zeros(q.k() - 1);
    for (m, &xm) in x.row(individual).iter().enumerate() {
        if xm == MISSING {
            continue;
        }
        let (r, _) = cell_terms(xm, dot_qp(&row, pm, m)).ok_or(Error::InfiniteLikelihood {
            individual,
            marker: m,
        })?;
        g.axpy(r, &reduced_freq(pm, m), 1.0);
    }
    Ok(g)
}

/// Observed Hessian of the individual's log-likelihood in `(q_1, ..., q_{K-1})`.
pub fn hessian_q(x: &GenotypeMatrix, q: &AncestryMatrix, p: &AlleleFreqMatrix, individual: usize) -> Result<DMatrix<f64>> {
    check_xqp(x, q, p)?;
    let row = interior_row(q, individual)?;
    let pm = p.as_matrix();
    let km1 = q.k() - 1;
    let mut h = DMatrix::zeros(km1, km1);
    for (m, &xm) in x.row(individual).iter().enumerate() {
        if xm == MISSING {
            continue;
        }
        let (_, w) = cell_terms(xm, dot_qp(&row, pm, m)).ok_or(Error::InfiniteLikelihood {
            individual,
            marker: m,
        })?;
        let d = reduced_freq(pm, m);
        h.ger(-w, &d, &d, 1.0);
    }
    Ok(h)
}

fn marker_cells<'a>(
    x: &'a GenotypeMatrix,
    q: &'a AncestryMatrix,
    p_col: &'a DVector<f64>,
    marker: usize,
) -> impl Iterator<Item = Result<(usize, f64, f64)>> + 'a {
    (0..x.n_individuals()).filter_map(move |i| {
        let xm = x.get(i, marker)?;
        let c = (q.as_matrix().row(i) * p_col)[(0, 0)].clamp(0.0, 1.0);
        Some(
            cell_terms(xm, c)
                .map(|(r, w)| (i, r, w))
                .ok_or(Error::InfiniteLikelihood {
                    individual: i,
                    marker,
                }),
        )
    })
}

/// Gradient of the marker's log-likelihood in `(p_{1,m}, ..., p_{K,m})`.
pub fn grad_p(x: &GenotypeMatrix, q: &AncestryMatrix, p: &AlleleFreqMatrix, marker: usize) -> Result<DVector<f64>> {
    check_xqp(x, q, p)?;
    let p_col = p.column(marker);
    let mut g = DVector::zeros(q.k());
    for cell in marker_cells(x, q, &p_col, marker) {
        let (i, r, _) = cell?;
        g.axpy(r, &q.row(i), 1.0);
    }
    Ok(g)
}

/// Observed Hessian of the marker's log-likelihood in `(p_{1,m}, ..., p_{K,m})`.
pub fn hessian_p(x: &GenotypeMatrix, q: &AncestryMatrix, p: &AlleleFreqMatrix, marker: usize) -> Result<DMatrix<f64>> {
    check_xqp(x, q, p)?;
    let p_col = p.column(marker);
    let k = q.k();
    let mut h = DMatrix::zeros(k, k);
    for cell in marker_cells(x, q, &p_col, marker) {
        let (i, _, w) = cell?;
        let qi = q.row(i);
        h.ger(-w, &qi, &qi, 1.0);
    }
    Ok(h)
}
