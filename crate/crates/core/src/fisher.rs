//! Expected information blocks of the Admixture Model and checks of the
//! identifiability conditions that make them invertible.
//!
//! With `x ~ Bin(2, c)` the expected negative Hessian of one cell is
//! `2 / (c (1 - c))` times the outer product of the derivative of `c`.
//! Blocks are averaged over markers (ancestry blocks) or individuals
//! (frequency blocks), so they are O(1) regardless of sample size.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{dim_err, Error, Result, Unit};
use crate::model::{dot_qp, reduced_freq, AlleleFreqMatrix, AncestryMatrix};

/// Rank tolerance for linear-independence tests.
pub const RANK_TOL: f64 = 1e-8;

/// Reduced frequency vector `p_red = (p_1 - p_K, ..., p_{K-1} - p_K)` of
/// one marker and its outer product.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedFreqOuter {
    pub p_red: DVector<f64>,
    pub outer: DMatrix<f64>,
}

impl ReducedFreqOuter {
    pub fn new(p: &AlleleFreqMatrix, marker: usize) -> Self {
        let p_red = reduced_freq(p.as_matrix(), marker);
        let outer = &p_red * p_red.transpose();
        Self { p_red, outer }
    }
}

#[inline]
fn cell_weight(c: f64) -> f64 {
    if c > 0.0 && c < 1.0 {
        2.0 / (c * (1.0 - c))
    } else {
        // Degenerate marker: the printed formula keeps a bare factor 2.
        2.0
    }
}

/// Markers in `markers` whose success probability for `q_row` is 0 or 1.
pub fn degenerate_markers(q_row: &[f64], p: &AlleleFreqMatrix, markers: impl IntoIterator<Item = usize>) -> Vec<usize> {
    markers
        .into_iter()
        .filter(|&m| {
            let c = dot_qp(q_row, p.as_matrix(), m);
            c <= 0.0 || c >= 1.0
        })
        .collect()
}

/// Expected information of one ancestry row in `(q_1, ..., q_{K-1})`,
/// averaged over `markers`.
pub fn expected_info_q(q_row: &[f64], p: &AlleleFreqMatrix, markers: impl IntoIterator<Item = usize>) -> Result<DMatrix<f64>> {
    let k = p.k();
    if q_row.len() != k {
        return dim_err(format!("ancestry row has {} entries, K = {k}", q_row.len()));
    }
    let pm = p.as_matrix();
    let mut info = DMatrix::zeros(k - 1, k - 1);
    let mut count = 0usize;
    for m in markers {
        if m >= pm.ncols() {
            return dim_err(format!("marker {m} out of range"));
        }
        let w = cell_weight(dot_qp(q_row, pm, m));
        let d = reduced_freq(pm, m);
        info.ger(w, &d, &d, 1.0);
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidInput("empty marker range".into()));
    }
    Ok(info / count as f64)
}

/// Expected information of one frequency column in `(p_1, ..., p_K)`,
/// averaged over `individuals`.
pub fn expected_info_p(q: &AncestryMatrix, p_col: &[f64], individuals: impl IntoIterator<Item = usize>) -> Result<DMatrix<f64>> {
    let k = q.k();
    if p_col.len() != k {
        return dim_err(format!("frequency column has {} entries, K = {k}", p_col.len()));
    }
    let qm = q.as_matrix();
    let mut info = DMatrix::zeros(k, k);
    let mut count = 0usize;
    for i in individuals {
        if i >= qm.nrows() {
            return dim_err(format!("individual {i} out of range"));
        }
        let qi = q.row(i);
        let c: f64 = qi.iter().zip(p_col).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0);
        // Only binomially variable cells carry information here.
        if c > 0.0 && c < 1.0 {
            info.ger(2.0 / (c * (1.0 - c)), &qi, &qi, 1.0);
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidInput("empty individual range".into()));
    }
    Ok(info / count as f64)
}

/// Block-diagonal expected information of the estimated parameters.
#[derive(Debug, Clone, Serialize)]
pub struct FisherBlocks {
    /// `(individual, (K-1) x (K-1) block)` in ascending individual order.
    #[serde(serialize_with = "ser_blocks")]
    pub q_blocks: Vec<(usize, DMatrix<f64>)>,
    /// `(marker, K x K block)` in ascending marker order.
    #[serde(serialize_with = "ser_blocks")]
    pub p_blocks: Vec<(usize, DMatrix<f64>)>,
    /// Number of markers averaged in each q-block (M).
    pub q_normalizer: usize,
    /// Number of individuals averaged in each p-block (N).
    pub p_normalizer: usize,
    pub warnings: Vec<String>,
}

fn ser_blocks<S: serde::Serializer>(blocks: &[(usize, DMatrix<f64>)], s: S) -> std::result::Result<S::Ok, S::Error> {
    let v: Vec<(usize, Vec<Vec<f64>>)> = blocks
        .iter()
        .map(|(i, b)| (*i, b.row_iter().map(|r| r.iter().copied().collect()).collect()))
        .collect();
    v.serialize(s)
}

impl FisherBlocks {
    /// Evaluates the blocks at `(q, p)` for the listed estimated individuals
    /// and markers, averaging over all markers / individuals.
    pub fn at(q: &AncestryMatrix, p: &AlleleFreqMatrix, individuals: &[usize], markers: &[usize]) -> Result<Self> {
        if q.k() != p.k() {
            return dim_err("Q and P disagree on K");
        }
        let (n, m) = (q.n_individuals(), p.n_markers());
        let mut warnings = Vec::new();
        let mut q_blocks = Vec::with_capacity(individuals.len());
        for &i in individuals {
            let row: Vec<f64> = q.row(i).iter().copied().collect();
            let degenerate = degenerate_markers(&row, p, 0..m);
            if !degenerate.is_empty() {
                warnings.push(format!(
                    "individual {i}: {} marker(s) with success probability 0 or 1 enter with weight 2",
                    degenerate.len()
                ));
            }
            q_blocks.push((i, expected_info_q(&row, p, 0..m)?));
        }
        let mut p_blocks = Vec::with_capacity(markers.len());
        for &mm in markers {
            let col: Vec<f64> = p.column(mm).iter().copied().collect();
            p_blocks.push((mm, expected_info_p(q, &col, 0..n)?));
        }
        Ok(Self {
            q_blocks,
            p_blocks,
            q_normalizer: m,
            p_normalizer: n,
            warnings,
        })
    }

    pub fn dimension(&self) -> usize {
        self.q_blocks.iter().chain(&self.p_blocks).map(|(_, b)| b.nrows()).sum()
    }

    fn blocks(&self) -> impl Iterator<Item = (Unit, usize, &DMatrix<f64>)> {
        self.q_blocks
            .iter()
            .map(|(i, b)| (Unit::Individual, *i, b))
            .chain(self.p_blocks.iter().map(|(m, b)| (Unit::Marker, *m, b)))
    }

    /// Inverts block by block. A singular block is an error naming the
    /// unit unless `pseudo_inverse` is set.
    pub fn inverse_blocks(&self, pseudo_inverse: bool) -> Result<Vec<DMatrix<f64>>> {
        self.blocks()
            .map(|(unit, index, b)| invert_block(b, unit, index, pseudo_inverse))
            .collect()
    }

    /// Blocks that are not numerically positive definite.
    pub fn singular_blocks(&self) -> Vec<(Unit, usize, f64)> {
        self.blocks()
            .filter_map(|(unit, index, b)| {
                let (min, _) = eigen_range(b);
                (!is_pd(b)).then_some((unit, index, min))
            })
            .collect()
    }
}

pub(crate) fn eigen_range(b: &DMatrix<f64>) -> (f64, f64) {
    if b.is_empty() {
        return (0.0, 0.0);
    }
    let e = SymmetricEigen::new(b.clone()).eigenvalues;
    (e.min(), e.max())
}

/// Numerical positive definiteness: smallest eigenvalue above a relative floor.
pub fn is_pd(b: &DMatrix<f64>) -> bool {
    let (min, max) = eigen_range(b);
    min > 1e-12 * max.abs().max(1e-300) && min > 0.0
}

fn invert_block(b: &DMatrix<f64>, unit: Unit, index: usize, pseudo_inverse: bool) -> Result<DMatrix<f64>> {
    if is_pd(b) {
        if let Some(ch) = b.clone().cholesky() {
            return Ok(ch.inverse());
        }
    }
    if pseudo_inverse {
        return b
            .clone()
            .pseudo_inverse(1e-12 * eigen_range(b).1.abs().max(1e-300))
            .map_err(|e| Error::InvalidInput(e.to_string()));
    }
    Err(Error::SingularBlock {
        unit,
        index,
        min_eigenvalue: eigen_range(b).0,
    })
}

/// Block-diagonal matrix: ancestry blocks first, then frequency blocks.
pub fn assemble_gamma(blocks: &FisherBlocks) -> DMatrix<f64> {
    let dim = blocks.dimension();
    let mut g = DMatrix::zeros(dim, dim);
    let mut at = 0;
    for (_, _, b) in blocks.blocks() {
        let d = b.nrows();
        g.view_mut((at, at), (d, d)).copy_from(b);
        at += d;
    }
    g
}

/// Result of partitioning vectors into disjoint linearly independent subsets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetReport {
    /// Required subset size (K-1 for frequencies, K for ancestries).
    pub subset_size: usize,
    pub n_vectors: usize,
    pub complete_subsets: usize,
    /// Indices of the vectors in each complete subset.
    pub subsets: Vec<Vec<usize>>,
}

impl SubsetReport {
    pub fn satisfied(&self, threshold: usize) -> bool {
        self.complete_subsets >= threshold
    }
}

/// First-fit greedy: each vector joins the first open subset whose span it
/// enlarges; otherwise it opens a new subset.
fn greedy_independent_subsets(vectors: &[DVector<f64>], size: usize) -> SubsetReport {
    struct Open {
        members: Vec<usize>,
        basis: Vec<DVector<f64>>,
    }
    let mut open: Vec<Open> = Vec::new();
    let mut done: Vec<Vec<usize>> = Vec::new();
    if size > 0 {
        for (idx, v) in vectors.iter().enumerate() {
            let norm = v.norm();
            if norm <= RANK_TOL {
                continue;
            }
            let residual_in = |basis: &[DVector<f64>]| {
                let mut r = v / norm;
                for b in basis {
                    let proj = r.dot(b);
                    r.axpy(-proj, b, 1.0);
                }
                r
            };
            let slot = open.iter().position(|o| residual_in(&o.basis).norm() > RANK_TOL);
            let slot = match slot {
                Some(s) => s,
                None => {
                    open.push(Open {
                        members: Vec::new(),
                        basis: Vec::new(),
                    });
                    open.len() - 1
                }
            };
            let r = residual_in(&open[slot].basis);
            let rn = r.norm();
            open[slot].basis.push(r / rn);
            open[slot].members.push(idx);
            if open[slot].members.len() == size {
                done.push(open.remove(slot).members);
            }
        }
    }
    SubsetReport {
        subset_size: size,
        n_vectors: vectors.len(),
        complete_subsets: done.len(),
        subsets: done,
    }
}

/// Disjoint subsets of K-1 linearly independent reduced frequency vectors.
pub fn check_assumption_star(p: &AlleleFreqMatrix) -> SubsetReport {
    let vectors: Vec<DVector<f64>> = (0..p.n_markers())
        .map(|m| reduced_freq(p.as_matrix(), m))
        .collect();
    greedy_independent_subsets(&vectors, p.k() - 1)
}

/// Disjoint subsets of K linearly independent ancestry rows.
pub fn check_assumption_starstar(q: &AncestryMatrix) -> SubsetReport {
    let vectors: Vec<DVector<f64>> = (0..q.n_individuals()).map(|i| q.row(i)).collect();
    greedy_independent_subsets(&vectors, q.k())
}

/// Finite-sample averages `(1/n) sum 2 / (c (1 - c))^3` over cells with
/// `c` in (0, 1), per individual (over markers) and per marker (over
/// individuals).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub per_individual: Vec<f64>,
    pub per_marker: Vec<f64>,
    pub all_finite: bool,
    pub note: &'static str,
}

pub fn check_assumption_moments(q: &AncestryMatrix, p: &AlleleFreqMatrix) -> Result<MomentReport> {
    if q.k() != p.k() {
        return dim_err("Q and P disagree on K");
    }
    let c = (q.as_matrix() * p.as_matrix()).map(|v| v.clamp(0.0, 1.0));
    let term = |v: f64| {
        if v > 0.0 && v < 1.0 {
            2.0 / (v * (1.0 - v)).powi(3)
        } else {
            0.0
        }
    };
    let per_individual: Vec<f64> = c
        .row_iter()
        .map(|r| r.iter().map(|&v| term(v)).sum::<f64>() / r.len() as f64)
        .collect();
    let per_marker: Vec<f64> = c
        .column_iter()
        .map(|col| col.iter().map(|&v| term(v)).sum::<f64>() / col.len() as f64)
        .collect();
    let all_finite = per_individual.iter().chain(&per_marker).all(|v| v.is_finite());
    Ok(MomentReport {
        per_individual,
        per_marker,
        all_finite,
        note: "finite-sample averages only; the limiting condition cannot be decided at finite size",
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuCandidate {
    pub q: Vec<f64>,
    /// `(1/M) sum (c - c0)^2`.
    pub mean_sq_diff: f64,
}

/// Pinsker-type sufficient check of the identifiability condition for one
/// individual with known frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuReport {
    /// `(1/M) sum (p_2 - p_1)^2`, only for K = 2.
    pub k2_statistic: Option<f64>,
    /// Smallest eigenvalue of `(1/M) sum p_red p_red^T`: the infimum over
    /// directions `v` of `(1/M) sum (c - c0)^2 / |v|^2`.
    pub statistic: f64,
    /// Unit direction (reduced coordinates) attaining `statistic`.
    pub weakest_direction: Vec<f64>,
    pub threshold: f64,
    pub holds: bool,
    /// Grid point minimizing `mean_sq_diff` among candidates at least
    /// `min_separation` (L1) away from `q0`.
    pub closest_candidate: Option<AuCandidate>,
    /// Candidates with indistinguishable success probabilities.
    pub degenerate_candidates: Vec<AuCandidate>,
}

/// All points of the simplex grid with spacing `1/steps`.
pub fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == k - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&v| v as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(k, left - v, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(k, steps, steps, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

pub fn check_condition_au(
    p: &AlleleFreqMatrix,
    q0: &[f64],
    candidates: &[Vec<f64>],
    min_separation: f64,
    delta: f64,
) -> Result<AuReport> {
    let k = p.k();
    if q0.len() != k {
        return dim_err("q0 has the wrong length");
    }
    let pm = p.as_matrix();
    let m = pm.ncols();
    let mut gram = DMatrix::zeros(k - 1, k - 1);
    for mm in 0..m {
        let d = reduced_freq(pm, mm);
        gram.ger(1.0 / m as f64, &d, &d, 1.0);
    }
    let (statistic, weakest_direction) = if k == 1 {
        (0.0, Vec::new())
    } else {
        let eig = SymmetricEigen::new(gram);
        let j = eig.eigenvalues.imin();
        (
            eig.eigenvalues[j].max(0.0),
            eig.eigenvectors.column(j).iter().copied().collect(),
        )
    };
    let k2_statistic = (k == 2).then(|| {
        (0..m).map(|mm| (pm[(1, mm)] - pm[(0, mm)]).powi(2)).sum::<f64>() / m as f64
    });

    let c0: Vec<f64> = (0..m).map(|mm| dot_qp(q0, pm, mm)).collect();
    let mut closest: Option<AuCandidate> = None;
    let mut degenerate = Vec::new();
    for cand in candidates {
        if cand.len() != k {
            return dim_err("candidate has the wrong length");
        }
        let sep: f64 = cand.iter().zip(q0).map(|(a, b)| (a - b).abs()).sum();
        if sep < min_separation {
            continue;
        }
        let msd = (0..m).map(|mm| (dot_qp(cand, pm, mm) - c0[mm]).powi(2)).sum::<f64>() / m as f64;
        let entry = AuCandidate {
            q: cand.clone(),
            mean_sq_diff: msd,
        };
        if msd <= 1e-12 {
            degenerate.push(entry.clone());
        }
        if closest.as_ref().is_none_or(|c| msd < c.mean_sq_diff) {
            closest = Some(entry);
        }
    }
    let threshold = delta * delta;
    let decisive = k2_statistic.unwrap_or(statistic);
    Ok(AuReport {
        k2_statistic,
        statistic,
        weakest_direction,
        threshold,
        holds: decisive >= threshold && degenerate.is_empty(),
        closest_candidate: closest,
        degenerate_candidates: degenerate,
    })
}
