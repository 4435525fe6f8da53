//! Non-identifiability diagnostics for unsupervised estimates.
//!
//! For any invertible `S` with `S 1 = 1`, `(Q S, S^-1 P)` has the same
//! likelihood as `(Q, P)`. `S` is *possible* when the transformed pair is
//! still a valid parameter. The checks here look for configurations of
//! vertex individuals and anchor markers under which only permutation
//! matrices are possible.
//!
//! Allele orientation is irrelevant to possibility (`S^-1 (1 - p) = 1 - S^-1 p`),
//! so anchors are searched in both orientations of each marker.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{dim_err, Result};
use crate::model::{AlleleFreqMatrix, AncestryMatrix};

pub const DEFAULT_TOL: f64 = 1e-3;

const FINITE_SAMPLE_NOTE: &str = "The verdict concerns alternative estimates at the present numbers of \
markers and individuals. As both grow, alternatives that differ from this estimate in only a vanishing \
fraction of markers or individuals no longer change the normalized log-likelihood, so the verdict does \
not rule those out.";

const TOLERANCE_NOTE: &str = "Estimates are compared with 0 and 1 at the reported tolerance; \
optimizer output is clamped away from the bounds.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    UniqueUpToPermutation,
    Inconclusive,
}

/// A marker whose frequency column is `e_k + a e_j` in one allele orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anchor {
    pub marker: usize,
    pub a: f64,
    /// True when the column was read as `1 - p`.
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorSet {
    pub k: usize,
    pub j: usize,
    pub anchors: Vec<Anchor>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub k: usize,
    pub tol: f64,
    /// `vertex_individuals[k]`: individuals with `q_hat[i]` within tol of `e_k`.
    pub vertex_individuals: Vec<Vec<usize>>,
    /// One entry per ordered pair `(k, j)`, `j != k`.
    pub anchor_markers: Vec<AnchorSet>,
    /// Whether one anchor per pair can be chosen with pairwise distinct `a`.
    pub distinct_a: bool,
    /// Pairs whose every anchor collides with an already chosen `a`.
    pub collisions: Vec<(usize, usize)>,
    pub verdict: Verdict,
    pub notes: Vec<&'static str>,
}

fn check_shapes(q: &AncestryMatrix, p: &AlleleFreqMatrix) -> Result<()> {
    if q.k() != p.k() {
        return dim_err("Q and P disagree on K");
    }
    Ok(())
}

fn vertex_individuals(q: &AncestryMatrix, tol: f64) -> Vec<Vec<usize>> {
    let qm = q.as_matrix();
    (0..q.k())
        .map(|k| {
            (0..qm.nrows())
                .filter(|&i| {
                    (0..q.k()).all(|l| {
                        let target = if l == k { 1.0 } else { 0.0 };
                        (qm[(i, l)] - target).abs() <= tol
                    })
                })
                .collect()
        })
        .collect()
}

fn find_anchors(p: &AlleleFreqMatrix, tol: f64) -> Vec<AnchorSet> {
    let pm = p.as_matrix();
    let kk = p.k();
    let mut sets = Vec::new();
    for k in 0..kk {
        for j in (0..kk).filter(|&j| j != k) {
            let mut anchors = Vec::new();
            for m in 0..pm.ncols() {
                for flipped in [false, true] {
                    let v = |r: usize| if flipped { 1.0 - pm[(r, m)] } else { pm[(r, m)] };
                    let a = v(j);
                    let ok = v(k) >= 1.0 - tol
                        && a > tol
                        && a < 1.0 - tol
                        && (0..kk).filter(|&r| r != k && r != j).all(|r| v(r) <= tol);
                    if ok {
                        anchors.push(Anchor { marker: m, a, flipped });
                    }
                }
            }
            sets.push(AnchorSet { k, j, anchors });
        }
    }
    sets
}

/// Picks one anchor per pair greedily so that chosen `a` values differ by
/// more than `tol`. Returns the pairs that could not be served.
fn choose_distinct(sets: &[AnchorSet], tol: f64) -> Vec<(usize, usize)> {
    let mut chosen: Vec<f64> = Vec::new();
    let mut collisions = Vec::new();
    for set in sets.iter().filter(|s| !s.anchors.is_empty()) {
        match set
            .anchors
            .iter()
            .find(|an| chosen.iter().all(|&c| (c - an.a).abs() > tol))
        {
            Some(an) => chosen.push(an.a),
            None => collisions.push((set.k, set.j)),
        }
    }
    collisions
}

/// Sufficient check for arbitrary K: every population has a vertex
/// individual and every ordered pair an anchor marker with distinct `a`.
pub fn check_uniqueness_general(q_hat: &AncestryMatrix, p_hat: &AlleleFreqMatrix, tol: f64) -> Result<UniquenessReport> {
    check_shapes(q_hat, p_hat)?;
    let vertex = vertex_individuals(q_hat, tol);
    let anchors = find_anchors(p_hat, tol);
    let collisions = choose_distinct(&anchors, tol);
    let distinct_a = collisions.is_empty();
    let unique = q_hat.k() >= 2
        && vertex.iter().all(|v| !v.is_empty())
        && anchors.iter().all(|s| !s.anchors.is_empty())
        && distinct_a;
    Ok(UniquenessReport {
        k: q_hat.k(),
        tol,
        vertex_individuals: vertex,
        anchor_markers: anchors,
        distinct_a,
        collisions,
        verdict: if unique {
            Verdict::UniqueUpToPermutation
        } else {
            Verdict::Inconclusive
        },
        notes: vec![FINITE_SAMPLE_NOTE, TOLERANCE_NOTE],
    })
}

/// K = 2 check. Only permutations are possible iff some marker has
/// population 1 at an extreme (0 or 1) with population 2 away from that
/// extreme, some marker has the roles reversed, and both vertices occur
/// among the ancestry rows.
pub fn check_uniqueness_k2(q_hat: &AncestryMatrix, p_hat: &AlleleFreqMatrix, tol: f64) -> Result<UniquenessReport> {
    check_shapes(q_hat, p_hat)?;
    if q_hat.k() != 2 {
        return dim_err(format!("K = 2 check called with K = {}", q_hat.k()));
    }
    let vertex = vertex_individuals(q_hat, tol);
    let pm = p_hat.as_matrix();
    let mut sets = Vec::new();
    for (k, j) in [(0usize, 1usize), (1, 0)] {
        let mut anchors = Vec::new();
        for m in 0..pm.ncols() {
            for flipped in [false, true] {
                let v = |r: usize| if flipped { 1.0 - pm[(r, m)] } else { pm[(r, m)] };
                if v(k) >= 1.0 - tol && v(j) < 1.0 - tol {
                    anchors.push(Anchor {
                        marker: m,
                        a: v(j),
                        flipped,
                    });
                }
            }
        }
        sets.push(AnchorSet { k, j, anchors });
    }
    let unique = vertex.iter().all(|v| !v.is_empty()) && sets.iter().all(|s| !s.anchors.is_empty());
    Ok(UniquenessReport {
        k: 2,
        tol,
        vertex_individuals: vertex,
        anchor_markers: sets,
        distinct_a: true,
        collisions: Vec::new(),
        verdict: if unique {
            Verdict::UniqueUpToPermutation
        } else {
            Verdict::Inconclusive
        },
        notes: vec![FINITE_SAMPLE_NOTE, TOLERANCE_NOTE],
    })
}

/// Extremes of the frequency and ancestry ratios for K = 2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K2Extremes {
    /// Min / max over markers and both alleles of `p_2 / p_1`.
    pub u_star_lo: f64,
    pub u_star_hi: f64,
    /// Min / max over individuals of `q_1 / q_2`.
    pub v_star_lo: f64,
    pub v_star_hi: f64,
    /// Conditions a) to d) on the extremes, evaluated at tolerance.
    pub conditions: [bool; 4],
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn min_max(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Computes the ratio extremes and checks
/// a) `(u^* - 1) / (u^* + v_*) = 1`, b) `(1 - u^*) / (1 + u^* / v_*) = 0`,
/// c) `(1 + v^*) / (u_* + v^*) = 1`, d) `(1 + v^*) / (1 + v^* / u_*) = 0`.
/// Infinite extremes are replaced by a large finite stand-in so the
/// expressions take their limiting values.
pub fn k2_extremes(q_hat: &AncestryMatrix, p_hat: &AlleleFreqMatrix, tol: f64) -> Result<K2Extremes> {
    check_shapes(q_hat, p_hat)?;
    if q_hat.k() != 2 {
        return dim_err("k2_extremes needs K = 2");
    }
    let pm = p_hat.as_matrix();
    let (u_lo, u_hi) = min_max((0..pm.ncols()).flat_map(|m| {
        [
            ratio(pm[(1, m)], pm[(0, m)]),
            ratio(1.0 - pm[(1, m)], 1.0 - pm[(0, m)]),
        ]
    }));
    let qm = q_hat.as_matrix();
    let (v_lo, v_hi) = min_max((0..qm.nrows()).map(|i| ratio(qm[(i, 0)], qm[(i, 1)])));

    const BIG: f64 = 1e150;
    let f = |v: f64| if v.is_infinite() { BIG } else { v };
    let (ul, uh, vl, vh) = (f(u_lo), f(u_hi), f(v_lo), f(v_hi));
    let close = |x: f64, target: f64| x.is_finite() && (x - target).abs() <= tol;
    let conditions = [
        close((uh - 1.0) / (uh + vl), 1.0),
        close((1.0 - uh) / (1.0 + uh / vl), 0.0),
        close((1.0 + vh) / (ul + vh), 1.0),
        close((1.0 + vh) / (1.0 + vh / ul), 0.0),
    ];
    Ok(K2Extremes {
        u_star_lo: u_lo,
        u_star_hi: u_hi,
        v_star_lo: v_lo,
        v_star_hi: v_hi,
        conditions,
    })
}

pub fn is_permutation_matrix(s: &DMatrix<f64>, tol: f64) -> bool {
    s.is_square()
        && s.row_iter().all(|r| {
            r.iter().filter(|v| (*v - 1.0).abs() <= tol).count() == 1
                && r.iter().filter(|v| v.abs() <= tol).count() == r.len() - 1
        })
        && s.column_iter().all(|c| c.iter().filter(|v| (*v - 1.0).abs() <= tol).count() == 1)
}

/// Whether `(Q S, S^-1 P)` is again a valid parameter: rows of `Q S` on the
/// simplex and entries of `S^-1 P` in [0, 1], up to `tol`.
pub fn is_possible_matrix(q_hat: &AncestryMatrix, p_hat: &AlleleFreqMatrix, s: &DMatrix<f64>, tol: f64) -> bool {
    let k = q_hat.k();
    if s.shape() != (k, k) {
        return false;
    }
    let Some(s_inv) = s.clone().try_inverse() else {
        return false;
    };
    let qs = q_hat.as_matrix() * s;
    let rows_ok = qs
        .row_iter()
        .all(|r| r.iter().all(|&v| v >= -tol) && (r.sum() - 1.0).abs() <= tol);
    if !rows_ok {
        return false;
    }
    let sp = s_inv * p_hat.as_matrix();
    sp.iter().all(|&v| v >= -tol && v <= 1.0 + tol)
}

/// Random invertible non-permutation `S` with rows summing to one and
/// entries in [-1, 1], `|det S| >= 0.1`.
pub fn random_row_stochastic_like(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    loop {
        let mut s = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..=1.0));
        let mut ok = true;
        for r in 0..k {
            let partial: f64 = (0..k - 1).map(|c| s[(r, c)]).sum();
            s[(r, k - 1)] = 1.0 - partial;
            ok &= (-1.0..=1.0).contains(&s[(r, k - 1)]);
        }
        if ok && s.determinant().abs() >= 0.1 && !is_permutation_matrix(&s, 1e-9) {
            return s;
        }
    }
}

/// Randomized search for a possible non-permutation `S`; `None` if every
/// trial violates the constraints.
pub fn falsification_search(
    q_hat: &AncestryMatrix,
    p_hat: &AlleleFreqMatrix,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Option<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| random_row_stochastic_like(q_hat.k(), &mut rng))
        .find(|s| is_possible_matrix(q_hat, p_hat, s, tol))
}
