//! Maximum-likelihood estimation of `(Q, P)`.
//!
//! [`fit_em`] runs block EM (multiplicative updates for free ancestry rows,
//! then for free frequency columns). Every iterate is kept inside
//! `[eps_clamp, 1 - eps_clamp]`: the EM proposal is accepted as far along the
//! segment from the current point as the box allows. The log-likelihood is
//! concave in each block, so the truncated step never decreases it.
//!
//! [`fit_supervised_newton`] refines a single ancestry row with known
//! frequencies by an active-set projected Newton method.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::model::{
    cell_terms, column_log_likelihood, dot_qp, row_log_likelihood, AlleleFreqMatrix,
    AncestryMatrix, GenotypeMatrix, ModelConfig, MISSING,
};

/// Values for a block of parameters, some of which are held fixed.
///
/// For ancestries `values` is N x K and `fixed` is indexed by individual;
/// for frequencies `values` is K x M and `fixed` is indexed by marker.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownBlock {
    pub values: DMatrix<f64>,
    pub fixed: Vec<bool>,
}

impl KnownBlock {
    pub fn all_fixed(values: DMatrix<f64>, n_units: usize) -> Self {
        Self {
            values,
            fixed: vec![true; n_units],
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationProblem {
    pub x: GenotypeMatrix,
    pub k: usize,
    pub known_q: Option<KnownBlock>,
    pub known_p: Option<KnownBlock>,
    pub config: ModelConfig,
}

impl EstimationProblem {
    pub fn unsupervised(x: GenotypeMatrix, config: ModelConfig) -> Result<Self> {
        let problem = Self {
            k: config.k_populations,
            x,
            known_q: None,
            known_p: None,
            config,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// All frequencies known; every ancestry row is estimated.
    pub fn supervised(x: GenotypeMatrix, p: &AlleleFreqMatrix, config: ModelConfig) -> Result<Self> {
        let m = p.n_markers();
        let problem = Self {
            k: p.k(),
            x,
            known_q: None,
            known_p: Some(KnownBlock::all_fixed(p.as_matrix().clone(), m)),
            config: ModelConfig {
                k_populations: p.k(),
                ..config
            },
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn semi_supervised(
        x: GenotypeMatrix,
        known_q: Option<KnownBlock>,
        known_p: Option<KnownBlock>,
        config: ModelConfig,
    ) -> Result<Self> {
        let problem = Self {
            k: config.k_populations,
            x,
            known_q,
            known_p,
            config,
        };
        problem.validate()?;
        Ok(problem)
    }

    fn q_fixed(&self, i: usize) -> bool {
        self.known_q.as_ref().is_some_and(|b| b.fixed[i])
    }

    fn p_fixed(&self, m: usize) -> bool {
        self.known_p.as_ref().is_some_and(|b| b.fixed[m])
    }

    pub fn n_free_rows(&self) -> usize {
        (0..self.x.n_individuals()).filter(|&i| !self.q_fixed(i)).count()
    }

    pub fn n_free_columns(&self) -> usize {
        (0..self.x.n_markers()).filter(|&m| !self.p_fixed(m)).count()
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidInput("K must be positive".into()));
        }
        if self.config.k_populations != self.k {
            return dim_err(format!(
                "problem K = {} but config K = {}",
                self.k, self.config.k_populations
            ));
        }
        let (n, m) = (self.x.n_individuals(), self.x.n_markers());
        if let Some(b) = &self.known_q {
            if b.values.shape() != (n, self.k) || b.fixed.len() != n {
                return dim_err("known ancestry block does not match N x K");
            }
            for i in (0..n).filter(|&i| b.fixed[i]) {
                let row = b.values.row(i);
                if row.iter().any(|v| !(0.0..=1.0).contains(v))
                    || (row.sum() - 1.0).abs() > self.config.tol_simplex
                {
                    return Err(Error::InvalidInput(format!(
                        "known ancestry row {i} is not on the simplex"
                    )));
                }
            }
        }
        if let Some(b) = &self.known_p {
            if b.values.shape() != (self.k, m) || b.fixed.len() != m {
                return dim_err("known frequency block does not match K x M");
            }
            for mm in (0..m).filter(|&mm| b.fixed[mm]) {
                if b.values.column(mm).iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidInput(format!(
                        "known frequencies of marker {mm} outside [0, 1]"
                    )));
                }
            }
        }
        if self.n_free_rows() == 0 && self.n_free_columns() == 0 {
            return Err(Error::InvalidInput("nothing to estimate: every block is fixed".into()));
        }
        if self.known_q.is_none() && self.known_p.is_none() && self.k > n.min(m) {
            return Err(Error::InvalidInput(format!(
                "unsupervised K = {} exceeds min(N, M) = {}",
                self.k,
                n.min(m)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Absolute tolerance on the gain of the unnormalized log-likelihood.
    pub tol_ll: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol_ll: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    #[serde(serialize_with = "ser_matrix_rows")]
    pub q_hat: AncestryMatrix,
    #[serde(serialize_with = "ser_freq_rows")]
    pub p_hat: AlleleFreqMatrix,
    /// Log-likelihood per observed allele copy after initialization and
    /// after every iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `boundary_flags_q[i][k]` is set when `q_hat[i][k]` is within
    /// `eps_boundary` of 0 or 1.
    pub boundary_flags_q: Vec<Vec<bool>>,
}

impl FitResult {
    pub fn final_loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

fn ser_matrix_rows<S: serde::Serializer>(q: &AncestryMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = q.as_matrix().row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

fn ser_freq_rows<S: serde::Serializer>(p: &AlleleFreqMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = p.as_matrix().row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

pub(crate) fn boundary_flags(q: &DMatrix<f64>, eps: f64) -> Vec<Vec<bool>> {
    q.row_iter()
        .map(|r| r.iter().map(|&v| v <= eps || v >= 1.0 - eps).collect())
        .collect()
}

/// Largest `t` in [0, 1] with `from + t (to - from)` inside `[lo, hi]`.
fn feasible_fraction(from: &[f64], to: &[f64], lo: f64, hi: f64) -> f64 {
    let mut t: f64 = 1.0;
    for (&a, &b) in from.iter().zip(to) {
        if b < lo && a > b {
            t = t.min(((a - lo) / (a - b)).max(0.0));
        } else if b > hi && b > a {
            t = t.min(((hi - a) / (b - a)).max(0.0));
        }
    }
    t
}

fn truncated_step(from: &[f64], to: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let t = feasible_fraction(from, to, lo, hi);
    from.iter()
        .zip(to)
        .map(|(&a, &b)| (a + t * (b - a)).clamp(lo, hi))
        .collect()
}

/// Multiplicative EM update of one ancestry row with frequencies fixed.
pub(crate) fn em_row_update(x: &GenotypeMatrix, i: usize, q_row: &[f64], p: &DMatrix<f64>) -> Option<Vec<f64>> {
    let k = q_row.len();
    let mut acc = vec![0.0; k];
    let mut observed = 0usize;
    for (m, &xm) in x.row(i).iter().enumerate() {
        if xm == MISSING {
            continue;
        }
        observed += 1;
        let c = dot_qp(q_row, p, m);
        let xf = f64::from(xm);
        let a = if xm > 0 { xf / c } else { 0.0 };
        let b = if xm < 2 { (2.0 - xf) / (1.0 - c) } else { 0.0 };
        for (kk, v) in acc.iter_mut().enumerate() {
            *v += a * p[(kk, m)] + b * (1.0 - p[(kk, m)]);
        }
    }
    if observed == 0 {
        return None;
    }
    let scale = 1.0 / (2.0 * observed as f64);
    let mut out: Vec<f64> = q_row.iter().zip(&acc).map(|(q, a)| q * a * scale).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    Some(out)
}

/// EM update of one frequency column with ancestries fixed.
fn em_column_update(x: &GenotypeMatrix, m: usize, q: &DMatrix<f64>, p_col: &[f64]) -> Option<Vec<f64>> {
    let k = p_col.len();
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    let mut observed = false;
    for i in 0..x.n_individuals() {
        let xm = x.raw(i, m);
        if xm == MISSING {
            continue;
        }
        observed = true;
        let c: f64 = (0..k).map(|kk| q[(i, kk)] * p_col[kk]).sum::<f64>().clamp(0.0, 1.0);
        let xf = f64::from(xm);
        for kk in 0..k {
            if xm > 0 {
                a[kk] += xf * q[(i, kk)] * p_col[kk] / c;
            }
            if xm < 2 {
                b[kk] += (2.0 - xf) * q[(i, kk)] * (1.0 - p_col[kk]) / (1.0 - c);
            }
        }
    }
    if !observed {
        return None;
    }
    Some(
        (0..k)
            .map(|kk| {
                let d = a[kk] + b[kk];
                if d > 0.0 {
                    a[kk] / d
                } else {
                    p_col[kk]
                }
            })
            .collect(),
    )
}

fn initial_point(problem: &EstimationProblem, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m, k) = (problem.x.n_individuals(), problem.x.n_markers(), problem.k);
    let eps = problem.config.eps_clamp;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = match &problem.known_q {
        Some(b) => b.values.clone(),
        None => DMatrix::zeros(n, k),
    };
    for i in (0..n).filter(|&i| !problem.q_fixed(i)) {
        // Uniform on the simplex, shrunk into the clamp box.
        let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let s: f64 = e.iter().sum();
        for kk in 0..k {
            q[(i, kk)] = eps + (1.0 - k as f64 * eps) * e[kk] / s;
        }
    }
    let mut p = match &problem.known_p {
        Some(b) => b.values.clone(),
        None => DMatrix::zeros(k, m),
    };
    for mm in (0..m).filter(|&mm| !problem.p_fixed(mm)) {
        for kk in 0..k {
            p[(kk, mm)] = rng.random_range(0.1..0.9);
        }
    }
    (q, p)
}

fn total_log_likelihood(x: &GenotypeMatrix, q: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let k = q.ncols();
    (0..x.n_individuals())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = (0..k).map(|kk| q[(i, kk)]).collect();
            row_log_likelihood(x, i, &row, p)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// Block EM for the MLE. See the module docs for the update rules.
pub fn fit_em(problem: &EstimationProblem, opts: &EmOptions) -> Result<FitResult> {
    problem.validate()?;
    let x = &problem.x;
    let (n, m, k) = (x.n_individuals(), x.n_markers(), problem.k);
    let eps = problem.config.eps_clamp;
    let norm = 2.0 * x.n_observed().max(1) as f64;

    let (mut q, mut p) = initial_point(problem, opts.seed);
    let mut ll = total_log_likelihood(x, &q, &p);
    if !ll.is_finite() {
        return Err(Error::InvalidInput(
            "log-likelihood is not finite at the initial point; fixed blocks are incompatible with the data".into(),
        ));
    }
    let mut trace = vec![ll / norm];
    let mut converged = false;
    let mut iterations = 0;

    let free_rows: Vec<usize> = (0..n).filter(|&i| !problem.q_fixed(i)).collect();
    let free_cols: Vec<usize> = (0..m).filter(|&mm| !problem.p_fixed(mm)).collect();

    while iterations < opts.max_iter {
        iterations += 1;

        let new_rows: Vec<(usize, Vec<f64>)> = free_rows
            .par_iter()
            .filter_map(|&i| {
                let row: Vec<f64> = (0..k).map(|kk| q[(i, kk)]).collect();
                let proposal = em_row_update(x, i, &row, &p)?;
                Some((i, truncated_step(&row, &proposal, eps, 1.0 - eps)))
            })
            .collect();
        for (i, row) in new_rows {
            for (kk, v) in row.into_iter().enumerate() {
                q[(i, kk)] = v;
            }
        }

        let new_cols: Vec<(usize, Vec<f64>)> = free_cols
            .par_iter()
            .filter_map(|&mm| {
                let col: Vec<f64> = p.column(mm).iter().copied().collect();
                let proposal = em_column_update(x, mm, &q, &col)?;
                Some((mm, truncated_step(&col, &proposal, eps, 1.0 - eps)))
            })
            .collect();
        for (mm, col) in new_cols {
            for (kk, v) in col.into_iter().enumerate() {
                p[(kk, mm)] = v;
            }
        }

        let new_ll = total_log_likelihood(x, &q, &p);
        debug_assert!(new_ll.is_finite());
        let gain = new_ll - ll;
        ll = new_ll;
        trace.push(ll / norm);
        if gain < opts.tol_ll {
            converged = true;
            break;
        }
    }

    let flags = boundary_flags(&q, problem.config.eps_boundary);
    Ok(FitResult {
        q_hat: AncestryMatrix::with_tolerance(q, 1e-8)?,
        p_hat: AlleleFreqMatrix::new(p)?,
        loglik_trace: trace,
        iterations,
        converged,
        boundary_flags_q: flags,
    })
}

/// Runs `starts` EM fits with seeds `seed, seed + 1, ...` and keeps the one
/// with the highest final log-likelihood (earliest start on ties).
pub fn fit_em_multistart(problem: &EstimationProblem, opts: &EmOptions, starts: usize) -> Result<FitResult> {
    let starts = starts.max(1);
    let mut best: Option<FitResult> = None;
    for s in 0..starts {
        let fit = fit_em(
            problem,
            &EmOptions {
                seed: opts.seed.wrapping_add(s as u64),
                ..*opts
            },
        )?;
        if best.as_ref().is_none_or(|b| fit.final_loglik() > b.final_loglik()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one start"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonFit {
    pub q: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the simplex KKT conditions at `q`.
    pub kkt_residual: f64,
    pub boundary_flags: Vec<bool>,
    pub em_fallbacks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub kkt_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            kkt_tol: 1e-8,
        }
    }
}

struct RowState {
    ll: f64,
    /// Full K-dimensional gradient.
    grad: Vec<f64>,
    /// Per-marker curvature weights and observed marker indices.
    weights: Vec<(usize, f64)>,
}

fn row_state(x: &GenotypeMatrix, i: usize, q: &[f64], p: &DMatrix<f64>) -> Option<RowState> {
    let k = q.len();
    let mut grad = vec![0.0; k];
    let mut weights = Vec::with_capacity(x.n_markers());
    let mut ll = 0.0;
    for (m, &xm) in x.row(i).iter().enumerate() {
        if xm == MISSING {
            continue;
        }
        let c = dot_qp(q, p, m);
        let (r, w) = cell_terms(xm, c)?;
        ll += crate::model::cell_log_likelihood(xm, c);
        for (kk, g) in grad.iter_mut().enumerate() {
            *g += r * p[(kk, m)];
        }
        weights.push((m, w));
    }
    Some(RowState { ll, grad, weights })
}

/// KKT residual on `{q >= lo, sum q = 1}` for maximization, with the free
/// set and its multiplier.
fn kkt(q: &[f64], grad: &[f64], lo: f64) -> (f64, Vec<usize>, f64) {
    let at_bound = |v: f64| v <= lo * (1.0 + 1e-12);
    let mut free: Vec<usize> = (0..q.len()).filter(|&kk| !at_bound(q[kk])).collect();
    if free.is_empty() {
        free = (0..q.len()).collect();
    }
    let mu = free.iter().map(|&kk| grad[kk]).sum::<f64>() / free.len() as f64;
    let mut res: f64 = 0.0;
    for (kk, g) in grad.iter().enumerate().take(q.len()) {
        if free.contains(&kk) {
            res = res.max((g - mu).abs());
        } else {
            res = res.max(g - mu);
        }
    }
    (res, free, mu)
}

/// Projected Newton refinement of ancestry row `individual` with all
/// frequencies known. Iterates stay in `{q >= eps_clamp, sum q = 1}`.
pub fn fit_supervised_newton(
    x: &GenotypeMatrix,
    p: &AlleleFreqMatrix,
    individual: usize,
    config: &ModelConfig,
    start: Option<&[f64]>,
    opts: &NewtonOptions,
) -> Result<NewtonFit> {
    config.validate()?;
    let k = p.k();
    if x.n_markers() != p.n_markers() || individual >= x.n_individuals() {
        return dim_err("genotypes and frequencies disagree, or individual out of range");
    }
    if x.observed_in_row(individual) == 0 {
        return Err(Error::InvalidInput(format!(
            "individual {individual} has no observed markers"
        )));
    }
    let lo = config.eps_clamp;
    let pm = p.as_matrix();
    let mut q: Vec<f64> = match start {
        Some(s) if s.len() == k => {
            let clipped: Vec<f64> = s.iter().map(|v| v.max(0.0)).collect();
            let t: f64 = clipped.iter().sum();
            clipped.iter().map(|v| lo + (1.0 - k as f64 * lo) * v / t).collect()
        }
        Some(_) => return dim_err("start vector has the wrong length"),
        None => vec![1.0 / k as f64; k],
    };

    let mut state = row_state(x, individual, &q, pm).ok_or(Error::InvalidInput(
        "log-likelihood is -inf at the start point".into(),
    ))?;
    let mut iterations = 0;
    let mut converged = false;
    let mut fallbacks = 0;
    let mut residual = f64::INFINITY;

    while iterations < opts.max_iter {
        let (res, mut free, mu) = kkt(&q, &state.grad, lo);
        residual = res;
        if res < opts.kkt_tol || k == 1 {
            converged = true;
            break;
        }
        iterations += 1;
        for kk in 0..k {
            if !free.contains(&kk) && state.grad[kk] > mu {
                free.push(kk);
            }
        }
        free.sort_unstable();

        let proposal = newton_direction(&q, &state, &free, pm).and_then(|dir| {
            line_search(x, individual, &q, &dir, lo, state.ll, pm)
        });
        let (new_q, new_state) = match proposal {
            Some(next) => next,
            None => {
                fallbacks += 1;
                let em = em_row_update(x, individual, &q, pm).expect("observed markers");
                let stepped = truncated_step(&q, &em, lo, 1.0 - lo);
                let s = row_state(x, individual, &stepped, pm).expect("box keeps c interior");
                if s.ll < state.ll {
                    break;
                }
                if stepped == q {
                    break;
                }
                (stepped, s)
            }
        };
        q = new_q;
        state = new_state;
    }
    if !converged {
        residual = kkt(&q, &state.grad, lo).0;
        converged = residual < opts.kkt_tol;
    }

    let flags = q
        .iter()
        .map(|&v| v <= config.eps_boundary || v >= 1.0 - config.eps_boundary)
        .collect();
    Ok(NewtonFit {
        q: DVector::from_vec(q),
        iterations,
        converged,
        kkt_residual: residual,
        boundary_flags: flags,
        em_fallbacks: fallbacks,
    })
}

/// Newton ascent direction on the face spanned by `free`, eliminating the
/// largest free coordinate.
fn newton_direction(q: &[f64], state: &RowState, free: &[usize], p: &DMatrix<f64>) -> Option<Vec<f64>> {
    if free.len() < 2 {
        return None;
    }
    let r = *free
        .iter()
        .max_by(|&&a, &&b| q[a].total_cmp(&q[b]))
        .expect("non-empty");
    let others: Vec<usize> = free.iter().copied().filter(|&kk| kk != r).collect();
    let d = others.len();
    let g = DVector::from_fn(d, |j, _| state.grad[others[j]] - state.grad[r]);
    let mut neg_h = DMatrix::zeros(d, d);
    let mut diff = DVector::zeros(d);
    for &(m, w) in &state.weights {
        for (j, &kk) in others.iter().enumerate() {
            diff[j] = p[(kk, m)] - p[(r, m)];
        }
        neg_h.ger(w, &diff, &diff, 1.0);
    }
    let step = neg_h.cholesky()?.solve(&g);
    if !step.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut dir = vec![0.0; q.len()];
    for (j, &kk) in others.iter().enumerate() {
        dir[kk] = step[j];
    }
    dir[r] = -step.sum();
    Some(dir)
}

fn line_search(
    x: &GenotypeMatrix,
    i: usize,
    q: &[f64],
    dir: &[f64],
    lo: f64,
    ll0: f64,
    p: &DMatrix<f64>,
) -> Option<(Vec<f64>, RowState)> {
    let mut alpha: f64 = 1.0;
    let mut hit = None;
    for (kk, (&v, &d)) in q.iter().zip(dir).enumerate() {
        if d < 0.0 {
            let a = (v - lo) / -d;
            if a < alpha {
                alpha = a;
                hit = Some(kk);
            }
        }
    }
    if alpha <= 0.0 {
        return None;
    }
    let full = alpha;
    // Near the optimum the gain drops below the rounding noise of the sum.
    let slack = 1e-13 * (1.0 + ll0.abs());
    for _ in 0..40 {
        let mut cand: Vec<f64> = q.iter().zip(dir).map(|(&v, &d)| (v + alpha * d).max(lo)).collect();
        if alpha == full {
            if let Some(kk) = hit {
                cand[kk] = lo;
            }
        }
        let s: f64 = cand.iter().sum();
        // Restore the simplex constraint on the largest coordinate.
        let big = (0..cand.len()).max_by(|&a, &b| cand[a].total_cmp(&cand[b])).expect("K >= 1");
        cand[big] += 1.0 - s;
        if let Some(st) = row_state(x, i, &cand, p) {
            if st.ll >= ll0 - slack {
                if cand == q {
                    return None;
                }
                return Some((cand, st));
            }
        }
        alpha *= 0.5;
    }
    None
}

/// Permutation aligning estimated population labels with a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Column `j` of the aligned estimate is column `permutation[j]` of the input.
    pub permutation: Vec<usize>,
    pub distance: f64,
    pub q_aligned: AncestryMatrix,
    pub p_aligned: AlleleFreqMatrix,
}

/// Rearranges `v` into the next lexicographic permutation; false at the last.
pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

pub const MAX_ALIGN_K: usize = 8;

/// Exhaustive search for the label permutation minimizing the summed L1
/// distance between ancestry rows. Ties keep the lexicographically smallest.
pub fn align_labels(
    q_hat: &AncestryMatrix,
    p_hat: &AlleleFreqMatrix,
    q_ref: &AncestryMatrix,
    p_ref: &AlleleFreqMatrix,
) -> Result<Alignment> {
    let k = q_hat.k();
    if q_ref.k() != k || p_hat.k() != k || p_ref.k() != k {
        return dim_err("all matrices must share K");
    }
    if q_hat.n_individuals() != q_ref.n_individuals() {
        return dim_err("estimate and reference have different numbers of individuals");
    }
    if k > MAX_ALIGN_K {
        return Err(Error::Unsupported(format!(
            "exhaustive label alignment supports K <= {MAX_ALIGN_K}, got {k}"
        )));
    }
    let (qh, qr) = (q_hat.as_matrix(), q_ref.as_matrix());
    let cost = |perm: &[usize]| -> f64 {
        let mut total = 0.0;
        for i in 0..qh.nrows() {
            for (j, &pj) in perm.iter().enumerate() {
                total += (qh[(i, pj)] - qr[(i, j)]).abs();
            }
        }
        total
    };
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = cost(&perm);
    while next_permutation(&mut perm) {
        let c = cost(&perm);
        if c < best_cost {
            best_cost = c;
            best.clone_from(&perm);
        }
    }
    let q_aligned = DMatrix::from_fn(qh.nrows(), k, |i, j| qh[(i, best[j])]);
    let ph = p_hat.as_matrix();
    let p_aligned = DMatrix::from_fn(k, ph.ncols(), |j, m| ph[(best[j], m)]);
    Ok(Alignment {
        permutation: best,
        distance: best_cost,
        q_aligned: AncestryMatrix::with_tolerance(q_aligned, f64::INFINITY)?,
        p_aligned: AlleleFreqMatrix::new(p_aligned)?,
    })
}

/// Truncation of the weighted metric `sum_i 2^-i |q_a - q_b|_1 + sum_m 2^-m |p_a - p_b|_1`
/// (1-based unit indices).
pub fn metric_d(
    q_a: &AncestryMatrix,
    p_a: &AlleleFreqMatrix,
    q_b: &AncestryMatrix,
    p_b: &AlleleFreqMatrix,
) -> Result<f64> {
    if q_a.as_matrix().shape() != q_b.as_matrix().shape()
        || p_a.as_matrix().shape() != p_b.as_matrix().shape()
    {
        return dim_err("metric_d needs equally shaped arguments");
    }
    let mut d = 0.0;
    for (i, (ra, rb)) in q_a.as_matrix().row_iter().zip(q_b.as_matrix().row_iter()).enumerate() {
        d += (ra - rb).abs().sum() * 0.5f64.powi(i as i32 + 1);
    }
    for (m, (ca, cb)) in p_a
        .as_matrix()
        .column_iter()
        .zip(p_b.as_matrix().column_iter())
        .enumerate()
    {
        d += (ca - cb).abs().sum() * 0.5f64.powi(m as i32 + 1);
    }
    Ok(d)
}

/// Unnormalized log-likelihood of one marker, used by tests of the p-step.
pub fn marker_log_likelihood(x: &GenotypeMatrix, q: &AncestryMatrix, p: &AlleleFreqMatrix, marker: usize) -> f64 {
    let col: Vec<f64> = p.as_matrix().column(marker).iter().copied().collect();
    column_log_likelihood(x, marker, q.as_matrix(), &col)
}
