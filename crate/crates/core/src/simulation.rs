//! Synthetic data and Monte Carlo experiments for consistency and the two
//! limit laws.
//!
//! Every replicate draws its genotypes from its own ChaCha stream
//! (`stream = cell * replicates + replicate` under the spec seed), so
//! results do not depend on the number of threads.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{boundary_law, interior_law, ConeSpec};
use crate::error::{dim_err, Error, Result, Unit};
use crate::estimation::{
    align_labels, fit_em_multistart, fit_supervised_newton, metric_d, EmOptions, EstimationProblem,
    NewtonOptions,
};
use crate::fisher::{expected_info_q, is_pd};
use crate::model::{AlleleFreqMatrix, AncestryMatrix, GenotypeMatrix, ModelConfig};
use crate::stats::{frobenius_rel_error, ks_normal, ks_two_sample, mean_var, ols_slope, sample_covariance, KsResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Frequencies known; ancestries estimated.
    Supervised,
    /// Everything estimated; results aligned to the truth by label permutation.
    Unsupervised,
}

#[derive(Debug, Clone)]
pub struct SimSpec {
    /// Truth for the largest N; cells use the first `n` rows.
    pub q0: AncestryMatrix,
    /// Truth for the largest M; cells use the first `m` markers.
    pub p0: AlleleFreqMatrix,
    pub m_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub setting: Setting,
    pub config: ModelConfig,
    /// EM settings and number of starts for unsupervised fits.
    pub em: EmOptions,
    pub starts: usize,
    /// Draws from the projected law in boundary experiments.
    pub law_samples: usize,
}

impl SimSpec {
    pub fn new(q0: AncestryMatrix, p0: AlleleFreqMatrix, m_grid: Vec<usize>, n_grid: Vec<usize>, replicates: usize, seed: u64) -> Self {
        let k = q0.k();
        Self {
            q0,
            p0,
            m_grid,
            n_grid,
            replicates,
            seed,
            setting: Setting::Supervised,
            config: ModelConfig::new(k),
            em: EmOptions::default(),
            starts: 1,
            law_samples: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.q0.k() != self.p0.k() {
            return dim_err("q0 and p0 disagree on K");
        }
        for (name, grid, max) in [
            ("m_grid", &self.m_grid, self.p0.n_markers()),
            ("n_grid", &self.n_grid, self.q0.n_individuals()),
        ] {
            if grid.is_empty() || grid.contains(&0) {
                return Err(Error::InvalidInput(format!("{name} must be non-empty and positive")));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!("{name} must be strictly ascending")));
            }
            if *grid.last().expect("non-empty") > max {
                return Err(Error::InvalidInput(format!(
                    "{name} exceeds the {max} units available in the truth"
                )));
            }
        }
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be at least 1".into()));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(usize, usize)> {
        self.m_grid
            .iter()
            .flat_map(|&m| self.n_grid.iter().map(move |&n| (m, n)))
            .collect()
    }

    fn rng(&self, cell: usize, replicate: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((cell * self.replicates + replicate) as u64);
        rng
    }
}

/// Genotypes `x[i][m] ~ Bin(2, <q0[i], p0[., m]>)`.
pub fn generate_with_rng(q0: &AncestryMatrix, p0: &AlleleFreqMatrix, rng: &mut impl Rng) -> Result<GenotypeMatrix> {
    if q0.k() != p0.k() {
        return dim_err("q0 and p0 disagree on K");
    }
    let c = q0.as_matrix() * p0.as_matrix();
    let (n, m) = c.shape();
    let mut counts = Vec::with_capacity(n * m);
    for i in 0..n {
        for mm in 0..m {
            let ci = c[(i, mm)];
            assert!((-1e-12..=1.0 + 1e-12).contains(&ci), "success probability {ci} outside [0, 1]");
            let draws = u8::from(rng.random::<f64>() < ci) + u8::from(rng.random::<f64>() < ci);
            counts.push(draws);
        }
    }
    GenotypeMatrix::new(n, m, counts)
}

pub fn generate(q0: &AncestryMatrix, p0: &AlleleFreqMatrix, seed: u64) -> Result<GenotypeMatrix> {
    generate_with_rng(q0, p0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// One fitted replicate of one `(M, N)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub m: usize,
    pub n: usize,
    pub replicate: usize,
    pub metric_d: f64,
    /// Mean absolute error over all ancestry entries (after alignment).
    pub q_mae: f64,
    /// Mean absolute error over all frequency entries (unsupervised only).
    pub p_mae: Option<f64>,
    /// Ancestry estimate of individual 0.
    pub estimate: Vec<f64>,
    /// `sqrt(M) (q_hat - q0)` of individual 0 in the reduced coordinates.
    pub scaled_error: Vec<f64>,
    /// Reduced coordinates of individual 0 estimated at the boundary.
    pub at_bound: Vec<bool>,
    #[serde(skip)]
    pub elapsed_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub m: usize,
    pub n: usize,
    pub mean_q_mae: f64,
    pub mean_metric_d: f64,
    pub failed: usize,
    /// Per reduced coordinate KS test of the scaled errors against the
    /// Gaussian limit (interior runs).
    pub ks_gaussian: Vec<KsResult>,
    pub covariance_rel_error: Option<f64>,
    #[serde(serialize_with = "crate::asymptotics::ser_matrix")]
    pub empirical_covariance: DMatrix<f64>,
    #[serde(serialize_with = "crate::asymptotics::ser_matrix")]
    pub limit_covariance: DMatrix<f64>,
    /// Per reduced coordinate: empirical and limiting atom probability
    /// (boundary runs, constrained coordinates only).
    pub atoms: Vec<AtomComparison>,
    /// Per reduced coordinate two-sample KS of the non-atom parts
    /// (boundary runs).
    pub ks_continuous: Vec<Option<KsResult>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AtomComparison {
    pub coord: usize,
    pub empirical: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Consistency,
    CltInterior,
    CltBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityCheck {
    pub m_a: usize,
    pub m_b: usize,
    pub n: usize,
    pub coord: usize,
    pub ks: KsResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub setting: Setting,
    #[serde(skip)]
    pub records: Vec<Record>,
    pub cells: Vec<CellSummary>,
    /// `(n, slope)` of log mean ancestry error against log M.
    pub slopes: Vec<(usize, f64)>,
    /// Two-sample KS between consecutive M cells (CLT runs).
    pub stability: Vec<StabilityCheck>,
    /// Population label of each reduced coordinate (CLT runs).
    pub labels: Vec<usize>,
    pub notes: Vec<String>,
}

struct Fit {
    q_hat: AncestryMatrix,
    p_hat: Option<AlleleFreqMatrix>,
}

fn fit_replicate(spec: &SimSpec, x: &GenotypeMatrix, q0: &AncestryMatrix, p0: &AlleleFreqMatrix) -> Result<Fit> {
    match spec.setting {
        Setting::Supervised => {
            let k = p0.k();
            let mut q = DMatrix::zeros(x.n_individuals(), k);
            for i in 0..x.n_individuals() {
                let fit = fit_supervised_newton(x, p0, i, &spec.config, None, &NewtonOptions::default())?;
                q.row_mut(i).copy_from(&fit.q.transpose());
            }
            Ok(Fit {
                q_hat: AncestryMatrix::with_tolerance(q, 1e-8)?,
                p_hat: None,
            })
        }
        Setting::Unsupervised => {
            let problem = EstimationProblem::unsupervised(x.clone(), spec.config)?;
            let fit = fit_em_multistart(&problem, &spec.em, spec.starts)?;
            let aligned = align_labels(&fit.q_hat, &fit.p_hat, q0, p0)?;
            Ok(Fit {
                q_hat: aligned.q_aligned,
                p_hat: Some(aligned.p_aligned),
            })
        }
    }
}

/// Reduced coordinates used for scaled errors: `labels[j]` is the population
/// of coordinate `j`.
fn run_cells(spec: &SimSpec, labels: &[usize]) -> Result<Vec<Record>> {
    spec.validate()?;
    let cells = spec.cells();
    let mut records = Vec::with_capacity(cells.len() * spec.replicates);
    for (cell_idx, &(m, n)) in cells.iter().enumerate() {
        let q0 = AncestryMatrix::with_tolerance(spec.q0.as_matrix().rows(0, n).into_owned(), 1e-8)?;
        let p0 = spec.p0.truncated(m)?;
        let cell_records: Vec<Record> = (0..spec.replicates)
            .into_par_iter()
            .map(|rep| {
                let start = Instant::now();
                let mut rng = spec.rng(cell_idx, rep);
                let outcome = generate_with_rng(&q0, &p0, &mut rng).and_then(|x| fit_replicate(spec, &x, &q0, &p0));
                let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
                match outcome {
                    Ok(fit) => summarize_fit(spec, m, n, rep, &fit, &q0, &p0, labels, elapsed_ms),
                    Err(e) => Record {
                        m,
                        n,
                        replicate: rep,
                        metric_d: f64::NAN,
                        q_mae: f64::NAN,
                        p_mae: None,
                        estimate: Vec::new(),
                        scaled_error: Vec::new(),
                        at_bound: Vec::new(),
                        elapsed_ms,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect();
        records.extend(cell_records);
    }
    Ok(records)
}

#[allow(clippy::too_many_arguments)]
fn summarize_fit(
    spec: &SimSpec,
    m: usize,
    n: usize,
    rep: usize,
    fit: &Fit,
    q0: &AncestryMatrix,
    p0: &AlleleFreqMatrix,
    labels: &[usize],
    elapsed_ms: f64,
) -> Record {
    let q_mae = (fit.q_hat.as_matrix() - q0.as_matrix()).abs().mean();
    let p_hat = fit.p_hat.as_ref().unwrap_or(p0);
    let p_mae = fit.p_hat.as_ref().map(|p| (p.as_matrix() - p0.as_matrix()).abs().mean());
    let d = metric_d(&fit.q_hat, p_hat, q0, p0).unwrap_or(f64::NAN);
    let sqrt_m = (m as f64).sqrt();
    let eps = spec.config.eps_boundary;
    let scaled_error = labels
        .iter()
        .map(|&k| sqrt_m * (fit.q_hat.get(0, k) - q0.get(0, k)))
        .collect();
    let at_bound = labels
        .iter()
        .map(|&k| {
            let v = fit.q_hat.get(0, k);
            v <= eps || v >= 1.0 - eps
        })
        .collect();
    Record {
        m,
        n,
        replicate: rep,
        metric_d: d,
        q_mae,
        p_mae,
        estimate: fit.q_hat.row(0).iter().copied().collect(),
        scaled_error,
        at_bound,
        elapsed_ms,
        error: None,
    }
}

fn ok_records<'a>(records: &'a [Record], m: usize, n: usize) -> impl Iterator<Item = &'a Record> + 'a {
    records
        .iter()
        .filter(move |r| r.m == m && r.n == n && r.error.is_none())
}

fn base_cell(records: &[Record], m: usize, n: usize, dim: usize) -> CellSummary {
    let ok: Vec<&Record> = ok_records(records, m, n).collect();
    let failed = records.iter().filter(|r| r.m == m && r.n == n && r.error.is_some()).count();
    let cnt = ok.len().max(1) as f64;
    CellSummary {
        m,
        n,
        mean_q_mae: ok.iter().map(|r| r.q_mae).sum::<f64>() / cnt,
        mean_metric_d: ok.iter().map(|r| r.metric_d).sum::<f64>() / cnt,
        failed,
        ks_gaussian: Vec::new(),
        covariance_rel_error: None,
        empirical_covariance: DMatrix::zeros(dim, dim),
        limit_covariance: DMatrix::zeros(dim, dim),
        atoms: Vec::new(),
        ks_continuous: Vec::new(),
    }
}

fn slopes(spec: &SimSpec, cells: &[CellSummary]) -> Vec<(usize, f64)> {
    if spec.m_grid.len() < 2 {
        return Vec::new();
    }
    spec.n_grid
        .iter()
        .map(|&n| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = cells
                .iter()
                .filter(|c| c.n == n)
                .map(|c| ((c.m as f64).ln(), c.mean_q_mae.ln()))
                .unzip();
            (n, ols_slope(&xs, &ys))
        })
        .collect()
}

/// Fits every cell, aligns to the truth and regresses log error on log M.
pub fn run_consistency(spec: &SimSpec) -> Result<ExperimentResult> {
    let k = spec.q0.k();
    let labels: Vec<usize> = (0..k - 1).collect();
    let records = run_cells(spec, &labels)?;
    let cells: Vec<CellSummary> = spec
        .cells()
        .into_iter()
        .map(|(m, n)| base_cell(&records, m, n, k - 1))
        .collect();
    let mut notes = vec![
        "errors are measured against the truth after the best label permutation; \
         other likelihood-equivalent estimates are not corrected for"
            .to_string(),
    ];
    if spec.setting == Setting::Unsupervised && k == 2 {
        notes.push("K = 2 unsupervised fits may differ from the truth by a continuous reparametrization".into());
    }
    Ok(ExperimentResult {
        kind: ExperimentKind::Consistency,
        setting: spec.setting,
        slopes: slopes(spec, &cells),
        records,
        cells,
        stability: Vec::new(),
        labels,
        notes,
    })
}

fn limit_information(q0_row: &[f64], p0: &AlleleFreqMatrix, m: usize) -> Result<DMatrix<f64>> {
    let gamma = expected_info_q(q0_row, p0, 0..m)?;
    if !is_pd(&gamma) {
        return Err(Error::SingularBlock {
            unit: Unit::Individual,
            index: 0,
            min_eigenvalue: crate::fisher::eigen_range(&gamma).0,
        });
    }
    Ok(gamma)
}

fn stability(spec: &SimSpec, records: &[Record], dim: usize) -> Vec<StabilityCheck> {
    let mut out = Vec::new();
    for &n in &spec.n_grid {
        for w in spec.m_grid.windows(2) {
            for coord in 0..dim {
                let a: Vec<f64> = ok_records(records, w[0], n).map(|r| r.scaled_error[coord]).collect();
                let b: Vec<f64> = ok_records(records, w[1], n).map(|r| r.scaled_error[coord]).collect();
                if !a.is_empty() && !b.is_empty() {
                    out.push(StabilityCheck {
                        m_a: w[0],
                        m_b: w[1],
                        n,
                        coord,
                        ks: ks_two_sample(&a, &b),
                    });
                }
            }
        }
    }
    out
}

fn require_supervised(spec: &SimSpec) -> Result<()> {
    if spec.setting != Setting::Supervised {
        return Err(Error::Unsupported(
            "limit-law experiments run in the supervised setting".into(),
        ));
    }
    Ok(())
}

/// Compares `sqrt(M) (q_hat - q0)` of individual 0 with `N(0, Gamma^-1)`.
pub fn run_clt_interior(spec: &SimSpec) -> Result<ExperimentResult> {
    require_supervised(spec)?;
    spec.validate()?;
    let k = spec.q0.k();
    let q0_row: Vec<f64> = spec.q0.row(0).iter().copied().collect();
    if q0_row.iter().any(|&v| v <= spec.config.eps_boundary || v >= 1.0 - spec.config.eps_boundary) {
        return Err(Error::Boundary {
            unit: Unit::Individual,
            index: 0,
        });
    }
    let labels: Vec<usize> = (0..k - 1).collect();
    // Fail before fitting if the limit is degenerate.
    for &m in &spec.m_grid {
        limit_information(&q0_row, &spec.p0, m)?;
    }
    let records = run_cells(spec, &labels)?;
    let mut cells = Vec::new();
    for (m, n) in spec.cells() {
        let mut cell = base_cell(&records, m, n, k - 1);
        let gamma = limit_information(&q0_row, &spec.p0, m)?;
        let law = interior_law(&gamma)?;
        let errs: Vec<DVector<f64>> = ok_records(&records, m, n)
            .map(|r| DVector::from_column_slice(&r.scaled_error))
            .collect();
        if errs.len() >= 2 {
            for j in 0..k - 1 {
                let xs: Vec<f64> = errs.iter().map(|e| e[j]).collect();
                cell.ks_gaussian.push(ks_normal(&xs, 0.0, law.asymptotic_sd[j]));
            }
            cell.empirical_covariance = sample_covariance(&errs);
            cell.covariance_rel_error = Some(frobenius_rel_error(&cell.empirical_covariance, &law.covariance));
        }
        cell.limit_covariance = law.covariance;
        cells.push(cell);
    }
    Ok(ExperimentResult {
        kind: ExperimentKind::CltInterior,
        setting: spec.setting,
        slopes: slopes(spec, &cells),
        stability: stability(spec, &records, k - 1),
        records,
        cells,
        labels,
        notes: vec!["statistics refer to individual 0".into()],
    })
}

/// Compares `sqrt(M) (q_hat - q0)` of individual 0 with the projected law
/// when `q0` has coordinates on the boundary.
pub fn run_clt_boundary(spec: &SimSpec) -> Result<ExperimentResult> {
    require_supervised(spec)?;
    spec.validate()?;
    let q0_row: Vec<f64> = spec.q0.row(0).iter().copied().collect();
    let cone = ConeSpec::from_ancestry(&q0_row, spec.config.eps_boundary)?;
    let dim = cone.dim;
    let p_relabeled = cone.relabel_frequencies(&spec.p0)?;
    let q_relabeled = cone.relabel_ancestry(&q0_row);
    for &m in &spec.m_grid {
        limit_information(&q_relabeled, &p_relabeled, m)?;
    }
    let records = run_cells(spec, &cone.labels)?;
    let mut cells = Vec::new();
    for (cell_idx, (m, n)) in spec.cells().into_iter().enumerate() {
        let mut cell = base_cell(&records, m, n, dim);
        let gamma = limit_information(&q_relabeled, &p_relabeled, m)?;
        let law = boundary_law(&gamma, &cone, spec.law_samples, spec.seed ^ (0x9e37_79b9_7f4a_7c15 ^ cell_idx as u64))?;
        let ok: Vec<&Record> = ok_records(&records, m, n).collect();
        let errs: Vec<DVector<f64>> = ok.iter().map(|r| DVector::from_column_slice(&r.scaled_error)).collect();
        for j in 0..dim {
            let constrained = cone.is_constrained(j);
            if constrained {
                let hits = ok.iter().filter(|r| r.at_bound[j]).count();
                cell.atoms.push(AtomComparison {
                    coord: j,
                    empirical: hits as f64 / ok.len().max(1) as f64,
                    limit: law.atom_probability(j),
                });
            }
            let emp: Vec<f64> = ok
                .iter()
                .filter(|r| !(constrained && r.at_bound[j]))
                .map(|r| r.scaled_error[j])
                .collect();
            let lim: Vec<f64> = law
                .marginal(j)
                .into_iter()
                .filter(|&v| !(constrained && v == 0.0))
                .collect();
            cell.ks_continuous.push((!emp.is_empty() && !lim.is_empty()).then(|| ks_two_sample(&emp, &lim)));
        }
        if errs.len() >= 2 {
            cell.empirical_covariance = sample_covariance(&errs);
            cell.limit_covariance = sample_covariance(&law.samples);
            cell.covariance_rel_error = Some(frobenius_rel_error(&cell.empirical_covariance, &cell.limit_covariance));
        }
        cells.push(cell);
    }
    let mut notes = vec![
        format!(
            "reduced coordinates are populations {:?}; population {} is eliminated",
            cone.labels, cone.dropped
        ),
        "statistics refer to individual 0; empirical atoms are estimates within eps_boundary of the bound".into(),
    ];
    if cone.is_empty() {
        notes.push("q0 is interior: the projected law is the Gaussian limit".into());
    }
    Ok(ExperimentResult {
        kind: ExperimentKind::CltBoundary,
        setting: spec.setting,
        slopes: slopes(spec, &cells),
        stability: stability(spec, &records, dim),
        records,
        cells,
        labels: cone.labels.clone(),
        notes,
    })
}

/// Mean and variance of a marginal, handy for summaries.
pub fn marginal_moments(records: &[Record], coord: usize) -> (f64, f64) {
    let xs: Vec<f64> = records
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.scaled_error[coord])
        .collect();
    mean_var(&xs)
}

/// K x M frequencies drawn independently and uniformly from `[lo, hi]`,
/// redrawing each marker until all pairwise gaps are at least `min_gap`.
pub fn separated_frequencies(k: usize, m: usize, lo: f64, hi: f64, min_gap: f64, seed: u64) -> Result<AlleleFreqMatrix> {
    if !(0.0..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
        return Err(Error::InvalidInput("need 0 <= lo <= hi <= 1".into()));
    }
    if k > 1 && min_gap * (k - 1) as f64 >= hi - lo && min_gap > 0.0 {
        return Err(Error::InvalidInput("min_gap too large for the range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = DMatrix::zeros(k, m);
    for mm in 0..m {
        loop {
            let col: Vec<f64> = (0..k).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
            let ok = (0..k).all(|a| (a + 1..k).all(|b| (col[a] - col[b]).abs() >= min_gap));
            if ok {
                for (kk, v) in col.into_iter().enumerate() {
                    p[(kk, mm)] = v;
                }
                break;
            }
        }
    }
    AlleleFreqMatrix::new(p)
}
