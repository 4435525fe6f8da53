//! `admixclt`: fit admixture proportions, quantify their uncertainty, check
//! identifiability and run simulation studies.
//!
//! Exit codes: 0 success, 2 input error, 3 non-convergence (results are still
//! written), 4 numerical failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use admix_core::asymptotics::{boundary_law, interior_law, summarize_law, BackTransform, ConeSpec, Law};
use admix_core::estimation::{
    fit_em, fit_em_multistart, fit_supervised_newton, EmOptions, EstimationProblem, FitResult, NewtonOptions,
};
use admix_core::fisher::{
    check_assumption_moments, check_assumption_star, check_assumption_starstar, check_condition_au,
    degenerate_markers, expected_info_q, is_pd, simplex_grid,
};
use admix_core::io::{self, Experiment};
use admix_core::simulation::{run_clt_boundary, run_clt_interior, run_consistency, ExperimentResult};
use admix_core::uniqueness::{check_uniqueness_general, check_uniqueness_k2, falsification_search, Verdict};
use admix_core::{model, AncestryMatrix, Error, ModelConfig};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::json;

#[derive(Parser)]
#[command(name = "admixclt", version, about = "Admixture proportions with asymptotic uncertainty")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Supervised,
    Semi,
    Unsupervised,
}

#[derive(Subcommand)]
enum Command {
    /// Maximum-likelihood fit of Q (and P unless supervised).
    Estimate {
        #[arg(long)]
        geno: PathBuf,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long, value_enum, default_value = "unsupervised")]
        mode: Mode,
        /// Known frequencies, M x K; `NA` lines mark free markers (semi).
        #[arg(long)]
        p_file: Option<PathBuf>,
        /// Known ancestries, N x K; `NA` lines mark free individuals (semi).
        #[arg(long)]
        q_known: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        starts: usize,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Limit law of sqrt(M)(q_hat - q0) for one individual.
    Uncertainty {
        #[arg(long)]
        q_file: PathBuf,
        #[arg(long)]
        p_file: PathBuf,
        /// Genotypes; restricts the information to the individual's observed markers.
        #[arg(long)]
        geno: Option<PathBuf>,
        /// 0-based row index, or an identifier listed in --ids.
        #[arg(long, default_value = "0")]
        individual: String,
        /// One identifier per line, in .Q row order.
        #[arg(long)]
        ids: Option<PathBuf>,
        /// Marker count used to scale intervals (default: markers used).
        #[arg(long = "M")]
        m: Option<usize>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        eps_boundary: f64,
        /// Also write the raw limit-law draws to samples.csv.
        #[arg(long)]
        write_samples: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Identifiability diagnostics for an estimate.
    Check {
        #[arg(long)]
        q_file: PathBuf,
        #[arg(long)]
        p_file: PathBuf,
        #[arg(long, default_value_t = admix_core::uniqueness::DEFAULT_TOL)]
        tol: f64,
        /// Separation used by the likelihood-distinguishability check.
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run a simulation experiment described by a TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Input(String),
    NotConverged,
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::SingularBlock { .. } | Error::NotPositiveDefinite | Error::InfiniteLikelihood { .. } => {
                Failure::Numerical(e.to_string())
            }
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Estimate {
            geno,
            k,
            mode,
            p_file,
            q_known,
            seed,
            starts,
            max_iter,
            out,
        } => estimate(&geno, k, mode, p_file.as_deref(), q_known.as_deref(), seed, starts, max_iter, &out),
        Command::Uncertainty {
            q_file,
            p_file,
            geno,
            individual,
            ids,
            m,
            samples,
            seed,
            eps_boundary,
            write_samples,
            out,
        } => uncertainty(&UncertaintyArgs {
            q_file,
            p_file,
            geno,
            individual,
            ids,
            m,
            samples,
            seed,
            eps_boundary,
            write_samples,
            out,
        }),
        Command::Check {
            q_file,
            p_file,
            tol,
            delta,
            trials,
            seed,
            json,
        } => check(&q_file, &p_file, tol, delta, trials, seed, json.as_deref()),
        Command::Simulate { config, out } => simulate(&config, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged) => {
            eprintln!("warning: fit did not converge; results written and flagged");
            ExitCode::from(3)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(4)
        }
    }
}

fn input(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

fn create_out(out: &Path) -> CmdResult {
    fs::create_dir_all(out).map_err(|e| input(format!("{}: {e}", out.display())))
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    geno: &Path,
    k: Option<usize>,
    mode: Mode,
    p_file: Option<&Path>,
    q_known: Option<&Path>,
    seed: u64,
    starts: usize,
    max_iter: usize,
    out: &Path,
) -> CmdResult {
    let x = io::read_genotypes(geno)?;
    let opts = EmOptions {
        max_iter,
        seed,
        ..EmOptions::default()
    };
    let (fit, newton) = match mode {
        Mode::Supervised => {
            if q_known.is_some() {
                return Err(input("--q-known is only used with --mode semi"));
            }
            let p = io::read_p(p_file.ok_or_else(|| input("--mode supervised needs --p-file"))?)?;
            if k.is_some_and(|k| k != p.k()) {
                return Err(input(format!("--K disagrees with the {} columns of --p-file", p.k())));
            }
            supervised_fit(x.clone(), &p, opts)?
        }
        Mode::Semi => {
            let k = k.ok_or_else(|| input("--mode semi needs --K"))?;
            let known_q = q_known.map(|f| io::read_q_partial(f, k)).transpose()?;
            let known_p = p_file.map(|f| io::read_p_partial(f, k)).transpose()?;
            if known_q.is_none() && known_p.is_none() {
                return Err(input("--mode semi needs --q-known and/or --p-file"));
            }
            let problem = EstimationProblem::semi_supervised(x.clone(), known_q, known_p, ModelConfig::new(k))?;
            (fit_em_multistart(&problem, &opts, starts.max(1))?, None)
        }
        Mode::Unsupervised => {
            if p_file.is_some() || q_known.is_some() {
                return Err(input("--mode unsupervised takes no --p-file or --q-known"));
            }
            let k = k.ok_or_else(|| input("--mode unsupervised needs --K"))?;
            let problem = EstimationProblem::unsupervised(x.clone(), ModelConfig::new(k))?;
            (fit_em_multistart(&problem, &opts, starts.max(1))?, None)
        }
    };
    create_out(out)?;
    io::write_q(&out.join("result.Q"), &fit.q_hat)?;
    io::write_p(&out.join("result.P"), &fit.p_hat)?;
    fs::write(out.join("loglik.csv"), io::format_trace_csv(&fit.loglik_trace))?;
    let mode_name = match mode {
        Mode::Supervised => "supervised",
        Mode::Semi => "semi",
        Mode::Unsupervised => "unsupervised",
    };
    let report = json!({
        "mode": mode_name,
        "seed": seed,
        "starts": starts,
        "n_individuals": x.n_individuals(),
        "n_markers": x.n_markers(),
        "final_loglik": fit.final_loglik(),
        "fit": fit,
        "newton": newton,
    });
    io::write_json(&out.join("fit.json"), &report)?;
    println!(
        "{mode_name} fit: {} iterations, log-likelihood per allele {:.8}, converged = {}",
        fit.iterations,
        fit.final_loglik(),
        fit.converged
    );
    if fit.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

/// EM warm start followed by a projected Newton polish of every row.
fn supervised_fit(
    x: admix_core::GenotypeMatrix,
    p: &admix_core::AlleleFreqMatrix,
    opts: EmOptions,
) -> Result<(FitResult, Option<serde_json::Value>), Failure> {
    use rayon::prelude::*;
    let config = ModelConfig::new(p.k());
    let problem = EstimationProblem::supervised(x, p, config)?;
    let warm = fit_em(
        &problem,
        &EmOptions {
            max_iter: opts.max_iter.min(200),
            ..opts
        },
    )?;
    let x = &problem.x;
    let rows: Vec<_> = (0..x.n_individuals())
        .into_par_iter()
        .map(|i| {
            let start: Vec<f64> = warm.q_hat.row(i).iter().copied().collect();
            fit_supervised_newton(x, p, i, &config, Some(&start), &NewtonOptions::default())
        })
        .collect::<admix_core::Result<_>>()?;
    let mut q = DMatrix::zeros(x.n_individuals(), p.k());
    for (i, r) in rows.iter().enumerate() {
        q.row_mut(i).copy_from(&r.q.transpose());
    }
    let q_hat = AncestryMatrix::with_tolerance(q, 1e-8)?;
    let mut trace = warm.loglik_trace.clone();
    trace.push(model::log_likelihood(x, &q_hat, p)?);
    let converged = rows.iter().all(|r| r.converged);
    let newton = json!({
        "iterations": rows.iter().map(|r| r.iterations).collect::<Vec<_>>(),
        "kkt_residual": rows.iter().map(|r| r.kkt_residual).collect::<Vec<_>>(),
        "em_fallbacks": rows.iter().map(|r| r.em_fallbacks).sum::<usize>(),
    });
    let eps = config.eps_boundary;
    let fit = FitResult {
        boundary_flags_q: q_hat
            .as_matrix()
            .row_iter()
            .map(|r| r.iter().map(|&v| v <= eps || v >= 1.0 - eps).collect())
            .collect(),
        q_hat,
        p_hat: p.clone(),
        loglik_trace: trace,
        iterations: warm.iterations + rows.iter().map(|r| r.iterations).max().unwrap_or(0),
        converged,
    };
    Ok((fit, Some(newton)))
}

struct UncertaintyArgs {
    q_file: PathBuf,
    p_file: PathBuf,
    geno: Option<PathBuf>,
    individual: String,
    ids: Option<PathBuf>,
    m: Option<usize>,
    samples: usize,
    seed: u64,
    eps_boundary: f64,
    write_samples: bool,
    out: PathBuf,
}

fn resolve_individual(spec: &str, ids: Option<&Path>, n: usize) -> Result<(usize, Option<String>), Failure> {
    let names = ids.map(io::read_ids).transpose()?;
    if let Some(names) = &names {
        if names.len() != n {
            return Err(input(format!("--ids lists {} names for {n} rows", names.len())));
        }
        if let Some(i) = names.iter().position(|s| s == spec) {
            return Ok((i, Some(spec.to_string())));
        }
    }
    let i: usize = spec
        .parse()
        .map_err(|_| input(format!("individual `{spec}` is neither an index nor a listed id")))?;
    if i >= n {
        return Err(input(format!("individual {i} out of range (N = {n})")));
    }
    Ok((i, names.map(|v| v[i].clone())))
}

fn uncertainty(a: &UncertaintyArgs) -> CmdResult {
    let q = io::read_q(&a.q_file)?;
    let p = io::read_p(&a.p_file)?;
    if q.k() != p.k() {
        return Err(input(format!("Q has K = {} but P has K = {}", q.k(), p.k())));
    }
    if a.samples == 0 {
        return Err(input("--samples must be positive"));
    }
    let (ind, id) = resolve_individual(&a.individual, a.ids.as_deref(), q.n_individuals())?;
    let markers: Vec<usize> = match &a.geno {
        Some(g) => {
            let x = io::read_genotypes(g)?;
            if x.n_markers() != p.n_markers() || x.n_individuals() != q.n_individuals() {
                return Err(input("genotype dimensions disagree with Q and P"));
            }
            (0..x.n_markers()).filter(|&m| x.get(ind, m).is_some()).collect()
        }
        None => (0..p.n_markers()).collect(),
    };
    if markers.is_empty() {
        return Err(input("the individual has no observed markers"));
    }
    let m_scale = a.m.unwrap_or(markers.len());
    let q_row: Vec<f64> = q.row(ind).iter().copied().collect();

    let cone = ConeSpec::from_ancestry(&q_row, a.eps_boundary)?;
    let p_rel = cone.relabel_frequencies(&p)?;
    let q_rel = cone.relabel_ancestry(&q_row);
    let gamma = expected_info_q(&q_rel, &p_rel, markers.iter().copied())?;
    create_out(&a.out)?;
    if !is_pd(&gamma) {
        let eig = nalgebra::SymmetricEigen::new(gamma.clone());
        let diag = json!({
            "individual": ind,
            "populations": cone.labels,
            "information": gamma.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
            "eigenvalues": eig.eigenvalues.iter().copied().collect::<Vec<_>>(),
            "degenerate_markers": degenerate_markers(&q_row, &p, markers.iter().copied()),
            "assumption_star": check_assumption_star(&p),
        });
        io::write_json(&a.out.join("diagnostics.json"), &diag)?;
        eprintln!("{}", serde_json::to_string_pretty(&diag).map_err(Error::from)?);
        return Err(Failure::Numerical("information matrix is singular".into()));
    }

    let dim = cone.dim;
    let mut point_masses = Vec::new();
    let (kind, summaries, samples) = if cone.is_empty() {
        let law = interior_law(&gamma)?;
        let s = (0..dim)
            .map(|j| {
                summarize_law(
                    Law::Gaussian(&law),
                    j,
                    cone.labels[j],
                    None,
                    Some(BackTransform {
                        estimate: q_row[cone.labels[j]],
                        n_markers: m_scale,
                    }),
                )
            })
            .collect::<admix_core::Result<Vec<_>>>()?;
        let draws = if a.write_samples {
            boundary_law(&gamma, &cone, a.samples, a.seed)?.samples
        } else {
            Vec::new()
        };
        ("gaussian", s, draws)
    } else {
        let law = boundary_law(&gamma, &cone, a.samples, a.seed)?;
        let s = (0..dim)
            .map(|j| {
                summarize_law(
                    Law::Projected(&law),
                    j,
                    cone.labels[j],
                    None,
                    Some(BackTransform {
                        estimate: q_row[cone.labels[j]],
                        n_markers: m_scale,
                    }),
                )
            })
            .collect::<admix_core::Result<Vec<_>>>()?;
        for (face, prob) in &law.point_masses {
            point_masses.push(json!({
                "pinned_populations": face.iter().map(|&j| cone.labels[j]).collect::<Vec<_>>(),
                "probability": prob,
            }));
        }
        ("projected", s, law.samples)
    };

    let mut csv = String::from("coord,bin_left,bin_right,mass\n");
    for s in &summaries {
        for b in &s.bins {
            let _ = writeln!(csv, "{},{:.9},{:.9},{:.9}", s.coord, b.left, b.right, b.mass);
        }
    }
    fs::write(a.out.join("density.csv"), csv)?;
    if a.write_samples {
        let header: Vec<String> = cone.labels.iter().map(|l| format!("pop{l}")).collect();
        let mut text = header.join(",") + "\n";
        for v in &samples {
            let row: Vec<String> = v.iter().map(|x| format!("{x:.9}")).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(a.out.join("samples.csv"), text)?;
    }

    let k_min: Vec<usize> = cone.k_min.iter().map(|&j| cone.labels[j]).collect();
    let k_max: Vec<usize> = cone.k_max.iter().map(|&j| cone.labels[j]).collect();
    let summary = json!({
        "individual": ind,
        "id": id,
        "k": q.k(),
        "n_markers": m_scale,
        "markers_used": markers.len(),
        "estimate": q_row,
        "law": kind,
        "dropped_population": cone.dropped,
        "populations": cone.labels,
        "lower_boundary_populations": k_min,
        "upper_boundary_populations": k_max,
        "samples": if kind == "projected" { a.samples } else { 0 },
        "seed": a.seed,
        "information": gamma.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
        "point_masses": point_masses,
        "coordinates": summaries,
        "notes": [
            "coordinates are populations other than the dropped one, whose deviation is minus their sum",
            "flipping the counted allele maps p to 1 - p and leaves the likelihood unchanged",
        ],
    });
    io::write_json(&a.out.join("summary.json"), &summary)?;

    println!("individual {ind}: {kind} limit law, M = {m_scale}");
    for s in &summaries {
        let iv = s.interval.map(|[l, h]| format!("[{l:.6}, {h:.6}]")).unwrap_or_default();
        println!(
            "  population {}: estimate {:.6}, atom probability {:.4}, 95% interval {iv}",
            s.population, q_row[s.population], s.atom_probability
        );
    }
    Ok(())
}

fn check(q_file: &Path, p_file: &Path, tol: f64, delta: f64, trials: usize, seed: u64, json_out: Option<&Path>) -> CmdResult {
    let q = io::read_q(q_file)?;
    let p = io::read_p(p_file)?;
    if q.k() != p.k() {
        return Err(input(format!("Q has K = {} but P has K = {}", q.k(), p.k())));
    }
    if !(tol > 0.0 && tol < 0.5) {
        return Err(input("--tol must lie in (0, 0.5)"));
    }
    let k = q.k();
    let report = if k == 2 {
        check_uniqueness_k2(&q, &p, tol)?
    } else {
        check_uniqueness_general(&q, &p, tol)?
    };
    let counterexample = falsification_search(&q, &p, trials, seed, tol);
    let star = check_assumption_star(&p);
    let starstar = check_assumption_starstar(&q);
    let moments = check_assumption_moments(&q, &p)?;

    let steps = match k {
        0..=3 => 40,
        4 => 20,
        5 => 10,
        _ => 4,
    };
    let grid = simplex_grid(k, steps);
    let mut au_holds = true;
    let mut au_statistic = f64::NAN;
    let mut direction = Vec::new();
    let mut degenerate: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for i in 0..q.n_individuals() {
        let row: Vec<f64> = q.row(i).iter().copied().collect();
        let au = check_condition_au(&p, &row, &grid, 2.0 * delta, delta)?;
        au_holds &= au.holds;
        au_statistic = au.k2_statistic.unwrap_or(au.statistic);
        direction = au.weakest_direction.clone();
        if !au.degenerate_candidates.is_empty() {
            degenerate.insert(i, au.degenerate_candidates.iter().map(|c| c.q.clone()).collect());
        }
    }
    let verdict = match report.verdict {
        Verdict::UniqueUpToPermutation => "unique-up-to-permutation",
        Verdict::Inconclusive => "inconclusive",
    };

    println!("uniqueness verdict: {verdict} (tol {tol})");
    for (kk, v) in report.vertex_individuals.iter().enumerate() {
        println!("  population {kk}: {} vertex individuals", v.len());
    }
    for set in &report.anchor_markers {
        println!("  anchors ({}, {}): {}", set.k, set.j, set.anchors.len());
    }
    if !report.collisions.is_empty() {
        println!("  colliding anchor values for pairs {:?}", report.collisions);
    }
    match &counterexample {
        Some(s) => println!("  possible non-permutation matrix found: {:?}", s.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>()),
        None => println!("  no possible non-permutation matrix in {trials} random trials"),
    }
    println!(
        "assumption counts: {} disjoint independent marker subsets (size {}), {} individual subsets (size {})",
        star.complete_subsets, star.subset_size, starstar.complete_subsets, starstar.subset_size
    );
    println!(
        "distinguishability statistic: {au_statistic:.6e} (threshold {:.3e}), holds = {au_holds}",
        delta * delta
    );
    if !au_holds {
        println!("  degenerate direction: {direction:?}");
        for (i, cands) in degenerate.iter().take(5) {
            println!("  individual {i}: equal-likelihood ancestries {cands:?}");
        }
    }
    for note in &report.notes {
        println!("note: {note}");
    }

    if let Some(path) = json_out {
        let doc = json!({
            "uniqueness": report,
            "counterexample": counterexample.map(|s| s.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>()),
            "assumption_star": star,
            "assumption_starstar": starstar,
            "moments": moments,
            "distinguishability": {
                "statistic": au_statistic,
                "threshold": delta * delta,
                "holds": au_holds,
                "degenerate_direction": direction,
                "degenerate_candidates": degenerate,
            },
        });
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_out(parent)?;
        }
        io::write_json(path, &doc)?;
    }
    Ok(())
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.9}")).collect::<Vec<_>>().join(";")
}

fn experiment_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("m,n,replicate,metric_d,q_mae,p_mae,estimate,scaled_error,at_bound,elapsed_ms,error\n");
    for r in &result.records {
        let at: Vec<&str> = r.at_bound.iter().map(|&b| if b { "1" } else { "0" }).collect();
        let _ = writeln!(
            out,
            "{},{},{},{:.9},{:.9},{},{},{},{},{:.3},{}",
            r.m,
            r.n,
            r.replicate,
            r.metric_d,
            r.q_mae,
            r.p_mae.map(|v| format!("{v:.9}")).unwrap_or_default(),
            join_f64(&r.estimate),
            join_f64(&r.scaled_error),
            at.join(";"),
            r.elapsed_ms,
            io::csv_field(r.error.as_deref().unwrap_or("")),
        );
    }
    out
}

fn simulate(config: &Path, out: &Path) -> CmdResult {
    let cfg = io::read_sim_config(config)?;
    let result = match cfg.experiment {
        Experiment::Consistency => run_consistency(&cfg.spec),
        Experiment::CltInterior => run_clt_interior(&cfg.spec),
        Experiment::CltBoundary => run_clt_boundary(&cfg.spec),
    }?;
    create_out(out)?;
    fs::write(out.join("experiment.csv"), experiment_csv(&result))?;
    let summary = json!({
        "experiment": cfg.experiment,
        "seed": cfg.spec.seed,
        "replicates": cfg.spec.replicates,
        "m_grid": cfg.spec.m_grid,
        "n_grid": cfg.spec.n_grid,
        "records": result.records.len(),
        "failed": result.records.iter().filter(|r| r.error.is_some()).count(),
        "result": result,
    });
    io::write_json(&out.join("summary.json"), &summary)?;
    for (n, slope) in &result.slopes {
        println!("N = {n}: log-log slope of mean ancestry error vs M = {slope:.4}");
    }
    for c in &result.cells {
        println!(
            "M = {}, N = {}: mean |q_hat - q0| = {:.6}, failed = {}",
            c.m, c.n, c.mean_q_mae, c.failed
        );
    }
    Ok(())
}
