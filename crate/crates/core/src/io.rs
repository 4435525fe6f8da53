//! Text formats.
//!
//! * `.Q`: N lines of K whitespace-separated ancestry fractions.
//! * `.P`: M lines of K whitespace-separated allele frequencies. The file is
//!   marker-major (M x K) and is transposed to the in-memory K x M layout.
//! * genotypes: N lines of M integers in `{0, 1, 2}`, `9` for missing.
//!
//! For semi-supervised fits a line consisting of the single token `NA`
//! marks a free row (in `.Q`) or a free marker (in `.P`).
//!
//! The simulation config is TOML; see [`SimConfig`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::KnownBlock;
use crate::model::{AlleleFreqMatrix, AncestryMatrix, GenotypeMatrix, ModelConfig, MISSING};
use crate::simulation::{separated_frequencies, Setting, SimSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest row-sum deviation of a `.Q` line that is silently renormalized.
pub const Q_RENORMALIZE_TOL: f64 = 1e-4;

fn parse_err(path: &str, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        column,
        message: message.into(),
    }
}

/// Non-blank lines as `(line number, [(column, token)])`, 1-based.
fn tokenize(text: &str) -> Vec<(usize, Vec<(usize, &str)>)> {
    text.lines()
        .enumerate()
        .filter_map(|(ln, line)| {
            let mut toks = Vec::new();
            let mut start = None;
            for (pos, ch) in line.char_indices().chain(std::iter::once((line.len(), ' '))) {
                match (ch.is_whitespace(), start) {
                    (false, None) => start = Some(pos),
                    (true, Some(s)) => {
                        toks.push((s + 1, &line[s..pos]));
                        start = None;
                    }
                    _ => {}
                }
            }
            (!toks.is_empty()).then_some((ln + 1, toks))
        })
        .collect()
}

/// Line number and values, `None` for an `NA` row.
type ProbRow = (usize, Option<Vec<f64>>);

/// Rows of probabilities; `None` for `NA` rows when `allow_na` is set.
fn parse_prob_rows(text: &str, path: &str, allow_na: bool) -> Result<(usize, Vec<ProbRow>)> {
    let mut width = None;
    let mut rows = Vec::new();
    for (ln, toks) in tokenize(text) {
        if allow_na && toks.len() == 1 && toks[0].1 == "NA" {
            rows.push((ln, None));
            continue;
        }
        match width {
            None => width = Some(toks.len()),
            Some(w) if w != toks.len() => {
                return Err(parse_err(path, ln, 1, format!("expected {w} columns, found {}", toks.len())));
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(toks.len());
        for (col, tok) in toks {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, ln, col, format!("`{tok}` is not a number")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(parse_err(path, ln, col, format!("{v} is outside [0, 1]")));
            }
            row.push(v);
        }
        rows.push((ln, Some(row)));
    }
    let width = width.ok_or_else(|| parse_err(path, 1, 1, "no data rows"))?;
    Ok((width, rows))
}

fn normalize_q_row(row: &mut [f64], path: &str, line: usize) -> Result<()> {
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > Q_RENORMALIZE_TOL {
        return Err(parse_err(path, line, 1, format!("row sums to {s}, expected 1")));
    }
    row.iter_mut().for_each(|v| *v /= s);
    Ok(())
}

pub fn parse_q(text: &str, path: &str) -> Result<AncestryMatrix> {
    let (k, rows) = parse_prob_rows(text, path, false)?;
    let mut q = DMatrix::zeros(rows.len(), k);
    for (i, (ln, row)) in rows.into_iter().enumerate() {
        let mut row = row.expect("NA disabled");
        normalize_q_row(&mut row, path, ln)?;
        for (kk, v) in row.into_iter().enumerate() {
            q[(i, kk)] = v;
        }
    }
    AncestryMatrix::new(q)
}

pub fn parse_p(text: &str, path: &str) -> Result<AlleleFreqMatrix> {
    let (k, rows) = parse_prob_rows(text, path, false)?;
    let mut p = DMatrix::zeros(k, rows.len());
    for (m, (_, row)) in rows.into_iter().enumerate() {
        for (kk, v) in row.expect("NA disabled").into_iter().enumerate() {
            p[(kk, m)] = v;
        }
    }
    AlleleFreqMatrix::new(p)
}

/// `.Q` with optional `NA` rows. `k` is needed when every row is `NA`.
pub fn parse_q_partial(text: &str, path: &str, k: usize) -> Result<KnownBlock> {
    let (width, rows) = parse_prob_rows(text, path, true).or_else(|e| {
        // A file with only NA rows has no width; fall back to `k`.
        if tokenize(text).iter().all(|(_, t)| t.len() == 1 && t[0].1 == "NA") && !text.trim().is_empty() {
            Ok((k, tokenize(text).into_iter().map(|(ln, _)| (ln, None)).collect()))
        } else {
            Err(e)
        }
    })?;
    if width != k {
        return Err(parse_err(path, 1, 1, format!("expected K = {k} columns, found {width}")));
    }
    let mut values = DMatrix::from_element(rows.len(), k, 1.0 / k as f64);
    let mut fixed = vec![false; rows.len()];
    for (i, (ln, row)) in rows.into_iter().enumerate() {
        if let Some(mut row) = row {
            normalize_q_row(&mut row, path, ln)?;
            for (kk, v) in row.into_iter().enumerate() {
                values[(i, kk)] = v;
            }
            fixed[i] = true;
        }
    }
    Ok(KnownBlock { values, fixed })
}

/// `.P` with optional `NA` markers, returned K x M.
pub fn parse_p_partial(text: &str, path: &str, k: usize) -> Result<KnownBlock> {
    let lines = tokenize(text);
    if lines.is_empty() {
        return Err(parse_err(path, 1, 1, "no data rows"));
    }
    let all_na = lines.iter().all(|(_, t)| t.len() == 1 && t[0].1 == "NA");
    let (width, rows) = if all_na {
        (k, lines.into_iter().map(|(ln, _)| (ln, None)).collect())
    } else {
        parse_prob_rows(text, path, true)?
    };
    if width != k {
        return Err(parse_err(path, 1, 1, format!("expected K = {k} columns, found {width}")));
    }
    let mut values = DMatrix::from_element(k, rows.len(), 0.5);
    let mut fixed = vec![false; rows.len()];
    for (m, (_, row)) in rows.into_iter().enumerate() {
        if let Some(row) = row {
            for (kk, v) in row.into_iter().enumerate() {
                values[(kk, m)] = v;
            }
            fixed[m] = true;
        }
    }
    Ok(KnownBlock { values, fixed })
}

pub fn parse_genotypes(text: &str, path: &str) -> Result<GenotypeMatrix> {
    let mut width = None;
    let mut counts = Vec::new();
    let mut n = 0;
    for (ln, toks) in tokenize(text) {
        match width {
            None => width = Some(toks.len()),
            Some(w) if w != toks.len() => {
                return Err(parse_err(path, ln, 1, format!("expected {w} markers, found {}", toks.len())));
            }
            _ => {}
        }
        for (col, tok) in toks {
            match tok.parse::<u8>() {
                Ok(v) if v <= 2 || v == MISSING => counts.push(v),
                _ => {
                    return Err(parse_err(
                        path,
                        ln,
                        col,
                        format!("`{tok}` is not a genotype (0, 1, 2 or {MISSING})"),
                    ))
                }
            }
        }
        n += 1;
    }
    let m = width.ok_or_else(|| parse_err(path, 1, 1, "no data rows"))?;
    GenotypeMatrix::new(n, m, counts)
}

fn read(path: &Path) -> Result<(String, String)> {
    Ok((fs::read_to_string(path)?, path.display().to_string()))
}

pub fn read_q(path: &Path) -> Result<AncestryMatrix> {
    let (text, name) = read(path)?;
    parse_q(&text, &name)
}

pub fn read_p(path: &Path) -> Result<AlleleFreqMatrix> {
    let (text, name) = read(path)?;
    parse_p(&text, &name)
}

pub fn read_q_partial(path: &Path, k: usize) -> Result<KnownBlock> {
    let (text, name) = read(path)?;
    parse_q_partial(&text, &name, k)
}

pub fn read_p_partial(path: &Path, k: usize) -> Result<KnownBlock> {
    let (text, name) = read(path)?;
    parse_p_partial(&text, &name, k)
}

pub fn read_genotypes(path: &Path) -> Result<GenotypeMatrix> {
    let (text, name) = read(path)?;
    parse_genotypes(&text, &name)
}

/// One identifier per line.
pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.split_whitespace().next().unwrap_or(l).to_string())
        .collect())
}

fn format_rows<'a>(rows: impl Iterator<Item = Vec<f64>> + 'a) -> String {
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn format_q(q: &AncestryMatrix) -> String {
    format_rows(q.as_matrix().row_iter().map(|r| r.iter().copied().collect()))
}

pub fn format_p(p: &AlleleFreqMatrix) -> String {
    format_rows(p.as_matrix().column_iter().map(|c| c.iter().copied().collect()))
}

pub fn format_genotypes(x: &GenotypeMatrix) -> String {
    let mut out = String::new();
    for i in 0..x.n_individuals() {
        let line: Vec<String> = x.row(i).iter().map(u8::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_q(path: &Path, q: &AncestryMatrix) -> Result<()> {
    Ok(fs::write(path, format_q(q))?)
}

pub fn write_p(path: &Path, p: &AlleleFreqMatrix) -> Result<()> {
    Ok(fs::write(path, format_p(p))?)
}

pub fn write_genotypes(path: &Path, x: &GenotypeMatrix) -> Result<()> {
    Ok(fs::write(path, format_genotypes(x))?)
}

/// Serializes `value` with a leading `schema_version` field (objects only).
pub fn to_versioned_json(value: &impl Serialize) -> Result<serde_json::Value> {
    let inner = serde_json::to_value(value)?;
    Ok(match inner {
        serde_json::Value::Object(map) => {
            let mut out = serde_json::Map::new();
            out.insert("schema_version".into(), SCHEMA_VERSION.into());
            out.extend(map);
            serde_json::Value::Object(out)
        }
        other => other,
    })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let v = to_versioned_json(value)?;
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    Ok(fs::write(path, text)?)
}

/// `iteration,loglik` rows.
pub fn format_trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,loglik\n");
    for (it, v) in trace.iter().enumerate() {
        let _ = writeln!(out, "{it},{v:.12}");
    }
    out
}

/// Minimal quoting for free-text CSV fields.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ---------------------------------------------------------------------------
// Simulation config

/// Parsed `simulate` config.
///
/// ```toml
/// experiment = "consistency"     # or "clt_interior", "clt_boundary"
/// setting = "supervised"         # or "unsupervised"
/// seed = 1
/// replicates = 100
/// m_grid = [250, 1000, 4000]
/// n_grid = [1]
/// starts = 1                     # optional, EM starts (unsupervised)
/// law_samples = 100000           # optional, boundary runs
///
/// [model]                        # optional
/// eps_clamp = 1e-6
/// eps_boundary = 1e-4
///
/// [truth]
/// q0 = [[0.3, 0.7]]              # or q_file = "truth.Q"
///
/// [truth.frequencies]            # or p_file = "truth.P"
/// kind = "separated"             # "uniform" is separated with min_gap = 0
/// lo = 0.05
/// hi = 0.95
/// min_gap = 0.4
/// seed = 7
/// ```
///
/// Frequencies are generated for `max(m_grid)` markers. Relative file paths
/// are resolved against the config's directory.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub experiment: Experiment,
    pub spec: SimSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Consistency,
    CltInterior,
    CltBoundary,
}

fn cfg_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

struct Section<'a> {
    table: &'a toml::Table,
    path: String,
}

impl<'a> Section<'a> {
    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.table.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(cfg_err(&join(&self.path, key), "unknown key"));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&'a toml::Value> {
        self.table.get(key)
    }

    fn require(&self, key: &str) -> Result<&'a toml::Value> {
        self.get(key).ok_or_else(|| cfg_err(&join(&self.path, key), "missing required key"))
    }

    fn key(&self, key: &str) -> String {
        join(&self.path, key)
    }

    fn str(&self, key: &str) -> Result<Option<&'a str>> {
        self.get(key)
            .map(|v| v.as_str().ok_or_else(|| cfg_err(&self.key(key), "expected a string")))
            .transpose()
    }

    fn uint(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| match v.as_integer() {
                Some(i) if i >= 0 => Ok(i as u64),
                _ => Err(cfg_err(&self.key(key), "expected a non-negative integer")),
            })
            .transpose()
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.as_float()
                    .or_else(|| v.as_integer().map(|i| i as f64))
                    .ok_or_else(|| cfg_err(&self.key(key), "expected a number"))
            })
            .transpose()
    }

    fn uint_list(&self, key: &str) -> Result<Vec<usize>> {
        let arr = self
            .require(key)?
            .as_array()
            .ok_or_else(|| cfg_err(&self.key(key), "expected an array of integers"))?;
        arr.iter()
            .enumerate()
            .map(|(j, v)| match v.as_integer() {
                Some(i) if i > 0 => Ok(i as usize),
                _ => Err(cfg_err(&format!("{}[{j}]", self.key(key)), "expected a positive integer")),
            })
            .collect()
    }

    fn sub(&self, key: &str) -> Result<Option<Section<'a>>> {
        self.get(key)
            .map(|v| {
                v.as_table()
                    .map(|table| Section {
                        table,
                        path: self.key(key),
                    })
                    .ok_or_else(|| cfg_err(&self.key(key), "expected a table"))
            })
            .transpose()
    }
}

fn float_rows(value: &toml::Value, key: &str) -> Result<Vec<Vec<f64>>> {
    let rows = value.as_array().ok_or_else(|| cfg_err(key, "expected an array of arrays"))?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let row = row
                .as_array()
                .ok_or_else(|| cfg_err(&format!("{key}[{i}]"), "expected an array"))?;
            row.iter()
                .enumerate()
                .map(|(j, v)| {
                    v.as_float()
                        .or_else(|| v.as_integer().map(|x| x as f64))
                        .ok_or_else(|| cfg_err(&format!("{key}[{i}][{j}]"), "expected a number"))
                })
                .collect()
        })
        .collect()
}

fn resolve(base: Option<&Path>, file: &str) -> PathBuf {
    let p = Path::new(file);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

/// Parses a config document; `base` resolves relative file paths.
pub fn parse_sim_config(text: &str, base: Option<&Path>) -> Result<SimConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e
            .span()
            .map(|s| {
                let before = &text[..s.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
                (line, column)
            })
            .unwrap_or((1, 1));
        Error::Parse {
            path: "config".into(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let root = Section {
        table: &table,
        path: String::new(),
    };
    if table.is_empty() {
        return Err(cfg_err("experiment", "config is empty"));
    }
    root.check_keys(&[
        "experiment",
        "setting",
        "seed",
        "replicates",
        "m_grid",
        "n_grid",
        "starts",
        "law_samples",
        "max_iter",
        "model",
        "truth",
    ])?;

    let experiment = match root.str("experiment")?.ok_or_else(|| cfg_err("experiment", "missing required key"))? {
        "consistency" => Experiment::Consistency,
        "clt_interior" => Experiment::CltInterior,
        "clt_boundary" => Experiment::CltBoundary,
        other => {
            return Err(cfg_err(
                "experiment",
                format!("`{other}` is not one of consistency, clt_interior, clt_boundary"),
            ))
        }
    };
    let setting = match root.str("setting")?.unwrap_or("supervised") {
        "supervised" => Setting::Supervised,
        "unsupervised" => Setting::Unsupervised,
        other => return Err(cfg_err("setting", format!("`{other}` is not supervised or unsupervised"))),
    };
    let seed = root.uint("seed")?.unwrap_or(0);
    let replicates = root
        .uint("replicates")?
        .ok_or_else(|| cfg_err("replicates", "missing required key"))? as usize;
    if replicates == 0 {
        return Err(cfg_err("replicates", "must be at least 1"));
    }
    let m_grid = root.uint_list("m_grid")?;
    let n_grid = root.uint_list("n_grid")?;
    for (key, grid) in [("m_grid", &m_grid), ("n_grid", &n_grid)] {
        if grid.is_empty() {
            return Err(cfg_err(key, "must not be empty"));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(cfg_err(key, "must be strictly ascending"));
        }
    }
    let m_max = *m_grid.last().expect("non-empty");
    let n_max = *n_grid.last().expect("non-empty");

    let truth = root.sub("truth")?.ok_or_else(|| cfg_err("truth", "missing required table"))?;
    truth.check_keys(&["q0", "q_file", "p_file", "frequencies"])?;
    let q0 = match (truth.get("q0"), truth.str("q_file")?) {
        (Some(v), None) => AncestryMatrix::from_rows(&float_rows(v, "truth.q0")?).map_err(|e| cfg_err("truth.q0", e.to_string()))?,
        (None, Some(f)) => read_q(&resolve(base, f))?,
        _ => return Err(cfg_err("truth", "give exactly one of q0, q_file")),
    };
    if q0.n_individuals() < n_max {
        return Err(cfg_err(
            "truth.q0",
            format!("{} rows but n_grid needs {n_max}", q0.n_individuals()),
        ));
    }
    let k = q0.k();
    let p0 = match (truth.sub("frequencies")?, truth.str("p_file")?) {
        (Some(freq), None) => {
            freq.check_keys(&["kind", "lo", "hi", "min_gap", "seed"])?;
            let kind = freq.str("kind")?.unwrap_or("separated");
            let lo = freq.float("lo")?.unwrap_or(0.05);
            let hi = freq.float("hi")?.unwrap_or(0.95);
            let min_gap = match kind {
                "uniform" => 0.0,
                "separated" => freq.float("min_gap")?.unwrap_or(0.0),
                other => {
                    return Err(cfg_err(
                        "truth.frequencies.kind",
                        format!("`{other}` is not uniform or separated"),
                    ))
                }
            };
            let fseed = freq.uint("seed")?.unwrap_or(seed);
            separated_frequencies(k, m_max, lo, hi, min_gap, fseed).map_err(|e| cfg_err("truth.frequencies", e.to_string()))?
        }
        (None, Some(f)) => read_p(&resolve(base, f))?,
        _ => return Err(cfg_err("truth", "give exactly one of frequencies, p_file")),
    };
    if p0.k() != k {
        return Err(cfg_err("truth", format!("q0 has K = {k}, frequencies have K = {}", p0.k())));
    }
    if p0.n_markers() < m_max {
        return Err(cfg_err(
            "truth.p_file",
            format!("{} markers but m_grid needs {m_max}", p0.n_markers()),
        ));
    }

    let mut spec = SimSpec::new(q0, p0, m_grid, n_grid, replicates, seed);
    spec.setting = setting;
    spec.starts = root.uint("starts")?.unwrap_or(1).max(1) as usize;
    if let Some(s) = root.uint("law_samples")? {
        spec.law_samples = s as usize;
    }
    if let Some(it) = root.uint("max_iter")? {
        spec.em.max_iter = it as usize;
    }
    spec.em.seed = seed;
    spec.config = ModelConfig::new(k);
    if let Some(model) = root.sub("model")? {
        model.check_keys(&["eps_clamp", "eps_boundary", "tol_simplex"])?;
        if let Some(v) = model.float("eps_clamp")? {
            spec.config.eps_clamp = v;
        }
        if let Some(v) = model.float("eps_boundary")? {
            spec.config.eps_boundary = v;
        }
        if let Some(v) = model.float("tol_simplex")? {
            spec.config.tol_simplex = v;
        }
        spec.config.validate().map_err(|e| cfg_err("model", e.to_string()))?;
    }
    Ok(SimConfig { experiment, spec })
}

pub fn read_sim_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path)?;
    parse_sim_config(&text, path.parent()).map_err(|e| match e {
        Error::Parse {
            line, column, message, ..
        } => Error::Parse {
            path: path.display().to_string(),
            line,
            column,
            message,
        },
        other => other,
    })
}
