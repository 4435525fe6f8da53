use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_admixclt")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn supervised_estimate_matches_golden() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "estimate",
        "--geno",
        &fixture("toy.geno"),
        "--mode",
        "supervised",
        "--p-file",
        &fixture("toy.P"),
        "--out",
        s(out.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let got = read_matrix(&out.path().join("result.Q"));
    let want = read_matrix(Path::new(&fixture("toy_golden.Q")));
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        for (a, b) in g.iter().zip(w) {
            assert!((a - b).abs() <= 1e-6 + 1e-12, "{a} vs {b}");
        }
    }
    let trace = std::fs::read_to_string(out.path().join("loglik.csv")).unwrap();
    assert!(trace.lines().count() > 1);
    assert_eq!(json(&out.path().join("fit.json"))["schema_version"], 1);
}

fn unsupervised(out: &Path, seed: u64, starts: usize) -> serde_json::Value {
    let o = run(&[
        "estimate",
        "--geno",
        &fixture("toy.geno"),
        "--K",
        "2",
        "--seed",
        &seed.to_string(),
        "--starts",
        &starts.to_string(),
        "--out",
        s(out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    json(&out.join("fit.json"))
}

#[test]
fn multistart_keeps_the_best_run() {
    let dir = tempfile::tempdir().unwrap();
    let best = unsupervised(&dir.path().join("multi"), 10, 5)["final_loglik"].as_f64().unwrap();
    let singles: Vec<f64> = (10..15)
        .map(|seed| unsupervised(&dir.path().join(format!("s{seed}")), seed, 1)["final_loglik"].as_f64().unwrap())
        .collect();
    let top = singles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, top);
}

#[test]
fn fixed_seed_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    unsupervised(&a, 3, 2);
    unsupervised(&b, 3, 2);
    for f in ["result.Q", "result.P", "loglik.csv", "fit.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_ancestry_file_exits_2() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["check", "--q-file", &fixture("bad_rowsum.Q"), "--p-file", &fixture("unique_k2.P")]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "uncertainty",
        "--q-file",
        &fixture("bad_rowsum.Q"),
        "--p-file",
        &fixture("hg00096_k2.P"),
        "--out",
        s(out.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad_rowsum.Q"));
}

#[test]
fn empty_config_exits_2() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--config", &fixture("empty.toml"), "--out", s(out.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment"));
}

#[test]
fn interior_uncertainty_is_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("interior.Q");
    std::fs::write(&q, "0.300000 0.700000\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "uncertainty",
        "--q-file",
        s(&q),
        "--p-file",
        &fixture("hg00096_k2.P"),
        "--samples",
        "2000",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["law"], "gaussian");
    for c in summary["coordinates"].as_array().unwrap() {
        assert_eq!(c["atom_probability"].as_f64().unwrap(), 0.0);
    }
    assert!(out.join("density.csv").exists());
}

#[test]
fn boundary_uncertainty_has_half_atom() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "uncertainty",
        "--q-file",
        &fixture("hg00096_k2.Q"),
        "--p-file",
        &fixture("hg00096_k2.P"),
        "--out",
        s(out.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&out.path().join("summary.json"));
    let atom = summary["coordinates"][0]["atom_probability"].as_f64().unwrap();
    assert!((atom - 0.5).abs() < 0.01, "atom {atom}");
}

#[test]
fn collinear_check_reports_degenerate_direction() {
    let o = run(&["check", "--q-file", &fixture("collinear.Q"), "--p-file", &fixture("collinear.P")]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("uniqueness verdict: inconclusive"), "{text}");
    assert!(text.contains("degenerate direction"), "{text}");
    let o = run(&["check", "--q-file", &fixture("unique_k2.Q"), "--p-file", &fixture("unique_k2.P")]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("uniqueness verdict: unique"));
}
