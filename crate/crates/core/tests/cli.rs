use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entropic-witness"))
}

fn quickstart() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/quickstart.toml")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn quickstart_certifies_entanglement_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q");
    let start = Instant::now();
    let o = run(&["simulate", "--config", quickstart().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed() < Duration::from_secs(60));
    for f in ["summary.json", "leaves.csv", "partitions.csv", "mc_trials.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let s = json(&out.join("summary.json"));
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["seed"], 2019);
    let results = s["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    let sub = results.iter().find(|r| r["method"] == "accidental_subtracted").unwrap();
    assert_eq!(sub["propagation"]["method"], "propagation");
    assert_eq!(sub["monte_carlo"]["method"], "monte_carlo");
    assert!(sub["witness"]["ef_bound"].as_f64().unwrap() > 0.0);
    assert!(!String::from_utf8_lossy(&o.stdout).is_empty());
}

#[test]
fn same_seed_gives_identical_outputs_apart_from_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quickstart();
    let out = dir.path().join("a");
    let go = |seed: &str| {
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed, "--quiet"]);
        assert!(o.status.success());
        assert!(o.stderr.is_empty(), "--quiet still logged: {}", String::from_utf8_lossy(&o.stderr));
        let files = ["summary.json", "leaves.csv", "partitions.csv", "mc_trials.csv"];
        files.map(|f| std::fs::read_to_string(out.join(f)).unwrap())
    };
    let without_timestamp = |s: &str| -> String {
        s.lines().filter(|l| !l.trim_start().starts_with("\"timestamp\"")).collect::<Vec<_>>().join("\n")
    };
    let (a, b, c) = (go("5"), go("5"), go("6"));
    assert!(a[0].contains("\"timestamp\""));
    assert_eq!(without_timestamp(&a[0]), without_timestamp(&b[0]));
    assert_eq!(a[1..], b[1..]);
    assert_ne!(a[1], c[1]);
    assert!(c[0].contains("\"seed\": 6"));
}

#[test]
fn reanalysis_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let cfg = quickstart();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success());
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--reanalyze", "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (a, b) = (json(&out.join("summary.json")), json(&out.join("reanalysis.json")));
    assert_eq!(a["results"], b["results"]);
    assert_eq!(a["total_leaves"], b["total_leaves"]);
    assert_eq!(a["oracle_ef"], b["oracle_ef"]);
}

#[test]
fn subtract_flag_selects_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = run(&[
        "simulate", "--config", quickstart().to_str().unwrap(), "--out", out.to_str().unwrap(), "--subtract", "off", "--quiet",
    ]);
    assert!(o.status.success());
    let s = json(&out.join("summary.json"));
    let methods: Vec<&str> = s["results"].as_array().unwrap().iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["raw"]);
}

#[test]
fn invalid_alpha_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[grid]\nn = 16\n\n[sampler]\nalpha = 1.5\n");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sampler.alpha"), "{err}");
    assert!(err.contains("line 5"), "{err}");
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_keys_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "typo.toml", "[grid]\nsize = 16\n");
    assert_eq!(run(&["oracle", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    assert_eq!(run(&["oracle", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let cfg = write_config(dir.path(), "small.toml", "[grid]\nn = 8\n\n[analysis]\nmc_trials = 2\n");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("empty").to_str().unwrap(), "--reanalyze"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn sweep_time_writes_one_row_per_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "t.toml", "[grid]\nn = 32\n\n[sweep]\ncheckpoints = [1, 2, 4, 8, 16]\n");
    let o = run(&["sweep-time", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("sweep_time.csv"));
    assert_eq!(rows.len(), 5);
    for (r, k) in rows.iter().zip([1, 2, 4, 8, 16]) {
        assert_eq!(r[0].parse::<usize>().unwrap(), k);
        assert!(r[3].parse::<f64>().unwrap() > 0.0);
        assert!(r[5].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn sweep_resolution_grows_sub_quadratically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.toml",
        "[analysis]\nmc_trials = 2\n\n[sweep]\nresolutions = [32, 64, 128, 256, 512]\n",
    );
    let o = run(&["sweep-resolution", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&dir.path().join("sweep_resolution.csv"));
    assert_eq!(rows.len(), 5);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r[0].parse::<f64>().unwrap().ln(), r[1].parse::<f64>().unwrap().ln()))
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!(slope < 1.5, "leaf-count exponent {slope}");
    let last = rows.last().unwrap();
    assert_eq!(&last[0], "512");
    let improvement: f64 = last[3].parse().unwrap();
    let naive: f64 = last[2].parse().unwrap();
    let leaves: f64 = last[1].parse().unwrap();
    assert_eq!(naive, 2.0 * 512f64.powi(4));
    assert!((improvement - naive / leaves).abs() <= 1e-9 * improvement);
    assert!(improvement > 1e4);
}

fn oracle_values(cfg: &Path) -> (f64, f64) {
    let o = run(&["oracle", "--config", cfg.to_str().unwrap(), "--quiet"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let field = |name: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(name))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    (field("oracle_ef "), field("max_certifiable "))
}

#[test]
fn oracle_is_stable_bounded_and_grows_with_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let mut last = f64::NEG_INFINITY;
    for n in [32, 64, 128] {
        let cfg = write_config(dir.path(), &format!("o{n}.toml"), &format!("[grid]\nn = {n}\n"));
        let (oracle, max) = oracle_values(&cfg);
        assert!(oracle <= max);
        assert!(oracle > last);
        assert_eq!(oracle_values(&cfg), (oracle, max));
        last = oracle;
    }
    let big = write_config(dir.path(), "big.toml", "[grid]\nn = 1024\n");
    assert_eq!(run(&["oracle", "--config", big.to_str().unwrap()]).status.code(), Some(2));
}
