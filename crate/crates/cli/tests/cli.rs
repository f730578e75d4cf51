use std::path::Path;
use std::process::{Command, Output};

fn acss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acss")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
experiment = "isotonic_regression"
methods = ["reg_acss", "plain_acss", "oracle"]
n_trials = 8
m_copies = 19
alpha = 0.1
seed = 11

[grid]
signal = [0.0, 0.3]
sigma = [2.0]
"#;

#[test]
fn validate_accepts_shipped_configs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let out = acss(&["validate", "--config", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));
        seen += 1;
    }
    assert!(seen >= 3);
}

#[test]
fn validate_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), "empty.json", r#"{"experiment":"isotonic_regression","methods":[]}"#);
    let out = acss(&["validate", "--config", &empty]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("method list is empty"));

    let plain = write_config(dir.path(), "plain.toml", "experiment = \"mixture_gof\"\nmethods = [\"plain_acss\"]\n");
    let out = acss(&["validate", "--config", &plain]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported"));

    let broken = write_config(dir.path(), "broken.toml", "experiment = \"mixture_gof\"\nmethods = [\n");
    let out = acss(&["validate", "--config", &broken]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));
}

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let mut trials = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = acss(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("reg_acss") && stdout.contains("plain_acss"));
        for f in ["trials.csv", "summary.csv", "manifest.json", "timings.csv"] {
            assert!(out_dir.join(f).exists(), "{f} missing");
        }
        trials.push(std::fs::read(out_dir.join("trials.csv")).unwrap());
    }
    assert_eq!(trials[0], trials[1]);
    let text = String::from_utf8(trials.remove(0)).unwrap();
    // header plus 2 cells × 3 methods × 8 trials
    assert_eq!(text.lines().count(), 1 + 48);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["master_seed"], 11);

    let other = dir.path().join("c");
    let out = acss(&["run", "--config", &cfg, "--seed", "12", "--out", other.to_str().unwrap()]);
    assert!(out.status.success());
    assert_ne!(std::fs::read(other.join("trials.csv")).unwrap(), text.as_bytes());
}

#[test]
fn histogram_bins_pvalues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out_dir = dir.path().join("run");
    assert!(acss(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]).status.success());
    let trials = out_dir.join("trials.csv");
    let out = acss(&["histogram", "--in", trials.to_str().unwrap(), "--bins", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "bin_lo,bin_hi,count");
    assert_eq!(lines.len(), 6);
    let total: usize = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 48);

    let out =
        acss(&["histogram", "--in", trials.to_str().unwrap(), "--bins", "4", "--method", "oracle", "--signal", "0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let total: usize = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 8);

    let bad = write_config(dir.path(), "bad.csv", "trial_id,pvalue\n0,0.5\n1,oops\n");
    let out = acss(&["histogram", "--in", &bad, "--bins", "4"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert!(!acss(&["histogram", "--in", &bad, "--bins", "4", "--method", "nope"]).status.success());
}
