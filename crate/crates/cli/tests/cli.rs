use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const PHASE: &str = r#""phase": {"terms": [[1.0, 1.5, 0]], "m": 1}"#;

fn run(args: &[&str], dir: &Path, config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_modhilbert"));
    cmd.args(args).current_dir(dir).env_remove("MODHILBERT_OUT");
    if let Some(text) = config {
        let path = dir.join("run.json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn missing_phase_exits_2_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["decay", "--out", "res"], tmp.path(), Some(r#"{"seed": 4}"#));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("phase"));
    assert!(!tmp.path().join("res").exists());
}

#[test]
fn malformed_json_and_bad_values_exit_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&run(&["vdc", "--out", "res"], tmp.path(), Some("{ not json"))), 2);
    let bad = format!(r#"{{{PHASE}, "random": {{"distribution": "cauchy"}}}}"#);
    assert_eq!(code(&run(&["random", "--out", "res"], tmp.path(), Some(&bad))), 2);
    let missing = run(&["vdc", "--config", "nowhere.json", "--out", "res"], tmp.path(), None);
    assert_eq!(code(&missing), 2);
    assert!(!tmp.path().join("res").exists());
}

#[test]
fn unknown_subcommand_exits_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&run(&["frobnicate"], tmp.path(), None)), 2);
}

#[test]
fn zero_coefficients_give_zero_tables() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!(r#"{{{PHASE}, "coefficients": "zero"}}"#);
    let out = run(&["decay", "--out", "res"], tmp.path(), Some(&cfg));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("res/decay");
    for (name, bytes) in csv_files(&dir) {
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let sup = rdr.headers().unwrap().iter().position(|h| h == "sup").unwrap();
        for rec in rdr.records() {
            assert_eq!(rec.unwrap()[sup].parse::<f64>().unwrap(), 0.0, "{name}");
        }
    }
}

#[test]
fn unmodulated_decay_fails_its_flag() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!(r#"{{{PHASE}, "coefficients": "one"}}"#);
    let out = run(&["decay", "--out", "res"], tmp.path(), Some(&cfg));
    assert_eq!(code(&out), 1);
    let s = summary(&tmp.path().join("res/decay"));
    assert_eq!(s["passed"], Value::Bool(false));
    assert_eq!(s["tables"]["decay_diag"]["flags"]["eps_min"], Value::Bool(false));
}

#[test]
fn identical_configs_give_identical_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!(
        r#"{{{PHASE}, "seed": 11, "sparse": {{"level": 8, "instances": 6}},
            "random": {{"chernoff_trials": 1000, "correlation_seeds": 5, "exceptional_j": 10}}}}"#
    );
    for sub in ["sparse", "random", "maximal"] {
        let a = run(&[sub, "--out", "a", "--threads", "1"], tmp.path(), Some(&cfg));
        let b = run(&[sub, "--out", "b", "--threads", "3"], tmp.path(), Some(&cfg));
        assert_ne!(code(&a), 2, "{sub}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(code(&a), code(&b));
        let ca = csv_files(&tmp.path().join("a").join(sub));
        let cb = csv_files(&tmp.path().join("b").join(sub));
        assert!(!ca.is_empty());
        assert_eq!(ca, cb, "{sub}");
    }
}

#[test]
fn summary_echoes_config_and_seed_override() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!(r#"{{{PHASE}, "seed": 5, "vdc": {{"lengths": [32, 64]}}}}"#);
    let out = run(&["vdc", "--out", "res", "--seed", "9"], tmp.path(), Some(&cfg));
    assert_eq!(code(&out), 0);
    let s = summary(&tmp.path().join("res/vdc"));
    let input: Value = serde_json::from_str(&cfg).unwrap();
    assert_eq!(s["config"], input);
    assert_eq!(s["seed"], 9);
    assert_eq!(s["seed_override"], 9);
    assert_eq!(s["subcommand"], "vdc");
    let text = fs::read_to_string(tmp.path().join("res/vdc/summary.json")).unwrap();
    assert!(text.contains(cfg.trim()), "config not embedded verbatim");
}

#[test]
fn output_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!("{{{PHASE}}}");
    fs::write(tmp.path().join("run.json"), &cfg).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_modhilbert"))
        .args(["vdc", "--config", "run.json"])
        .current_dir(tmp.path())
        .env("MODHILBERT_OUT", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(tmp.path().join("from-env/vdc/summary.json").exists());
    assert!(tmp.path().join("from-env/vdc/vdc_sums.csv").exists());
}

#[test]
fn ergodic_and_default_config_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!(r#"{{{PHASE}, "ergodic": {{"j_max": 12, "samples": 8, "transference_n": 128, "transference_len": 64}}}}"#);
    let out = run(&["ergodic", "--out", "res"], tmp.path(), Some(&cfg));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let header = fs::read_to_string(tmp.path().join("res/ergodic/ergodic_tail.csv")).unwrap();
    assert!(header.starts_with("x,j,block_sum_abs,running_tail_sup\n"));
    let out = run(&["vdc", "--out", "dflt"], tmp.path(), None);
    assert_eq!(code(&out), 0);
}
