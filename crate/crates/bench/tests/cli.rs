use std::path::Path;
use std::process::Command;

use coopfuse_bench::{BenchError, ExperimentConfig, Method};

const BIN: &str = env!("CARGO_BIN_EXE_coopfuse");

fn small_config(dir: &Path, methods: &str) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(
        &p,
        format!(
            r#"
seed = 5
methods = [{methods}]

[scenes]
count = 4
n_frames = 5
objects = [10, 20]

[[noise]]
name = "mild"
agents = ["mild", "mild"]
"#
        ),
    )
    .unwrap();
    p
}

#[test]
fn empty_methods_is_a_config_error() {
    let cfg = ExperimentConfig::from_toml("methods = []").unwrap();
    assert!(matches!(cfg.resolve(), Err(BenchError::Config(_))));
}

#[test]
fn psa_is_out_of_scope() {
    assert!(matches!("psa".parse::<Method>(), Err(BenchError::OutOfScope(_))));
    assert!(matches!("bogus".parse::<Method>(), Err(BenchError::Config(_))));
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
}

#[test]
fn unknown_noise_preset_is_rejected() {
    let cfg = ExperimentConfig::from_toml(
        "methods = [\"wls_csba\"]\n[[noise]]\nname = \"x\"\nagents = [\"tiny\"]\n",
    )
    .unwrap();
    assert!(cfg.resolve().is_err());
}

#[test]
fn gt_assoc_flag_adds_the_variant() {
    let cfg = ExperimentConfig::from_toml("methods = [\"wls_csba\"]\ngt_assoc = true").unwrap();
    assert_eq!(cfg.resolve().unwrap().methods, vec![Method::WlsCsba, Method::WlsGtAssoc]);
}

#[test]
fn run_writes_tables_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "\"wls_csba\"");
    let mut csv = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("out{k}"));
        let st = Command::new(BIN)
            .args(["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--format", "csv"])
            .output()
            .unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        csv.push(std::fs::read(out.join("results.csv")).unwrap());
        assert!(out.join("results.md").exists() && out.join("results.json").exists());
    }
    assert_eq!(csv[0], csv[1]);
    let text = String::from_utf8(csv[0].clone()).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "wls_csba");
    assert_eq!((row[5], row[6]), ("1.0000", "1.0000"));
}

#[test]
fn run_reports_bad_method_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "\"psa\"");
    let st = Command::new(BIN).args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("out of scope"));
}

#[test]
fn gen_fuse_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scene.toml");
    std::fs::write(
        &spec,
        "seed = 3\nagents = [\"mild\", \"mild\"]\n[scene]\nn_frames = 4\npopulation = { kind = \"random\", count = 15 }\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    let pred = dir.path().join("pred.jsonl");
    let run = |args: &[&str]| {
        let o = Command::new(BIN).args(args).output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    run(&["gen", spec.to_str().unwrap(), data.to_str().unwrap()]);
    assert!(data.join("manifest.json").exists());
    run(&["fuse", data.to_str().unwrap(), "--method", "wls_csba", "--out", pred.to_str().unwrap()]);
    let out = run(&["eval", pred.to_str().unwrap(), data.join("gt.jsonl").to_str().unwrap(), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["tp"], 60);
    assert_eq!(v["precision"], 1.0);
}
