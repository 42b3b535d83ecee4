use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
    "dataset": {"kind": "synthetic", "domain_count": 2, "timesteps": 960},
    "epochs_per_group": 2,
    "extractor_epochs": 3,
    "probe_max_epochs": 5
}"#;

fn synevo(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_synevo"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    dir
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evolve_then_evaluate_checkpoint() {
    let dir = setup();
    let d = dir.path();
    assert!(synevo(d, &["--config", "tiny.json", "--out", "run", "evolve"]).status.success());
    for f in ["report.json", "losses.csv", "evolution.jsonl", "checkpoints/container.json"] {
        assert!(d.join("run").join(f).is_file(), "{f}");
    }
    let out = synevo(
        d,
        &["--config", "tiny.json", "--out", "eval", "evaluate", "--checkpoint", "run/checkpoints/container.json"],
    );
    assert!(out.status.success());
    let report = json(&d.join("run/report.json"));
    let eval = json(&d.join("eval/evaluation.json"));
    // every holdout domain is answered by the container when nothing is isolated
    if report["isolated"].as_array().unwrap().is_empty() {
        assert_eq!(report["holdout"]["mean_mae"], eval["mean_mae"]);
    }
}

#[test]
fn generated_csv_feeds_a_run() {
    let dir = setup();
    let d = dir.path();
    assert!(synevo(d, &["--config", "tiny.json", "--out", "data", "generate"]).status.success());
    assert!(d.join("data/graph.json").is_file());
    let csv_config = r#"{
        "dataset": {"kind": "csv", "paths": ["data/domain_0.csv", "data/domain_1.csv"], "steps_per_day": 96},
        "epochs_per_group": 2,
        "extractor_epochs": 3,
        "probe_max_epochs": 5
    }"#;
    std::fs::write(d.join("csv.json"), csv_config).unwrap();
    assert!(synevo(d, &["--config", "csv.json", "--out", "reorder", "reorder"]).status.success());
    let ordering = json(&d.join("reorder/ordering.json"));
    assert_eq!(ordering["order"].as_array().unwrap().len(), 2);
}

#[test]
fn ablate_zeroshot_sweep_audit() {
    let dir = setup();
    let d = dir.path();
    assert!(synevo(d, &["--config", "tiny.json", "--out", "abl", "--variant", "Ela", "ablate"]).status.success());
    assert!(d.join("abl/ablation.csv").is_file());
    assert!(d.join("abl/Ela/report.json").is_file());

    assert!(synevo(d, &["--config", "tiny.json", "--out", "zs", "zeroshot"]).status.success());
    assert!(json(&d.join("zs/zeroshot.json"))["relative_improvement"].is_number());

    std::fs::write(d.join("grid.json"), r#"{"p0": [0.3, 0.5], "lambda0": [0.05], "kappa": [1000.0]}"#).unwrap();
    let out = synevo(d, &["--config", "tiny.json", "--out", "sw", "sweep", "--grid", "grid.json"]);
    assert!(out.status.success());
    let rows = std::fs::read_to_string(d.join("sw/sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);

    assert!(synevo(d, &["--config", "tiny.json", "--out", "au", "audit"]).status.success());
    assert!(json(&d.join("au/entropy.json"))["pairwise_mi"].is_array());
}

#[test]
fn bad_input_fails_with_message() {
    let dir = setup();
    let d = dir.path();
    let out = synevo(d, &["--variant", "sideways", "evolve"]);
    assert!(!out.status.success());

    std::fs::write(d.join("bad.json"), r#"{"lambda0": 2.0}"#).unwrap();
    let out = synevo(d, &["--config", "bad.json", "evolve"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error:") && stderr.contains("lambda0"), "{stderr}");

    let out = synevo(d, &["--config", "tiny.json", "--out", "e", "evaluate", "--checkpoint", "missing.json"]);
    assert!(!out.status.success());
}
