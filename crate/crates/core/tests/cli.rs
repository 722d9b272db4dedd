use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rankpair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankpair"))
        .args(args)
        .env_remove("RANKPAIR_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"{"seed": 4, "trainer": {"learning_rate": 0.5, "steps": 20}}"#;

#[test]
fn run_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.json", SMALL);
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = rankpair(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(fs::read(out.join("trajectory.csv")).unwrap());
        let summary: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["version"], rankpair::VERSION);
        assert_eq!(summary["config"]["seed"], 4);
        assert!(summary["report"]["ap"].is_number());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.swap_remove(0)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,loss,grad_norm,ap,pcc,scc,kcc"));
    assert_eq!(lines.count(), 21);
    assert!(!text.contains('\r'));
}

#[test]
fn seed_env_var_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.json", SMALL);
    let out = dir.path().join("o");
    let o = Command::new(env!("CARGO_BIN_EXE_rankpair"))
        .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
        .env("RANKPAIR_SEED", "19")
        .output()
        .unwrap();
    assert!(o.status.success());
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 19);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    for body in [
        "{not json",
        r#"{"seed": 1, "unknown_field": 3}"#,
        r#"{"trainer": {"learning_rate": -1.0, "steps": 10}}"#,
        r#"{"trainer": {"learning_rate": 0.5, "steps": 0}}"#,
    ] {
        let cfg = write(dir.path(), "bad.json", body);
        let o = rankpair(&["run", "--config", &cfg, "--out", out]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(!o.stderr.is_empty());
    }
    let missing = dir.path().join("missing.json");
    let o = rankpair(&["run", "--config", missing.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "diverge.json",
        r#"{"trainer": {"learning_rate": 1e300, "steps": 5, "loc_loss_weight": 1.0}}"#,
    );
    let out = dir.path().join("o");
    let o = rankpair(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step"));
}

#[test]
fn sweep_over_delta_emits_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.json",
        r#"{"seed": 4, "trainer": {"learning_rate": 0.5, "steps": 10}}"#,
    );
    let out = dir.path().join("sweep");
    let o = rankpair(&["sweep", "--config", &cfg, "--param", "delta", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    let values: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(values, [1.0, 0.5, 0.25, 0.125]);
}

#[test]
fn nms_demo_keeps_a_and_c() {
    let o = rankpair(&["nms-demo"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kept"], serde_json::json!([0, 2]));

    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "nms.json",
        r#"{"boxes": [[0,0,1,1],[0,0,1,1]], "scores": [0.9, 0.8]}"#,
    );
    let o = rankpair(&["nms-demo", "--input", &input]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kept"], serde_json::json!([0]));
}

#[test]
fn eval_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "eval.json",
        r#"{
            "detections": [
                {"bbox": [0, 0, 1, 0.9], "score": 0.9},
                {"bbox": [2, 2, 3, 2.8], "score": 0.8},
                {"bbox": [10, 10, 11, 11], "score": 0.7}
            ],
            "gts": [[0, 0, 1, 1], [2, 2, 3, 3]]
        }"#,
    );
    let o = rankpair(&["eval", "--input", &input]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ap_by_iou"]["0.50"], 1.0);
    assert_eq!(v["ap_by_iou"]["0.75"], 1.0);
    assert_eq!(v["ap_by_iou"]["0.85"], 0.5);
    assert_eq!(v["ap_by_iou"]["0.95"], 0.0);
    assert_eq!(v["kcc"], 1.0);
}

#[test]
fn gradcheck_reports_small_errors() {
    let o = rankpair(&["gradcheck", "--trials", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for r in v.as_array().unwrap() {
        assert!(r["max_rel_error"].as_f64().unwrap() < 1e-6, "{r}");
    }
}

#[test]
fn sample_config_spells_out_the_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/exp.json");
    let cfg = rankpair::harness::load_config(&path).unwrap();
    assert_eq!(cfg, rankpair::harness::ScenarioConfig::default());
}
