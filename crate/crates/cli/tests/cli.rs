use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn quasicause(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quasicause"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// A small simulated cohort under `data/` plus a study config.
fn workspace(study: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let sim = write(
        dir.path(),
        "sim.json",
        r#"{"schema_version":1,"output_dir":"data","simulation":{"n_users":10,"n_days":14,"seed":3}}"#,
    );
    assert!(quasicause(&["simulate"], &sim).status.success());
    let cfg = write(dir.path(), "study.json", study);
    (dir, cfg)
}

const STUDY: &str = r#"{
  "schema_version": 1, "data_root": "data", "output_dir": "out", "seed": 2,
  "treatments": [
    {"variable": "E", "kind": "positive"},
    {"variable": "H", "kind": "low_tail", "alphas": [0.1]}
  ],
  "genetic": {"population_size": 10, "generations": 5}
}"#;

#[test]
fn simulate_writes_a_loadable_dataset() {
    let (dir, cfg) = workspace(STUDY);
    for f in [
        "gps.csv",
        "activity.csv",
        "stress.csv",
        "poi.csv",
        "campus.geojsonl",
        "ground_truth.json",
    ] {
        assert!(dir.path().join("data").join(f).is_file(), "{f}");
    }
    let out = quasicause(&["validate"], &cfg);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["users"].as_array().unwrap().len(), 10);
}

#[test]
fn run_writes_every_artifact_with_provenance() {
    let (dir, cfg) = workspace(STUDY);
    let out = quasicause(&["run"], &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.path().join("out");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    let hash = report["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert_eq!(report["seed"], 2);
    let first_line = format!("# config_hash={hash} seed=2");
    for f in [
        "clusters.csv",
        "visits.csv",
        "labels.csv",
        "units.csv",
        "correlation.csv",
        "effects.csv",
        "balance.csv",
    ] {
        let text = std::fs::read_to_string(out_dir.join(f)).unwrap();
        assert_eq!(text.lines().next(), Some(first_line.as_str()), "{f}");
    }
    let studies = report["studies"].as_array().unwrap();
    assert_eq!(studies.len(), 2);
    for s in studies {
        let status = s["status"].as_str().unwrap();
        assert!(status == "estimated" || status == "refused");
        if status == "refused" {
            assert!(s["reason"].is_string());
        } else {
            let design = out_dir
                .join("studies")
                .join(s["id"].as_str().unwrap())
                .join("design.json");
            assert!(design.is_file());
        }
    }
}

#[test]
fn seed_override_changes_the_hash() {
    let (dir, cfg) = workspace(STUDY);
    let read_hash = |seed: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_quasicause"))
            .args(["run", "--seed", seed, "--config"])
            .arg(&cfg)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        assert!(out.status.success());
        let text = std::fs::read_to_string(dir.path().join("out/report.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        (
            v["config_hash"].as_str().unwrap().to_string(),
            v["seed"].as_u64().unwrap(),
        )
    };
    let (h1, s1) = read_hash("1");
    let (h2, s2) = read_hash("2");
    assert_ne!(h1, h2);
    assert_eq!((s1, s2), (1, 2));
}

#[test]
fn stages_reproduce_the_full_run() {
    let (dir, cfg) = workspace(STUDY);
    assert!(quasicause(&["run"], &cfg).status.success());
    let out_dir = dir.path().join("out");
    let files = [
        "clusters.csv",
        "visits.csv",
        "labels.csv",
        "units.csv",
        "correlation.csv",
    ];
    let full: Vec<String> = files
        .iter()
        .map(|f| std::fs::read_to_string(out_dir.join(f)).unwrap())
        .collect();
    std::fs::remove_dir_all(&out_dir).unwrap();
    for stage in ["cluster", "label", "featurize", "screen"] {
        let out = quasicause(&["stage", stage], &cfg);
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for (f, want) in files.iter().zip(&full) {
        assert_eq!(&std::fs::read_to_string(out_dir.join(f)).unwrap(), want, "{f}");
    }
}

#[test]
fn label_stage_needs_clusters() {
    let (_dir, cfg) = workspace(STUDY);
    let out = quasicause(&["stage", "label"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clusters.csv missing"));
}

#[test]
fn config_errors_exit_2() {
    let (dir, _) = workspace(STUDY);
    let cases = [
        STUDY.replace("[0.1]", "[1.0]"),
        STUDY.replace("\"data\"", "\"nowhere\""),
        STUDY.replace("\"schema_version\": 1", "\"schema_version\": 7"),
        STUDY.replace("\"seed\": 2", "\"seed\": 2, \"colour\": 1"),
        STUDY.replace("\"data_root\"", "\"poi_file\": \"missing.csv\", \"data_root\""),
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.json"), text);
        let out = quasicause(&["run"], &cfg);
        assert_eq!(
            out.status.code(),
            Some(2),
            "case {i}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn simulation_config_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    for (i, sim) in [r#"{"n_users":0}"#, r#"{"seed":"seven"}"#, r#"{"report_prob":1.5}"#]
        .iter()
        .enumerate()
    {
        let cfg = write(
            dir.path(),
            &format!("sim{i}.json"),
            &format!(r#"{{"schema_version":1,"output_dir":"data","simulation":{sim}}}"#),
        );
        let out = quasicause(&["simulate"], &cfg);
        assert_eq!(out.status.code(), Some(2), "{sim}");
    }
    assert!(!dir.path().join("data").exists());
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let (_dir, cfg) = workspace(STUDY);
    let out = Command::new(env!("CARGO_BIN_EXE_quasicause"))
        .args(["validate", "--config"])
        .arg(&cfg)
        .env("QUASICAUSE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
