//! Binary-level tests: stage orchestration, error reporting, and
//! byte-determinism of artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn phic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = phic(args);
    assert!(
        out.status.success(),
        "phic {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "expected one diagnostic line, got: {text}");
    lines[0].to_string()
}

/// Seeds a small out directory through the feature stage. Subjects and
/// seed are chosen so every item keeps both response kinds and
/// calibration is possible.
fn prepare(out: &Path) {
    let dir = out.to_str().unwrap();
    ok(&["synth", "--out", dir, "--subjects", "60", "--seed", "7"]);
    ok(&["rasch", "--out", dir]);
    ok(&["features", "--out", dir]);
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let dir = out.to_str().unwrap();
    prepare(out);
    ok(&[
        "evaluate", "--out", dir, "--models", "lr", "--fs", "none,cfs", "--set", "cv_seeds=2",
        "--set", "folds=5",
    ]);
    ok(&["rq1", "--out", dir]);
    ok(&["importance", "--out", dir, "--set", "cv_seeds=1", "--set", "folds=5"]);
    ok(&[
        "ablate", "--out", dir, "--groups", "only_rasch,all", "--set", "cv_seeds=1", "--set",
        "folds=5",
    ]);
    ok(&["simulate", "--out", dir, "--respondents", "15"]);
    ok(&["report", "--out", dir]);

    for artifact in [
        "corpus/items.csv",
        "corpus/profiles.csv",
        "corpus/responses.csv",
        "corpus/schema.json",
        "corpus/meta.json",
        "ground_truth.json",
        "calibration.json",
        "loo_difficulties.csv",
        "features/features_meta.json",
        "features/features_p01.csv",
        "features/features_p32.csv",
        "runs.csv",
        "summary.json",
        "hic_summary.csv",
        "hic_tests.csv",
        "importance_grid.csv",
        "ablation.csv",
        "simulation.csv",
        "report.json",
    ] {
        assert!(out.join(artifact).exists(), "{artifact} missing");
    }
    for stage in [
        "synth", "rasch", "features", "evaluate", "rq1", "importance", "ablate", "simulate",
        "report",
    ] {
        let path = out.join(format!("manifest_{stage}.json"));
        let text = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("{stage} manifest"));
        let manifest: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(manifest["stage"], stage);
        assert!(manifest["config"]["seed"].is_string());
        assert!(
            !text.contains("time") && !text.contains("date"),
            "{stage} manifest must not carry timestamps"
        );
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for key in ["performance", "hic", "importance", "ablation", "simulation"] {
        assert!(!report[key].is_null(), "report lacks {key}");
    }
}

#[test]
fn missing_prerequisites_name_the_producing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    for (args, expected) in [
        (vec!["report", "--out", dir], "evaluate"),
        (vec!["evaluate", "--out", dir], "features"),
        (vec!["importance", "--out", dir], "features"),
        (vec!["simulate", "--out", dir], "rasch"),
        (vec!["rasch", "--out", dir], "synth"),
        (vec!["rq1", "--out", dir], "synth"),
    ] {
        let out = phic(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let line = stderr_line(&out);
        assert!(line.starts_with("phic: "), "{line}");
        assert!(line.contains("missing artifact"), "{line}");
        assert!(line.contains(expected), "{line} should mention {expected}");
    }
}

#[test]
fn bad_invocations_produce_single_line_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();

    let out = phic(&["transmogrify"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("phic: "));

    let out = phic(&["evaluate", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).contains("--frobnicate"));

    let out = phic(&["synth", "--out", dir, "--set", "tau"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("KEY=VALUE"));

    let out = phic(&["synth", "--out", dir, "--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("no_such_key"));

    let config = tmp.path().join("phic.conf");
    std::fs::write(&config, "subjects = squid\n").unwrap();
    let out = phic(&["synth", "--out", dir, "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("subjects"));

    let out = phic(&["ingest", "--out", dir]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("--in"));

    let out = phic(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let out = phic(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn evaluate_bytes_are_stable_across_workers_and_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let dir = out.to_str().unwrap();
    prepare(out);
    let eval = |workers: &str| {
        ok(&[
            "evaluate", "--out", dir, "--workers", workers, "--models", "lr,rf", "--fs", "none",
            "--set", "cv_seeds=2", "--set", "folds=5", "--set", "trees=20",
        ]);
        (
            std::fs::read(out.join("summary.json")).unwrap(),
            std::fs::read(out.join("runs.csv")).unwrap(),
        )
    };
    let (summary_one, runs_one) = eval("1");
    let (summary_three, runs_three) = eval("3");
    assert_eq!(summary_one, summary_three, "summary.json varies with --workers");
    assert_eq!(runs_one, runs_three, "runs.csv varies with --workers");
    let (summary_again, runs_again) = eval("3");
    assert_eq!(summary_one, summary_again, "summary.json varies across reruns");
    assert_eq!(runs_one, runs_again, "runs.csv varies across reruns");
}

#[test]
fn ingest_round_trips_a_written_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let source = tmp.path().join("source");
    let target = tmp.path().join("target");
    ok(&[
        "synth", "--out", source.to_str().unwrap(), "--subjects", "30", "--seed", "4",
    ]);
    ok(&[
        "ingest",
        "--out",
        target.to_str().unwrap(),
        "--in",
        source.join("corpus").to_str().unwrap(),
    ]);
    for name in ["items.csv", "profiles.csv", "responses.csv", "schema.json", "meta.json"] {
        let a = std::fs::read(source.join("corpus").join(name)).unwrap();
        let b = std::fs::read(target.join("corpus").join(name)).unwrap();
        assert_eq!(a, b, "{name} not preserved by ingest");
    }
    ok(&["rasch", "--out", target.to_str().unwrap()]);
}

#[test]
fn config_file_sets_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let config = tmp.path().join("phic.conf");
    std::fs::write(&config, "subjects = 30\nseed = 2\n").unwrap();
    ok(&[
        "synth", "--out", dir, "--config", config.to_str().unwrap(), "--subjects", "25",
    ]);
    let profiles =
        std::fs::read_to_string(tmp.path().join("corpus/profiles.csv")).unwrap();
    assert_eq!(profiles.lines().count(), 26, "25 subjects plus header");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("manifest_synth.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config"]["subjects"], "25");
    assert_eq!(manifest["config"]["seed"], "2");
}
