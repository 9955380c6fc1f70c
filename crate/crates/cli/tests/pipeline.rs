use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../demo")
        .canonicalize()
        .expect("demo directory exists")
}

/// Copies the demo bundle into `dst`, skipping any stale output tree so
/// every test starts from inputs only.
fn copy_demo(dst: &Path) {
    copy_tree(&demo_dir(), dst);
    let out = dst.join("out");
    if out.exists() {
        fs::remove_dir_all(&out).expect("clear copied output");
    }
}

fn copy_tree(src: &Path, dst: &Path) {
    fs::create_dir_all(dst).expect("create target dir");
    for entry in fs::read_dir(src).expect("read source dir") {
        let entry = entry.expect("dir entry");
        let from = entry.path();
        let to = dst.join(entry.file_name());
        if from.is_dir() {
            copy_tree(&from, &to);
        } else {
            fs::copy(&from, &to).expect("copy fixture file");
        }
    }
}

fn run(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spec2sva"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("spawn pipeline binary")
}

fn assert_success(out: &Output, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(0),
        "{what} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn report_json(root: &Path) -> serde_json::Value {
    let text = fs::read_to_string(root.join("out/report/report.json")).expect("report.json");
    serde_json::from_str(&text).expect("report.json parses")
}

#[test]
fn missing_rtl_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    copy_demo(tmp.path());
    fs::remove_file(tmp.path().join("pulse_ack.v")).unwrap();

    let out = run(&tmp.path().join("config.toml"), &["run"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error: config:"), "stderr: {stderr}");
    assert!(stderr.contains("paths.rtl"), "stderr: {stderr}");
}

#[test]
fn full_run_converges_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    copy_demo(tmp.path());
    let config = tmp.path().join("config.toml");

    assert_success(&run(&config, &["run"]), "first run");
    for artifact in [
        "out/blocks/classified.jsonl",
        "out/records/records.jsonl",
        "out/signals/signals.json",
        "out/assertions/assertions.sva",
        "out/mutants/manifest.json",
        "out/matrix/matrix.json",
        "out/matrix/golden.json",
        "out/report/report.md",
        "out/report/history.json",
    ] {
        assert!(tmp.path().join(artifact).is_file(), "missing {artifact}");
    }

    let report = report_json(tmp.path());
    let metrics = &report["reports"][0];
    assert_eq!(metrics["design"], "pulse_ack");
    assert_eq!(metrics["mdr"], serde_json::json!([1, 1]));
    assert_eq!(metrics["fpr"], serde_json::json!([0, 1]));

    let history: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(tmp.path().join("out/report/history.json")).unwrap(),
    )
    .unwrap();
    let iterations = history["iterations"].as_array().unwrap();
    assert_eq!(iterations.len(), 2);
    assert_eq!(iterations[1]["stop"], "mdr_one");

    let first_report = fs::read(tmp.path().join("out/report/report.json")).unwrap();
    let first_history = fs::read(tmp.path().join("out/report/history.json")).unwrap();
    fs::remove_dir_all(tmp.path().join("out")).unwrap();
    assert_success(&run(&config, &["run"]), "second run");
    assert_eq!(
        first_report,
        fs::read(tmp.path().join("out/report/report.json")).unwrap(),
        "report.json changed between identical runs"
    );
    assert_eq!(
        first_history,
        fs::read(tmp.path().join("out/report/history.json")).unwrap(),
        "history.json changed between identical runs"
    );
}

#[test]
fn resume_reuses_upstream_artifacts() {
    let tmp = TempDir::new().unwrap();
    copy_demo(tmp.path());
    let config = tmp.path().join("config.toml");

    assert_success(&run(&config, &["run"]), "baseline run");
    let baseline = fs::read(tmp.path().join("out/report/report.json")).unwrap();

    // Drop everything downstream of signal merging, then resume there.
    for dir in ["out/assertions", "out/mutants", "out/matrix", "out/report"] {
        fs::remove_dir_all(tmp.path().join(dir)).unwrap();
    }
    assert_success(&run(&config, &["run", "--from", "generate"]), "resumed run");
    assert_eq!(
        baseline,
        fs::read(tmp.path().join("out/report/report.json")).unwrap(),
        "resume produced a different report"
    );

    // A pure re-evaluation rewrites the report from the stored matrix.
    fs::remove_dir_all(tmp.path().join("out/report")).unwrap();
    assert_success(&run(&config, &["run", "--from", "evaluate"]), "evaluate-only run");
    assert!(tmp.path().join("out/report/report.md").is_file());
}

#[test]
fn resume_without_upstream_artifacts_fails_cleanly() {
    let tmp = TempDir::new().unwrap();
    copy_demo(tmp.path());

    let out = run(&tmp.path().join("config.toml"), &["run", "--from", "check"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing artifact"), "stderr: {stderr}");
}

#[test]
fn stage_subcommands_chain_end_to_end() {
    let tmp = TempDir::new().unwrap();
    copy_demo(tmp.path());
    let config = tmp.path().join("config.toml");

    let stages: [(&str, &str); 8] = [
        ("ingest", "out/blocks/blocks.jsonl"),
        ("classify", "out/blocks/classified.jsonl"),
        ("analyze", "out/records/records.jsonl"),
        ("merge", "out/signals/signals.json"),
        ("generate", "out/assertions/assertions.sva"),
        ("mutate", "out/mutants/manifest.json"),
        ("check", "out/matrix/matrix.json"),
        ("evaluate", "out/report/report.md"),
    ];
    for (stage, artifact) in stages {
        assert_success(&run(&config, &[stage]), stage);
        assert!(
            tmp.path().join(artifact).is_file(),
            "stage `{stage}` did not produce {artifact}"
        );
    }

    // Single-pass generation has no mutation feedback, so only the
    // baseline assertion exists and the reset-branch edits survive.
    let report = report_json(tmp.path());
    let mdr = &report["reports"][0]["mdr"];
    assert_eq!(*mdr, serde_json::json!([5, 7]));
}

#[test]
fn offline_flag_degrades_live_config_without_failing() {
    let tmp = TempDir::new().unwrap();
    copy_demo(tmp.path());
    fs::create_dir(tmp.path().join("cache")).unwrap();
    let config = tmp.path().join("config.toml");
    let text = fs::read_to_string(&config).unwrap();
    let text = text.replace(
        "mode = \"mock\"\nfixture_dir = \"fixtures\"",
        "mode = \"live\"\nendpoint = \"https://llm.invalid/v1\"\nmodel = \"demo-model\"\napi_key_env = \"DEMO_API_KEY\"\ncache_dir = \"cache\"",
    );
    fs::write(&config, text).unwrap();

    // No cached responses exist, so every call falls back to the
    // deterministic offline path; the run must still complete.
    let out = run(&config, &["--offline", "run"]);
    assert_success(&out, "offline run");
    assert!(tmp.path().join("out/report/report.md").is_file());
}

#[test]
fn ablation_flags_keep_the_demo_report_stable() {
    let tmp = TempDir::new().unwrap();
    copy_demo(tmp.path());
    let config = tmp.path().join("config.toml");

    assert_success(&run(&config, &["run"]), "baseline run");
    let baseline = fs::read(tmp.path().join("out/report/report.json")).unwrap();

    let ablated = tmp.path().join("ablated");
    let out = run(
        &config,
        &[
            "--no-rag",
            "--no-cot",
            "--out",
            ablated.to_str().unwrap(),
            "run",
        ],
    );
    assert_success(&out, "ablated run");
    // The demo fixtures answer both prompt styles identically, so the
    // metrics must not move when retrieval and step prompting are off.
    assert_eq!(
        baseline,
        fs::read(ablated.join("report/report.json")).unwrap(),
        "ablation flags changed the demo report"
    );
}
