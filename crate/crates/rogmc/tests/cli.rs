//! End-to-end CLI tests against the compiled binary: prepare -> train ->
//! analyze on a small synthetic rating file, plus flag handling and error
//! reporting.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rogmc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rogmc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_toy_ratings(path: &Path) {
    // 6 users x 8 items, fully rated: survives 4-core filtering intact and
    // leaves every user enough interactions for an 0.5/0.25/0.25 split.
    let mut out = String::new();
    for u in 1..=6i64 {
        for i in 1..=8i64 {
            let r = ((u * 3 + i * 5) % 5) + 1;
            out.push_str(&format!("{u}\t{i}\t{r}\t{}\n", 1000 + u * 100 + i));
        }
    }
    fs::write(path, out).unwrap();
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let config = dir.join("run.toml");
    fs::write(
        &config,
        format!(
            r#"
dataset_path = "{}"
k_core = 4
split_ratios = [0.5, 0.25, 0.25]
prepared_dir = "{}"
out_dir = "{}"
seeds = [9]
epochs = 6
patience = 6
dim = 8
"#,
            dir.join("ratings.tsv").display(),
            dir.join("prepared").display(),
            dir.join("runs").display(),
        ),
    )
    .unwrap();
    config
}

#[test]
fn pipeline_prepare_train_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy_ratings(&tmp.path().join("ratings.tsv"));
    let config = write_config(tmp.path());
    let config_arg = config.to_str().unwrap();

    let prepare = rogmc(&["prepare", "--config", config_arg], tmp.path());
    assert!(prepare.status.success(), "prepare failed: {}", String::from_utf8_lossy(&prepare.stderr));
    let stdout = String::from_utf8_lossy(&prepare.stdout);
    assert!(stdout.contains("48 interactions"), "stats line missing: {stdout}");
    assert!(tmp.path().join("prepared/train.tsv").exists());
    assert!(tmp.path().join("prepared/metadata.json").exists());

    let train = rogmc(
        &["train", "--config", config_arg, "--deterministic"],
        tmp.path(),
    );
    assert!(train.status.success(), "train failed: {}", String::from_utf8_lossy(&train.stderr));

    let runs: Vec<_> = fs::read_dir(tmp.path().join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run_dir = runs[0].as_ref().unwrap().path();
    assert!(run_dir.join("model.ckpt").exists());
    assert!(run_dir.join("history.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 9);

    let history = fs::read_to_string(run_dir.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,ce,bpr,ir,total,val_rmse,best_flag\n"));
    assert_eq!(history.lines().count(), 1 + 6);

    let ckpt = run_dir.join("model.ckpt");
    let analyze = rogmc(
        &["analyze", ckpt.to_str().unwrap(), "--config", config_arg],
        tmp.path(),
    );
    assert!(analyze.status.success(), "analyze failed: {}", String::from_utf8_lossy(&analyze.stderr));
    let analyze_dirs: Vec<_> = fs::read_dir(tmp.path().join("runs")).unwrap().collect();
    assert_eq!(analyze_dirs.len(), 2, "analyze writes its own run dir");
    let dist = analyze_dirs
        .iter()
        .map(|d| d.as_ref().unwrap().path().join("distance_matrix.csv"))
        .find(|p| p.exists())
        .expect("distance matrix written");
    let matrix = fs::read_to_string(dist).unwrap();
    assert!(matrix.starts_with("t,1,2,3,4,5\n"), "unexpected header: {matrix}");
}

#[test]
fn cli_flag_overrides_variant() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy_ratings(&tmp.path().join("ratings.tsv"));
    let config = write_config(tmp.path());
    let config_arg = config.to_str().unwrap();

    let prepare = rogmc(&["prepare", "--config", config_arg], tmp.path());
    assert!(prepare.status.success());
    let train = rogmc(
        &["train", "--config", config_arg, "--variant", "no-ir", "--seed", "21"],
        tmp.path(),
    );
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let run_dir = fs::read_dir(tmp.path().join("runs")).unwrap().next().unwrap().unwrap().path();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["variant"], "no-ir");
    assert_eq!(manifest["seed"], 21);
}

#[test]
fn missing_dataset_fails_with_context_and_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, "dataset_path = \"/nonexistent/ratings.tsv\"\n").unwrap();
    let out = rogmc(&["prepare", "--config", config.to_str().unwrap()], tmp.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent/ratings.tsv"), "stderr lacks path: {stderr}");
}

#[test]
fn unknown_variant_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write_toy_ratings(&tmp.path().join("ratings.tsv"));
    let config = write_config(tmp.path());
    let out = rogmc(
        &["train", "--config", config.to_str().unwrap(), "--variant", "extra-fancy"],
        tmp.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("extra-fancy"), "stderr lacks variant name: {stderr}");
}

#[test]
fn malformed_raw_line_reports_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("ratings.tsv");
    fs::write(&raw, "1\t1\t5\t100\n1\t2\tbroken\n2\t1\t4\t101\n").unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(
        &config,
        format!("dataset_path = \"{}\"\nk_core = 1\n", raw.display()),
    )
    .unwrap();
    let out = rogmc(&["prepare", "--config", config.to_str().unwrap()], tmp.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ratings.tsv:2"), "stderr lacks file:line context: {stderr}");
}
