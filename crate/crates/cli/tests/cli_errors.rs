use std::path::Path;
use std::process::{Command, Output};

fn run(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fuelgauge"))
        .current_dir(cwd)
        .args(args)
        .env("RUST_LOG", "error")
        .env_remove("RUST_BACKTRACE")
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_data(cwd: &Path) {
    let out = run(
        cwd,
        &[
            "gen", "--out-dir", "data", "--count", "12", "--set", "n_train=6", "--set", "n_val=2", "--set",
            "hidden_dim=8", "--set", "length_law=lognormal:60:0.3",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn missing_manifest_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--out-dir", "ck", "--manifest", "nowhere/manifest.txt"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nowhere/manifest.txt"), "{}", stderr(&out));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen", "--out-dir", "data", "--set", "bogus=1"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bogus"), "{}", stderr(&out));
}

#[test]
fn static_baselines_need_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path());
    let out = run(
        dir.path(),
        &["eval-fuel", "--out-dir", "ev", "--manifest", "data/manifest.txt", "--method", "mean"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report = std::fs::read_to_string(dir.path().join("ev/fuel_report.csv")).unwrap();
    assert!(report.starts_with("method,split,seed,trace_count,rmae\n"));
    assert!(report.contains("\nmean,"));

    // A checkpoint-backed method without checkpoints fails and names itself.
    let out = run(
        dir.path(),
        &["eval-length", "--out-dir", "ev2", "--manifest", "data/manifest.txt", "--method", "gauge"],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("gauge"), "{}", stderr(&out));
}

#[test]
fn report_rejects_empty_and_mismatched_runs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("empty")).unwrap();
    let out = run(dir.path(), &["report", "--out-dir", "rep", "empty"]);
    assert!(!out.status.success());

    for (name, header) in [("a", "method,split,seed,trace_count,rmae"), ("b", "method,split,rmae")] {
        let d = dir.path().join(name);
        std::fs::create_dir_all(&d).unwrap();
        std::fs::write(d.join("fuel_report.csv"), format!("{header}\n")).unwrap();
    }
    let out = run(dir.path(), &["report", "--out-dir", "rep", "a", "b"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("fuel_report"), "{}", stderr(&out));
}
