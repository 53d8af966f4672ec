use std::process::Command;

fn glom() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glom"))
}

#[test]
fn help_exits_zero() {
    let out = glom().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["synth", "segment", "chip", "train", "cv", "eval"] {
        assert!(text.contains(sub), "help is missing `{sub}`");
    }
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = glom().args(["chip", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = glom()
        .args(["eval", "--predictions", "/nonexistent/rows.csv", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "opt.typo = 1\n").unwrap();
    let out = glom()
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("d"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}

#[test]
fn eval_writes_report_and_scatter() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.csv");
    std::fs::write(
        &rows,
        "patient_id,truth,prediction,baseline\n\
         a,40.0,50.0,45.0\n\
         b,70.0,60.0,72.0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = glom()
        .args(["eval", "--predictions"])
        .arg(&rows)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("report.csv").exists());
    assert!(out_dir.join("scatter.svg").exists());
}
