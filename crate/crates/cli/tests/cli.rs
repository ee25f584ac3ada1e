use qpaths::cli_io::RunReport;
use std::path::Path;
use std::process::{Command, Output};

fn qpaths(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpaths"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn toy_run_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpaths(
        dir.path(),
        &["bdmc", "--particles", "100", "--k", "8", "--seed", "3", "--output", "r.json", "--trace-csv", "t.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("bdmc path=geometric log_Z="), "{stdout}");
    let report = RunReport::from_json(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert!(report.log_z.is_finite());
    assert_eq!(report.config_echo.seed, 3);
    assert_eq!(report.beta_trace.len(), 9);
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn identical_endpoints_print_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpaths(dir.path(), &["anneal-toy", "--endpoints", "identical", "--particles", "50"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("log_Z=0.000000"));
    let report = RunReport::from_json(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.log_z, 0.0);
}

#[test]
fn config_errors_exit_two_and_name_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpaths(dir.path(), &["smc", "--path-kind", "qpath", "--k", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    for field in ["q:", "k:", "dataset:"] {
        assert!(stderr.contains(field), "{stderr}");
    }
    assert!(!dir.path().join("report.json").exists());

    let out = qpaths(dir.path(), &["anneal-toy", "--schedule", "geometric"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_three_with_a_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "0,1.0\n2,0.5\n").unwrap();
    let out = qpaths(dir.path(), &["smc", "--dataset", "bad.csv", "--output", "r.json"]);
    assert_eq!(out.status.code(), Some(3));
    let report = RunReport::from_json(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let failure = report.failure.unwrap();
    assert!(failure.contains("row 2"), "{failure}");
    assert!(report.log_z.is_nan());
}
