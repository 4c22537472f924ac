use std::path::Path;
use std::process::{Command, Output};

use mfl_harness::persist::{load_study, study_files};
use mfl_harness::StudyKind;

fn mfl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("MFL_OUT_DIR")
        .output()
        .unwrap()
}

const SHORT: [&str; 6] = [
    "--override",
    "dynamics.t_final=0.05",
    "--override",
    "dynamics.particles=[2, 3]",
    "--override",
    "dynamics.record_every=10",
];

#[test]
fn nbody_writes_one_row_per_run_and_recorded_time() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["nbody"];
    args.extend(SHORT);
    let out = mfl(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("trace norms"));
    let (result, cfg) = load_study(&study_files(dir.path(), StudyKind::Nbody)).unwrap();
    assert_eq!(cfg.dynamics.particles, vec![2, 3]);
    assert_eq!(result.rows.len(), 2 * 6);
    assert!(result.values("norm", |_| true).iter().all(|n| (n - 1.0).abs() < 1e-10));
}

#[test]
fn print_config_round_trips_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let out = mfl(&["cutoff-study", "--print-config", "--seed", "17"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let path = dir.path().join("cutoff.toml");
    std::fs::write(&path, &text).unwrap();
    let again = mfl(&["cutoff-study", "--print-config", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
    assert!(text.contains("seed = 17"));
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = mfl(&["hartree", "--override", "grid.nope=3"], dir.path());
    assert_eq!(bad_key.status.code(), Some(2));
    let bad_grid = mfl(&["hartree", "--override", "grid.n=30"], dir.path());
    assert_eq!(bad_grid.status.code(), Some(2));
    let missing = mfl(&["hartree", "--config", "/nonexistent/mfl.toml"], dir.path());
    assert_eq!(missing.status.code(), Some(2));

    let mut args = vec!["nbody", "--override", "dynamics.memory_limit=1000"];
    args.extend(SHORT);
    assert_eq!(mfl(&args, dir.path()).status.code(), Some(3));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = mfl(&["hartree", "--override", "dynamics.t_final=0.01"], &blocker);
    assert_eq!(out.status.code(), Some(5));
}
