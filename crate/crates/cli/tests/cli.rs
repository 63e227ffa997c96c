use std::path::Path;
use std::process::{Command, Output};

fn pipesched(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipesched"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn have_solver() -> bool {
    pipesched::solver::find_solver().is_ok()
}

#[test]
fn unknown_suite_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pipesched(&["experiment", "--suite", "XL"], dir.path());
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&pipesched(&["--help"], dir.path())), 0);
}

#[test]
fn infeasible_instance_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let gen = pipesched(
        &["generate", "oracle", "--seed", "0", "--out", "seed0.json"],
        dir.path(),
    );
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    assert_eq!(code(&pipesched(&["oracle", "--instance", "seed0.json"], dir.path())), 2);
    if have_solver() {
        let out = pipesched(&["solve", "--instance", "seed0.json", "--out-dir", "run"], dir.path());
        assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn broken_schedule_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let gen = pipesched(&["generate", "path", "--vertices", "2", "--out", "p2.json"], dir.path());
    assert_eq!(code(&gen), 0);
    let overlapping = r#"{"placements": [
        {"edge": "e1", "batch": "r1:F:standard", "t": 0},
        {"edge": "e1", "batch": "r1:F:standard", "t": 3}
    ]}"#;
    std::fs::write(dir.path().join("bad.json"), overlapping).unwrap();
    let out = pipesched(
        &["validate", "--instance", "p2.json", "--schedule", "bad.json"],
        dir.path(),
    );
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stdout).to_lowercase().contains("packing"));
}

#[test]
fn solve_validate_gantt_round_trip() {
    if !have_solver() {
        eprintln!("no MILP solver found, skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&pipesched(
            &["generate", "path", "--vertices", "2", "--out", "p2.json"],
            dir.path()
        )),
        0
    );
    let solve = pipesched(
        &[
            "solve",
            "--instance",
            "p2.json",
            "--out-dir",
            "run",
            "--time-limit",
            "120",
        ],
        dir.path(),
    );
    assert_eq!(code(&solve), 0, "{}", String::from_utf8_lossy(&solve.stderr));
    for file in ["schedule.json", "validation.json", "gantt.csv", "manifest.json"] {
        assert!(dir.path().join("run").join(file).is_file(), "{file}");
    }
    let validate = pipesched(
        &["validate", "--instance", "p2.json", "--schedule", "run/schedule.json"],
        dir.path(),
    );
    assert_eq!(code(&validate), 0);
    let gantt = pipesched(
        &["gantt", "--instance", "p2.json", "--schedule", "run/schedule.json"],
        dir.path(),
    );
    assert_eq!(code(&gantt), 0);
    let csv = String::from_utf8(gantt.stdout).unwrap();
    assert!(csv.starts_with("edge,batch,product,start,end,volume\n"));
    assert_eq!(csv, std::fs::read_to_string(dir.path().join("run/gantt.csv")).unwrap());
}
