use std::process::Command;

fn spfem() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spfem"))
}

#[test]
fn oracle_check_passes() {
    let out = spfem().arg("oracle-check").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("example 1"));
    assert!(text.contains("example 2"));
}

#[test]
fn validation_errors_exit_with_one() {
    let out = spfem().args(["--mu", "-1", "oracle-check"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "bogus = 3\n").unwrap();
    let out = spfem()
        .args(["--config", cfg.to_str().unwrap(), "solve"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "mu = -5\n").unwrap();
    let out = spfem()
        .args(["--config", cfg.to_str().unwrap(), "--mu", "0.1", "eigs", "--m", "3", "--count", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn low_temperature_regime_overflows_cleanly() {
    let out = spfem()
        .args(["--mu", "2.2e-3", "--f0", "4.4e-6", "--m", "4", "--l-max", "64", "solve"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncation"));
}

#[test]
fn deterministic_solve_dumps_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let target = dir.path().join(name);
        let out = spfem()
            .args(["solve", "--m", "4", "--deterministic", "--out", target.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (
            std::fs::read(target.join("potential.txt")).unwrap(),
            std::fs::read(target.join("density.txt")).unwrap(),
        )
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let pot = String::from_utf8(a.0).unwrap();
    assert_eq!(pot.lines().count(), 125);
    assert_eq!(pot.lines().next().unwrap().split_whitespace().count(), 4);
    assert_eq!(String::from_utf8(a.1).unwrap().lines().count(), 384 * 15);
}

#[test]
fn study_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t1.csv");
    let out = spfem()
        .args(["study", "--example", "1", "--meshes", "3,4", "--deterministic", "--out", csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "Ne,h,eV0,orderV0,eV1,orderV1,en0,orderN0,Lh,fermiH,iters,seconds");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("162,"));
    assert!(lines[2].starts_with("384,"));
}
