use std::path::Path;
use std::process::Command;

const BASE: &str = r#"
[cascade]
alpha = 0.3
beta = 0.0
epsilon = 1e-4
delta = 0.25
a0 = 0.1
depth = 4
truncated_regime = true
"#;

fn config(dir: &Path, tag: &str, extra: &str) -> std::path::PathBuf {
    let path = dir.join(format!("{tag}.toml"));
    std::fs::write(&path, format!("tag = \"{tag}\"\n{BASE}\n{extra}")).unwrap();
    path
}

fn adlab(args: &[&str], cfg: &Path, out: &Path, threads: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_adlab"));
    cmd.args(args).arg("--config").arg(cfg).arg("--out").arg(out);
    match threads {
        Some(t) => cmd.env("ADLAB_THREADS", t),
        None => cmd.env_remove("ADLAB_THREADS"),
    };
    cmd.output().unwrap()
}

#[test]
fn cascade_writes_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "theoremA", "");
    let out = dir.path().join("out");
    let o = adlab(&["cascade"], &cfg, &out, None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sequences.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(out.join("conditions.json").exists());
}

#[test]
fn violated_conditions_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = format!("tag = \"theoremA\"\n{}", BASE.replace("truncated_regime = true", "truncated_regime = false").replace("delta = 0.25", "delta = 0.2"));
    std::fs::write(&path, text).unwrap();
    let out = dir.path().join("out");
    let o = adlab(&["cascade"], &path, &out, None);
    assert_eq!(o.status.code(), Some(2));
    let report = std::fs::read_to_string(out.join("conditions.json")).unwrap();
    assert!(report.contains("\"d0\""));
}

#[test]
fn infeasible_grid_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "dichotomyC", "[run]\nq_max = 3\nn = 128\n");
    let o = adlab(&["solve"], &cfg, &dir.path().join("out"), None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn malformed_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "theoremA", "[run]\nbogus = 1\n");
    let o = adlab(&["run"], &cfg, &dir.path().join("out"), None);
    assert_eq!(o.status.code(), Some(1));
    let o = adlab(&["run"], &cfg, &dir.path().join("out"), Some("zero"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn heat_calibration_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "heat_calibration", "[run]\nheat_nus = [0.25, 0.0625]\n");
    let out = dir.path().join("out");
    let o = adlab(&["run"], &cfg, &out, Some("2"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("PASS heat_closed_form"), "{stdout}");
    for f in ["report.json", "report.csv", "timing.json", "gap_vs_nu.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let timing = std::fs::read_to_string(out.join("timing.json")).unwrap();
    assert!(timing.contains("\"threads\": 2"));
}

#[test]
fn solve_lift_norms_shear_on_one_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "theoremA", "[run]\nq_min = 1\nq_max = 1\ncheckpoints_per_piece = 2\n");
    for (cmd, file) in [
        ("shear", "regularity.csv"),
        ("solve", "trajectory.adlb"),
        ("lift", "lift.json"),
        ("norms", "norms.json"),
    ] {
        let out = dir.path().join(cmd);
        let o = adlab(&[cmd], &cfg, &out, Some("1"));
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join(file).exists(), "{cmd} missing {file}");
    }
    let (times, fields) = adlab_core::io::read_fields(&dir.path().join("solve/trajectory.adlb")).unwrap();
    assert_eq!(times.len(), fields.len());
    assert_eq!(times.first(), Some(&0.0));
}
