use adlab_core::experiments::{emit_outputs, run, run_vanishing, ExperimentConfig, ExperimentTag};
use adlab_core::scalarsolver::vanishing_viscosity_gap;

fn small(tag: ExperimentTag) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_scale(tag);
    cfg.run.q_min = 1;
    cfg.run.q_max = 2;
    cfg
}

#[test]
fn dichotomy_report_rows_and_files() {
    let cfg = small(ExperimentTag::DichotomyC);
    let report = run(&cfg).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert!(report.rows.windows(2).all(|w| w[0].nu >= w[1].nu));
    assert!(!report.any_flagged());
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&report, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 4);

    let again = tempfile::tempdir().unwrap();
    emit_outputs(&run(&cfg).unwrap(), again.path()).unwrap();
    for name in ["report.json", "report.csv", "dissipation_vs_q.svg", "gap_vs_nu.svg", "norm_vs_nu.svg"] {
        assert_eq!(
            std::fs::read(dir.path().join(name)).unwrap(),
            std::fs::read(again.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn nonvanishing_scan_populates_verdict() {
    let report = run(&small(ExperimentTag::TheoremA)).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.verdict("nonvanishing").is_some());
    assert!(report.rows.iter().all(|r| r.theta_dissipation > 0.0));
}

#[test]
fn vanishing_gaps_decrease() {
    // Levels 1..=3; at level 0 the comparison time 1 − T_0 precedes all shear.
    let cfg = ExperimentConfig::desk_scale(ExperimentTag::Vanishing);
    let report = run_vanishing(&cfg).unwrap();
    assert_eq!(report.vanishing.len(), 3);
    assert!(report.verdict("gaps_decreasing").unwrap().pass, "{:?}", report.vanishing);
}

#[test]
fn vanishing_gap_is_zero_without_viscosity() {
    let cfg = small(ExperimentTag::Vanishing);
    let s = adlab_core::experiments::setup(&cfg).unwrap();
    let g = vanishing_viscosity_gap(0.0, &s.schedule, 2048).unwrap();
    assert_eq!(g.gap_l2, 0.0);
}

#[test]
fn heat_calibration_run() {
    let mut cfg = ExperimentConfig::desk_scale(ExperimentTag::HeatCalibration);
    cfg.run.heat_nus = vec![0.25];
    let report = run(&cfg).unwrap();
    assert!(report.verdicts.iter().all(|v| v.pass));
}

#[test]
fn infeasible_grid_maps_to_exit_three() {
    let mut cfg = small(ExperimentTag::DichotomyB);
    cfg.run.n = Some(64);
    assert_eq!(run(&cfg).unwrap_err().exit_code(), 3);
}
