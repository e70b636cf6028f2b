use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use adlab_core::cascade::{build_sequences, CascadeParams};
use adlab_core::scalarsolver::{
    advect_exact, diffuse_exact, initial_datum, solve, DtPolicy, ScalarField, SolveOptions,
};
use adlab_core::shearflow::{build_schedule, truncate, Direction, Profile, ShearSchedule, ShearStage};

fn schedule() -> Arc<ShearSchedule> {
    let s = build_sequences(&CascadeParams::desk_scale()).unwrap();
    Arc::new(build_schedule(&s, Profile::Sine).unwrap())
}

fn wave(x: f64, y: f64) -> f64 {
    (2.0 * PI * (2.0 * x - y)).cos() + 0.3 * (2.0 * PI * 4.0 * y).sin()
}

/// Foot of the characteristic through `x` at `t1`, traced back to `t0` by RK4.
fn foot(stage: &ShearStage, t0: f64, t1: f64, x: [f64; 2]) -> [f64; 2] {
    let u = |t: f64, p: [f64; 2]| match stage.direction {
        Direction::Horizontal => [stage.value(t, p[1]), 0.0],
        Direction::Vertical => [0.0, stage.value(t, p[0])],
    };
    let steps = 2000;
    let h = (t0 - t1) / steps as f64;
    let (mut p, mut t) = (x, t1);
    for _ in 0..steps {
        let k1 = u(t, p);
        let k2 = u(t + h / 2.0, [p[0] + h / 2.0 * k1[0], p[1] + h / 2.0 * k1[1]]);
        let k3 = u(t + h / 2.0, [p[0] + h / 2.0 * k2[0], p[1] + h / 2.0 * k2[1]]);
        let k4 = u(t + h, [p[0] + h * k3[0], p[1] + h * k3[1]]);
        for c in 0..2 {
            p[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        t += h;
    }
    p
}

#[test]
fn still_flow_decays_single_mode() {
    let s = schedule();
    let u0 = truncate(&s, 0).unwrap();
    let nu = 0.01;
    let traj = solve(&u0, nu, &initial_datum(16).unwrap(), &SolveOptions::new(vec![0.25, 1.0])).unwrap();
    for d in &traj.diagnostics {
        let expect = (-4.0 * PI * PI * nu * d.t).exp();
        assert!((d.l2 / traj.initial.l2 - expect).abs() < 1e-13);
    }
}

#[test]
fn diffusion_loss_matches_energy_drop() {
    let f = ScalarField::from_fn(32, wave).unwrap();
    let (g, loss) = diffuse_exact(&f, 3e-3, 0.2).unwrap();
    assert!((f.l2_sq() - g.l2_sq() - loss).abs() < 1e-14);
}

#[test]
fn inviscid_reflection_restores_datum() {
    let s = schedule();
    let u = truncate(&s, 2).unwrap();
    let theta = initial_datum(256).unwrap();
    let traj = solve(&u, 0.0, &theta, &SolveOptions::new(vec![1.0, 2.0]).storing_fields()).unwrap();
    let err = traj.fields[1]
        .values()
        .iter()
        .zip(theta.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
    let moved = traj.fields[0].values().iter().zip(theta.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(moved > 1e-3);
}

#[test]
fn grid_below_floor_is_rejected() {
    let s = schedule();
    let u = truncate(&s, 3).unwrap();
    let err = solve(&u, 0.0, &initial_datum(256).unwrap(), &SolveOptions::new(vec![1.0])).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn fixed_and_adaptive_policies_agree_for_shear_free_gaps() {
    let s = schedule();
    let u = truncate(&s, 0).unwrap();
    let theta = initial_datum(16).unwrap();
    let a = solve(&u, 0.05, &theta, &SolveOptions::new(vec![1.0])).unwrap();
    let b = solve(&u, 0.05, &theta, &SolveOptions::new(vec![1.0]).with_policy(DtPolicy::Fixed(1e-2))).unwrap();
    assert!((a.total_dissipation() - b.total_dissipation()).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn advection_matches_characteristics(idx in 0usize..8, u in 0.0f64..1.0, v in 0.0f64..1.0, i in 0usize..64, j in 0usize..64) {
        let s = schedule();
        let st = &s.stages[idx];
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let (t0, t1) = (st.start + lo * st.width, st.start + hi * st.width);
        let theta = ScalarField::from_fn(64, wave).unwrap();
        let out = advect_exact(&theta, st, t0, t1).unwrap();
        let p = foot(st, t0, t1, [i as f64 / 64.0, j as f64 / 64.0]);
        prop_assert!((out.at(i, j) - wave(p[0], p[1])).abs() < 1e-9);
    }

    #[test]
    fn energy_balance_holds(log_nu in -5.0f64..-2.0, q in 1usize..=2) {
        let s = schedule();
        let u = truncate(&s, q).unwrap();
        let n = u.resolution_floor().next_power_of_two();
        let theta = initial_datum(n).unwrap();
        let traj = solve(&u, 10f64.powf(log_nu), &theta, &SolveOptions::new(vec![0.3, 0.7, 1.0])).unwrap();
        let e0 = theta.l2_sq();
        for d in &traj.diagnostics {
            prop_assert!((d.l2 * d.l2 + d.cumulative_dissipation - e0).abs() / e0 < 1e-10);
        }
    }
}
