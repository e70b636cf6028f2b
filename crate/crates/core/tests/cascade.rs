use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;

use adlab_core::cascade::{build_sequences, check_conditions, compute_gamma, CascadeParams};

fn q(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `3β(1+3ε(1+δ))(1+δ)/(1−δ) + δ/8` in exact rationals.
fn gamma_exact(beta: &BigRational, eps: &BigRational, delta: &BigRational) -> BigRational {
    let one = q(1, 1);
    q(3, 1) * beta * (&one + q(3, 1) * eps * (&one + delta)) * (&one + delta) / (&one - delta) + delta / q(8, 1)
}

#[test]
fn gamma_desk_scale_is_one_thirty_second() {
    let g = compute_gamma(0.0, 1e-4, 0.25).unwrap();
    assert_eq!(g, 1.0 / 32.0);
}

#[test]
fn gamma_against_rational_oracle() {
    let (beta, eps, delta) = (q(1, 16), q(1, 1024), q(1, 8));
    let exact = gamma_exact(&beta, &eps, &delta).to_f64().unwrap();
    let got = compute_gamma(1.0 / 16.0, 1.0 / 1024.0, 1.0 / 8.0).unwrap();
    assert!((got - exact).abs() <= 4.0 * f64::EPSILON * exact, "{got} vs {exact}");
}

#[test]
fn time_sequence_normalization() {
    let p = CascadeParams::desk_scale();
    let s = build_sequences(&p).unwrap();
    assert_eq!(s.time(-1), 1.0);
    assert!((s.t[0] - 0.95).abs() < 1e-15);
    assert_eq!(s.time(p.depth as isize + 1), 0.0);
    for w in s.t.windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn desk_scale_frequencies_and_floors() {
    let s = build_sequences(&CascadeParams::desk_scale()).unwrap();
    let f: Vec<u32> = (0..4).map(|q| s.stage_frequency(q)).collect();
    assert_eq!(f, vec![9, 18, 45, 138]);
    assert_eq!(s.resolution_floor(3), 1104);
}

#[test]
fn level_for_viscosity_saturates() {
    let s = build_sequences(&CascadeParams::desk_scale()).unwrap();
    assert_eq!(s.level_for_viscosity(1.0), 0);
    assert_eq!(s.level_for_viscosity(0.0), s.depth);
    assert_eq!(s.level_for_viscosity(s.nu_tilde[2]), 2);
    assert_eq!(s.level_for_viscosity(0.5 * (s.nu_tilde[1] + s.nu_tilde[2])), 1);
}

#[test]
fn conditions_report_slacks() {
    let r = check_conditions(0.3, 0.0, 1e-4, 0.25, 0.1);
    assert!(r.get("eps_delta").unwrap().pass);
    assert!(!r.get("d0").unwrap().pass);
    assert_eq!(r.failures(), vec!["d0"]);
}

proptest! {
    #[test]
    fn gamma_matches_rationals(b in 0i64..300, e in 1i64..240, d in 1i64..=256) {
        let (beta, eps, delta) = (q(b, 1024), q(e, 1024), q(d, 1024));
        let exact = gamma_exact(&beta, &eps, &delta).to_f64().unwrap();
        let got = compute_gamma(b as f64 / 1024.0, e as f64 / 1024.0, d as f64 / 1024.0).unwrap();
        prop_assert!((got - exact).abs() <= 8.0 * f64::EPSILON * exact.max(1e-300));
    }

    #[test]
    fn ladder_identities(a0 in 0.05f64..0.5, d in 0.05f64..0.25) {
        let mut p = CascadeParams::desk_scale();
        p.a0 = a0;
        p.delta = d;
        p.depth = 3;
        if let Ok(s) = build_sequences(&p) {
            for q in 0..3 {
                let lhs = s.a[q + 1].ln();
                let rhs = (1.0 + d) * s.a[q].ln();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
                prop_assert!((s.lambda[q] * 2.0 * s.a[q] - 1.0).abs() < 1e-12);
                prop_assert!(s.nu_tilde[q] >= s.nu_cons_a[q] && s.nu_cons_a[q] > s.nu_tilde[q + 1]);
            }
        }
    }

    #[test]
    fn smaller_epsilon_keeps_conditions(e in 1e-5f64..1e-3) {
        let a = check_conditions(0.3, 0.0, e, 0.25, 0.1);
        let b = check_conditions(0.3, 0.0, e / 2.0, 0.25, 0.1);
        for (x, y) in a.checks.iter().zip(&b.checks) {
            if x.name != "d0" && x.pass {
                prop_assert!(y.pass, "{} lost at smaller epsilon", x.name);
            }
        }
    }
}
