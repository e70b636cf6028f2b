//! Parameter hierarchy and the derived scale, time and viscosity sequences.
//!
//! Lengths shrink super-geometrically, `a_{q+1} = a_q^{1+δ}`, so every
//! sequence is carried as a [`LogScale`]: a coefficient times a power of
//! `a0`. Exponent arithmetic is exact; floats are produced only when a
//! solver needs them.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{AdlabError, Result};

/// `exp(ln_coeff) * a0^a0_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScale {
    pub ln_coeff: f64,
    pub a0_exponent: f64,
}

impl LogScale {
    pub fn power(a0_exponent: f64) -> Self {
        LogScale {
            ln_coeff: 0.0,
            a0_exponent,
        }
    }

    pub fn value(&self, a0: f64) -> f64 {
        self.ln_coeff.exp() * a0.powf(self.a0_exponent)
    }

    pub fn ln(&self, a0: f64) -> f64 {
        self.ln_coeff + self.a0_exponent * a0.ln()
    }

    pub fn log10(&self, a0: f64) -> f64 {
        self.ln(a0) / std::f64::consts::LN_10
    }

    pub fn mul(&self, other: &LogScale) -> LogScale {
        LogScale {
            ln_coeff: self.ln_coeff + other.ln_coeff,
            a0_exponent: self.a0_exponent + other.a0_exponent,
        }
    }
}

/// Gamma exponent of the cascade: `3β(1+3ε(1+δ))(1+δ)/(1−δ) + δ/8`.
///
/// `β ∈ [0, 1/3)`, `ε ∈ (0, 1/4)` and `δ ∈ (0, 1/4]`; the closed upper end
/// for `δ` admits the desk-scale runs at `δ = 1/4`.
pub fn compute_gamma(beta: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0 / 3.0).contains(&beta) {
        return Err(AdlabError::OutOfRange {
            name: "beta",
            value: beta,
            range: "[0, 1/3)",
        });
    }
    if !(epsilon > 0.0 && epsilon < 0.25) {
        return Err(AdlabError::OutOfRange {
            name: "epsilon",
            value: epsilon,
            range: "(0, 1/4)",
        });
    }
    if !(delta > 0.0 && delta <= 0.25) {
        return Err(AdlabError::OutOfRange {
            name: "delta",
            value: delta,
            range: "(0, 1/4]",
        });
    }
    Ok(gamma_expr(beta, epsilon, delta))
}

fn gamma_expr(beta: f64, epsilon: f64, delta: f64) -> f64 {
    3.0 * beta * (1.0 + 3.0 * epsilon * (1.0 + delta)) * (1.0 + delta) / (1.0 - delta) + delta / 8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub checks: Vec<ConditionCheck>,
    pub pass: bool,
}

impl ConditionReport {
    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }
}

/// Evaluates every parameter inequality and reports its slack. Accepts any
/// numeric tuple.
pub fn check_conditions(alpha: f64, beta: f64, epsilon: f64, delta: f64, a0: f64) -> ConditionReport {
    let mut checks = Vec::with_capacity(5);
    let mut push = |name: &str, slack: f64, pass: bool| {
        checks.push(ConditionCheck {
            name: name.to_string(),
            slack,
            pass,
        })
    };

    let s = 1.0 - (alpha + 2.0 * beta);
    push("alpha_plus_2beta", s, s > 0.0);

    let beta_term = beta * (1.0 + 3.0 * epsilon * (1.0 + delta)) * (1.0 + delta) / (1.0 - delta);
    let s = 1.0 - 2.0 * beta_term - alpha * (1.0 + epsilon * delta) * (1.0 + delta) - delta / 8.0;
    push("alpha_beta_eps_kappa", s, s > 0.0);

    let s = 1.0 - (3.0 * beta_term + delta / 8.0);
    push("gamma_eps", s, s > 0.0);

    let s = delta.powi(3) / 50.0 - epsilon;
    push("eps_delta", s, s >= 0.0);

    let s = 1.0 / 20.0 - (a0.powf(epsilon * delta * delta) + a0.powf(epsilon * delta / 8.0));
    push("d0", s, s >= 0.0);

    let pass = checks.iter().all(|c| c.pass);
    ConditionReport { checks, pass }
}

fn default_t0() -> f64 {
    0.95
}

/// Cascade parameters. `gamma` and `sigma` are derived; `sigma` may be
/// pinned explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeParams {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub a0: f64,
    /// Cascade depth `Q`; shear stages occupy levels `0..Q`.
    pub depth: usize,
    /// Target value of `T_0`; the time sequence is normalized to it.
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Desk-scale regime in which the `a0` smallness condition is waived.
    #[serde(default)]
    pub truncated_regime: bool,
}

impl CascadeParams {
    /// The desk-scale parameter set used by the dichotomy experiments:
    /// `a0 = 0.1`, `δ = 1/4`, `β = 0`.
    pub fn desk_scale() -> Self {
        CascadeParams {
            alpha: 0.3,
            beta: 0.0,
            epsilon: 1e-4,
            delta: 0.25,
            a0: 0.1,
            depth: 4,
            t0: default_t0(),
            sigma: None,
            truncated_regime: true,
        }
    }

    pub fn gamma(&self) -> f64 {
        gamma_expr(self.beta, self.epsilon, self.delta)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
            .unwrap_or_else(|| 0.5 * sigma_upper_bound(self.gamma(), self.delta, self.epsilon))
    }

    pub fn conditions(&self) -> ConditionReport {
        check_conditions(self.alpha, self.beta, self.epsilon, self.delta, self.a0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(AdlabError::OutOfRange {
                name: "alpha",
                value: self.alpha,
                range: "[0, 1)",
            });
        }
        if !(self.a0 > 0.0 && self.a0 < 1.0) {
            return Err(AdlabError::OutOfRange {
                name: "a0",
                value: self.a0,
                range: "(0, 1)",
            });
        }
        if self.depth < 1 {
            return Err(AdlabError::OutOfRange {
                name: "depth",
                value: self.depth as f64,
                range: ">= 1",
            });
        }
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return Err(AdlabError::OutOfRange {
                name: "t0",
                value: self.t0,
                range: "(0, 1)",
            });
        }
        if !self.truncated_regime && self.delta >= 0.25 {
            return Err(AdlabError::OutOfRange {
                name: "delta",
                value: self.delta,
                range: "(0, 1/4)",
            });
        }
        let gamma = compute_gamma(self.beta, self.epsilon, self.delta)?;
        if gamma >= 1.0 {
            return Err(AdlabError::Conditions(format!("gamma = {gamma} >= 1")));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s < 1.0) {
                return Err(AdlabError::OutOfRange {
                    name: "sigma",
                    value: s,
                    range: "(0, 1)",
                });
            }
        }
        let report = self.conditions();
        let failures: Vec<&str> = report
            .failures()
            .into_iter()
            .filter(|n| !(self.truncated_regime && *n == "d0"))
            .collect();
        if !failures.is_empty() {
            return Err(AdlabError::Conditions(failures.join(", ")));
        }
        Ok(())
    }
}

/// Upper end of the admissible `σ` window: the first positive root of
/// either force-regularity constraint, located by bisection.
pub fn sigma_upper_bound(gamma: f64, delta: f64, epsilon: f64) -> f64 {
    let c = (1.0 + delta) * (1.0 + epsilon * delta);
    let dt_u = |s: f64| gamma + (1.0 + s) * (1.0 - 2.0 * gamma - s * c);
    let lap_u = |s: f64| 2.0 + 2.0 * delta - (1.0 + s) * (1.0 + 2.0 * delta + gamma + s * c);
    bisect_first_root(dt_u).min(bisect_first_root(lap_u))
}

fn bisect_first_root(f: impl Fn(f64) -> f64) -> f64 {
    let mut hi = 1.0;
    while f(hi) > 0.0 && hi < 1e6 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exponent ladder `a_q = a0^{(1+δ)^q}`, `λ_q = 1/(2 a_q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLadder {
    pub a0: f64,
    pub a: Vec<LogScale>,
    pub lambda: Vec<LogScale>,
}

impl LogLadder {
    pub fn new(a0: f64, delta: f64, depth: usize) -> Self {
        let mut a = Vec::with_capacity(depth + 1);
        let mut e = 1.0;
        for _ in 0..=depth {
            a.push(LogScale::power(e));
            e *= 1.0 + delta;
        }
        let lambda = a
            .iter()
            .map(|s| LogScale {
                ln_coeff: -std::f64::consts::LN_2,
                a0_exponent: -s.a0_exponent,
            })
            .collect();
        LogLadder { a0, a, lambda }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSequences {
    pub a0: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub depth: usize,
    pub ladder: LogLadder,
    pub nu_tilde_log: Vec<LogScale>,
    pub nu_cons_a_log: Vec<LogScale>,
    pub nu_cons_c_log: Vec<LogScale>,
    pub a: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `T_q` for `q = 0..=Q`; `T_{-1} = 1`, and `T_q = 0` past the depth.
    pub t: Vec<f64>,
    pub nu_tilde: Vec<f64>,
    pub nu_cons_a: Vec<f64>,
    pub nu_cons_c: Vec<f64>,
}

/// Builds every sequence for `q = 0..=Q`.
pub fn build_sequences(params: &CascadeParams) -> Result<ScaleSequences> {
    params.validate()?;
    let gamma = params.gamma();
    let (a0, delta, eps, depth) = (params.a0, params.delta, params.epsilon, params.depth);
    let ladder = LogLadder::new(a0, delta, depth);

    let scaled = |k: f64| -> Vec<LogScale> {
        ladder.a.iter().map(|s| LogScale::power(k * s.a0_exponent)).collect()
    };
    let nu_tilde_log = scaled(2.0 - gamma / (1.0 + delta) + 4.0 * eps);
    let nu_cons_a_log = scaled(2.0 - gamma + delta + 8.0 * eps);
    let nu_cons_c_log = scaled(2.0 + 3.0 * eps);

    // Interleaving, compared on exponents (a0 < 1 flips the order).
    for q in 0..depth {
        let above = nu_tilde_log[q].a0_exponent;
        let below = nu_tilde_log[q + 1].a0_exponent;
        let mid = nu_cons_a_log[q].a0_exponent;
        if !(mid >= above && mid < below) {
            return Err(AdlabError::Invariant(format!(
                "conservative viscosity not interleaved at q = {q}"
            )));
        }
    }

    let to_floats = |name: &'static str, v: &[LogScale]| -> Result<Vec<f64>> {
        v.iter()
            .enumerate()
            .map(|(q, s)| {
                let x = s.value(a0);
                if x.is_finite() && x >= f64::MIN_POSITIVE {
                    Ok(x)
                } else {
                    Err(AdlabError::Underflow { sequence: name, q })
                }
            })
            .collect()
    };
    let a = to_floats("a", &ladder.a)?;
    let lambda = to_floats("lambda", &ladder.lambda)?;
    let nu_tilde = to_floats("nu_tilde", &nu_tilde_log)?;
    let nu_cons_a = to_floats("nu_cons_A", &nu_cons_a_log)?;
    let nu_cons_c = to_floats("nu_cons_C", &nu_cons_c_log)?;
    let t = time_sequence(&ladder, gamma, delta, params.t0)?;

    Ok(ScaleSequences {
        a0,
        delta,
        epsilon: eps,
        gamma,
        depth,
        ladder,
        nu_tilde_log,
        nu_cons_a_log,
        nu_cons_c_log,
        a,
        lambda,
        t,
        nu_tilde,
        nu_cons_a,
        nu_cons_c,
    })
}

/// `T_q = c Σ_{j=q}^{Q} 4 a_j^{γ−γδ}` with `c` fixed by `T_0 = t0`.
fn time_sequence(ladder: &LogLadder, gamma: f64, delta: f64, t0: f64) -> Result<Vec<f64>> {
    let terms: Vec<f64> = ladder
        .a
        .iter()
        .map(|s| 4.0 * ladder.a0.powf(s.a0_exponent * (gamma - gamma * delta)))
        .collect();
    let mut tails = vec![0.0; terms.len()];
    let mut acc = 0.0;
    for j in (0..terms.len()).rev() {
        acc += terms[j];
        tails[j] = acc;
    }
    let c = t0 / tails[0];
    if c > 1.0 {
        return Err(AdlabError::Invariant(format!(
            "T_0 = {t0} would exceed the increment bound (scale factor {c})"
        )));
    }
    Ok(tails.iter().map(|s| c * s).collect())
}

impl ScaleSequences {
    /// `T_q` with `T_{-1} = 1` and `T_q = 0` beyond the depth.
    pub fn time(&self, q: isize) -> f64 {
        if q < 0 {
            1.0
        } else if (q as usize) < self.t.len() {
            self.t[q as usize]
        } else {
            0.0
        }
    }

    /// `I_q = [1 − T_q, 1 − T_{q+1}]`.
    pub fn interval_i(&self, q: isize) -> (f64, f64) {
        (1.0 - self.time(q), 1.0 - self.time(q + 1))
    }

    /// `J_q = [1 + T_{q+1}, 1 + T_q]`.
    pub fn interval_j(&self, q: isize) -> (f64, f64) {
        (1.0 + self.time(q + 1), 1.0 + self.time(q))
    }

    pub fn increment_bound(&self, q: usize) -> f64 {
        4.0 * self.a[q].powf(self.gamma - self.gamma * self.delta)
    }

    pub fn support_budget(&self, q: usize) -> f64 {
        6.0 * self.a[q].powf(self.gamma)
    }

    /// Exponent of `a_q` in `ν̃_q / a_q²`; negative means the ratio decays.
    pub fn nu_tilde_over_a2_exponent(&self) -> f64 {
        -self.gamma / (1.0 + self.delta) + 4.0 * self.epsilon
    }

    /// Level `q` with `ν ∈ (ν̃_{q+1}, ν̃_q]`, saturating at both ends.
    pub fn level_for_viscosity(&self, nu: f64) -> usize {
        for q in 0..self.depth {
            if nu > self.nu_tilde[q + 1] {
                return q;
            }
        }
        self.depth
    }

    /// Rounded profile frequency of level `q` stages, `round(λ_{q+1})`.
    pub fn stage_frequency(&self, q: usize) -> u32 {
        (self.lambda[q + 1].round() as u32).max(1)
    }

    /// Smallest admissible grid for a field whose deepest active level is `q`.
    pub fn resolution_floor(&self, q: usize) -> usize {
        8 * self.stage_frequency(q) as usize
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "q,a_q,log10_a_q,lambda_q,log10_lambda_q,T_q,log10_T_q,nu_tilde_q,log10_nu_tilde_q,\
             nu_cons_A_q,log10_nu_cons_A_q,nu_cons_C_q,log10_nu_cons_C_q\n",
        );
        let a0 = self.a0;
        for q in 0..=self.depth {
            let _ = writeln!(
                out,
                "{q},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.a[q],
                self.ladder.a[q].log10(a0),
                self.lambda[q],
                self.ladder.lambda[q].log10(a0),
                self.t[q],
                self.t[q].log10(),
                self.nu_tilde[q],
                self.nu_tilde_log[q].log10(a0),
                self.nu_cons_a[q],
                self.nu_cons_a_log[q].log10(a0),
                self.nu_cons_c[q],
                self.nu_cons_c_log[q].log10(a0),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_reduces_to_delta_over_eight_when_beta_vanishes() {
        assert_eq!(compute_gamma(0.0, 1e-4, 0.1).unwrap(), 0.0125);
    }

    #[test]
    fn gamma_tends_to_zero_with_delta() {
        let g = compute_gamma(0.0, 0.1, 1e-12).unwrap();
        assert!(g < 1e-12);
    }

    #[test]
    fn gamma_rejects_out_of_range() {
        assert!(compute_gamma(1.0 / 3.0, 1e-4, 0.1).is_err());
        assert!(compute_gamma(0.1, 0.0, 0.1).is_err());
        assert!(compute_gamma(0.1, 1e-4, 0.26).is_err());
        assert!(compute_gamma(-0.1, 1e-4, 0.1).is_err());
    }

    #[test]
    fn boundary_alpha_beta_fails_with_zero_slack() {
        let r = check_conditions(1.0 / 3.0, 1.0 / 3.0, 1e-6, 0.1, 0.1);
        let c = r.get("alpha_plus_2beta").unwrap();
        assert!(!c.pass);
        assert!(c.slack.abs() < 1e-15);
        assert!(!r.pass);
    }

    #[test]
    fn eps_delta_equality_passes() {
        let delta: f64 = 0.1;
        let eps = delta.powi(3) / 50.0;
        let r = check_conditions(0.1, 0.1, eps, delta, 0.1);
        let c = r.get("eps_delta").unwrap();
        assert!(c.pass);
        assert_eq!(c.slack, 0.0);
    }

    #[test]
    fn ladder_example_powers_of_two() {
        let l = LogLadder::new(0.25, 1.0, 2);
        let a: Vec<f64> = l.a.iter().map(|s| s.value(0.25)).collect();
        let lam: Vec<f64> = l.lambda.iter().map(|s| s.value(0.25)).collect();
        assert_eq!(a, vec![0.25, 0.0625, 0.00390625]);
        assert_eq!(lam, vec![2.0, 8.0, 128.0]);
    }

    #[test]
    fn desk_scale_sequences_are_consistent() {
        let p = CascadeParams::desk_scale();
        let s = build_sequences(&p).unwrap();
        assert_eq!(s.a.len(), p.depth + 1);
        for q in 0..p.depth {
            assert!(s.t[q] > s.t[q + 1]);
            assert!(s.t[q] - s.t[q + 1] <= s.increment_bound(q));
            assert!(s.nu_tilde[q + 1] < s.nu_cons_a[q] && s.nu_cons_a[q] <= s.nu_tilde[q]);
            assert!(s.nu_tilde[q + 1] < s.nu_cons_c[q] && s.nu_cons_c[q] <= s.nu_tilde[q]);
        }
        assert!((s.t[0] - p.t0).abs() < 1e-15);
        assert!(s.nu_tilde_over_a2_exponent() < 0.0);
        assert_eq!(s.level_for_viscosity(s.nu_tilde[2]), 2);
        assert_eq!(s.level_for_viscosity(s.nu_cons_c[1]), 1);
        assert_eq!(s.level_for_viscosity(1.0), 0);
        assert_eq!(s.level_for_viscosity(0.0), p.depth);
    }

    #[test]
    fn paper_faithful_a0_underflows() {
        let p = CascadeParams {
            alpha: 0.1,
            beta: 0.0,
            epsilon: 1e-5,
            delta: 0.1,
            a0: 1e-300,
            depth: 3,
            t0: 0.5,
            sigma: None,
            truncated_regime: true,
        };
        assert!(matches!(build_sequences(&p), Err(AdlabError::Underflow { .. })));
    }

    #[test]
    fn sigma_lies_inside_both_constraints() {
        let p = CascadeParams::desk_scale();
        let (g, d, e) = (p.gamma(), p.delta, p.epsilon);
        let s = p.sigma();
        let c = (1.0 + d) * (1.0 + e * d);
        assert!(s > 0.0);
        assert!(g + (1.0 + s) * (1.0 - 2.0 * g - s * c) > 0.0);
        assert!(2.0 + 2.0 * d - (1.0 + s) * (1.0 + 2.0 * d + g + s * c) > 0.0);
        let hi = sigma_upper_bound(g, d, e);
        assert!((2.0 * s - hi).abs() < 1e-12);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = build_sequences(&CascadeParams::desk_scale()).unwrap();
        let csv = s.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), s.depth + 2);
        assert!(lines[0].starts_with("q,a_q,log10_a_q,lambda_q"));
        assert_eq!(lines[1].split(',').count(), 13);
    }

    proptest! {
        #[test]
        fn ladder_identities(a0 in 1e-3f64..0.9, delta in 1e-3f64..0.25, depth in 1usize..8) {
            let l = LogLadder::new(a0, delta, depth);
            for q in 0..depth {
                let e0 = l.a[q].a0_exponent;
                let e1 = l.a[q + 1].a0_exponent;
                prop_assert_eq!(e1, e0 * (1.0 + delta));
            }
            for (a, lam) in l.a.iter().zip(&l.lambda) {
                let prod = a.mul(lam);
                prop_assert_eq!(prod.a0_exponent, 0.0);
                prop_assert_eq!(prod.ln_coeff.exp(), 0.5);
            }
        }

        #[test]
        fn eps_delta_monotone_in_epsilon(eps in 1e-9f64..1e-3, shrink in 0.0f64..1.0, delta in 0.01f64..0.25) {
            let before = check_conditions(0.1, 0.1, eps, delta, 0.1);
            let after = check_conditions(0.1, 0.1, eps * shrink.max(1e-9), delta, 0.1);
            if before.get("eps_delta").unwrap().pass {
                prop_assert!(after.get("eps_delta").unwrap().pass);
            }
        }

        #[test]
        fn regularity_conditions_monotone_in_delta(
            delta in 0.01f64..0.25, shrink in 0.01f64..1.0,
            alpha in 0.0f64..0.9, beta in 0.0f64..0.33,
        ) {
            let before = check_conditions(alpha, beta, 1e-6, delta, 0.1);
            let after = check_conditions(alpha, beta, 1e-6, delta * shrink, 0.1);
            for name in ["alpha_beta_eps_kappa", "gamma_eps"] {
                if before.get(name).unwrap().pass {
                    prop_assert!(after.get(name).unwrap().pass);
                }
            }
        }
    }
}
