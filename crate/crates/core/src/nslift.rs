//! The 2+½-dimensional lift.
//!
//! `v_ν = (u_q, θ̃_ν)` with `u_q` the truncated shear and `θ̃_ν` the scalar
//! transported by it, forced by `F_ν = (∂_t u_q − νΔu_q, 0)` with zero
//! pressure. Nothing depends on `x₃`, so all storage stays two-dimensional.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AdlabError, Result};
use crate::quadrature::GaussLegendre;
use crate::scalarsolver::{initial_datum, solve, DtPolicy, ScalarField, SolveOptions, Trajectory};
use crate::shearflow::{envelope, Direction, ShearStage, TruncatedField};
use crate::sum::{max_of, pairwise_sum};

/// Profile coefficient of the force at one time: `F = coefficient · sin(2π f y)`
/// along the stage direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSlice<'a> {
    pub stage: Option<&'a ShearStage>,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedForce {
    pub field: TruncatedField,
    pub nu: f64,
}

pub fn force(field: &TruncatedField, nu: f64) -> LiftedForce {
    LiftedForce {
        field: field.clone(),
        nu,
    }
}

impl LiftedForce {
    pub fn breakpoints(&self) -> Vec<f64> {
        self.field.stages().flat_map(|s| [s.start, s.end()]).collect()
    }

    /// `A (χ'(t) + ν (2π f)² χ(t))`.
    pub fn slice(&self, t: f64) -> ForceSlice<'_> {
        match self.field.active_stage(t) {
            None => ForceSlice {
                stage: None,
                coefficient: 0.0,
            },
            Some(s) => {
                let chi = s.envelope_jet(t);
                let k = s.wavenumber();
                ForceSlice {
                    stage: Some(s),
                    coefficient: s.amplitude * (chi.derivative(1) + self.nu * k * k * chi.value()),
                }
            }
        }
    }

    pub fn at(&self, t: f64, x: [f64; 2]) -> [f64; 3] {
        let sl = self.slice(t);
        match sl.stage {
            None => [0.0; 3],
            Some(s) => match s.direction {
                Direction::Horizontal => [sl.coefficient * s.profile(x[1]), 0.0, 0.0],
                Direction::Vertical => [0.0, sl.coefficient * s.profile(x[0]), 0.0],
            },
        }
    }

    /// First two components on the grid.
    pub fn sample(&self, t: f64, n: usize) -> Result<[ScalarField; 2]> {
        Ok([
            ScalarField::from_fn(n, |x1, x2| self.at(t, [x1, x2])[0])?,
            ScalarField::from_fn(n, |x1, x2| self.at(t, [x1, x2])[1])?,
        ])
    }

    /// `∫ F · (u_q, θ) dx = A² (χ'χ + ν (2πf)² χ²) / 2` at time `t`.
    pub fn power(&self, t: f64) -> f64 {
        match self.field.active_stage(t) {
            None => 0.0,
            Some(s) => {
                let chi = s.envelope_jet(t);
                let k = s.wavenumber();
                0.5 * s.amplitude * s.amplitude * chi.value() * (chi.derivative(1) + self.nu * k * k * chi.value())
            }
        }
    }

    /// `2 ∫₀ᵗ ∫ F · v` at each requested time.
    pub fn work(&self, times: &[f64]) -> Vec<f64> {
        let gl = gauss();
        let mut cuts: Vec<f64> = self.breakpoints();
        let mut out = Vec::with_capacity(times.len());
        let mut acc = 0.0;
        let mut prev = 0.0;
        for &t in times {
            cuts.retain(|&c| c > prev);
            let mut a = prev;
            for &c in cuts.iter().filter(|&&c| c < t) {
                acc += 2.0 * gl.integrate_composite(a, c, 8, |s| self.power(s));
                a = c;
            }
            acc += 2.0 * gl.integrate_composite(a, t, 8, |s| self.power(s));
            prev = t;
            out.push(acc);
        }
        out
    }
}

fn gauss() -> &'static GaussLegendre {
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(24))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSolution {
    pub u_part: TruncatedField,
    pub theta_part: Trajectory,
    pub nu: f64,
    /// `q` with `ν ∈ (ν̃_{q+1}, ν̃_q]`.
    pub level: usize,
}

pub fn lift(field: &TruncatedField, trajectory: Trajectory, nu: f64) -> Result<LiftedSolution> {
    if trajectory.flow != field.label() {
        return Err(AdlabError::Provenance(format!(
            "trajectory flow `{}` differs from `{}`",
            trajectory.flow,
            field.label()
        )));
    }
    if trajectory.nu != nu {
        return Err(AdlabError::Provenance(format!(
            "trajectory viscosity {} differs from {nu}",
            trajectory.nu
        )));
    }
    let level = field.schedule.sequences.level_for_viscosity(nu);
    Ok(LiftedSolution {
        u_part: field.clone(),
        theta_part: trajectory,
        nu,
        level,
    })
}

/// Squared `L²` norm of the sampled shear `u_q(t)`; the grid mean of `sin²`
/// is exactly one half for resolved frequencies.
pub fn velocity_energy(field: &TruncatedField, t: f64) -> f64 {
    field.active_stage(t).map_or(0.0, |s| {
        let w = s.amplitude * s.envelope(t);
        0.5 * w * w
    })
}

pub fn velocity_sup(field: &TruncatedField, t: f64) -> f64 {
    field
        .active_stage(t)
        .map_or(0.0, |s| (s.amplitude * s.envelope(t)).abs())
}

impl LiftedSolution {
    /// `v_ν(0) = (u_q(0), θ(0))`.
    pub fn initial_velocity(&self) -> [f64; 2] {
        self.u_part.velocity_at(0.0, [0.0, 0.0])
    }

    /// Componentwise sup over the checkpoints.
    pub fn sup_norm(&self) -> f64 {
        self.theta_part
            .diagnostics
            .iter()
            .map(|d| d.linf.max(velocity_sup(&self.u_part, d.t)))
            .fold(self.theta_part.initial.linf, f64::max)
    }

    /// `‖v_in‖² + 2∫₀ᵗ∫F·v − ‖v(t)‖²` at every checkpoint, divided by `‖v_in‖²`.
    pub fn admissibility_margins(&self) -> Vec<f64> {
        let f = force(&self.u_part, self.nu);
        let times = self.theta_part.times();
        let work = f.work(&times);
        let e0 = self.theta_part.initial.l2.powi(2);
        self.theta_part
            .diagnostics
            .iter()
            .zip(work)
            .map(|(d, w)| (e0 + w - d.l2 * d.l2 - velocity_energy(&self.u_part, d.t)) / e0)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dissipation3d {
    pub total: f64,
    pub velocity_part: f64,
    pub theta_part: f64,
}

/// `∫₀¹ ψ²` for the normalized envelope.
fn envelope_square_integral(a: f64, b: f64) -> f64 {
    gauss().integrate_composite(a, b, 32, |s| envelope(s).powi(2))
}

/// `ν ∫₀ᵀ ∫ |∇u_q|²` from the closed-form profile.
pub fn velocity_dissipation(field: &TruncatedField, nu: f64, t_end: f64) -> f64 {
    let parts: Vec<f64> = field
        .stages()
        .filter(|s| s.start < t_end)
        .map(|s| {
            let s1 = ((t_end - s.start) / s.width).min(1.0);
            let k = s.wavenumber();
            nu * 0.5 * s.amplitude * s.amplitude * k * k * s.width * envelope_square_integral(0.0, s1)
        })
        .collect();
    pairwise_sum(&parts)
}

pub fn dissipation_3d(lifted: &LiftedSolution) -> Dissipation3d {
    let t_end = lifted.theta_part.diagnostics.last().map_or(0.0, |d| d.t);
    let velocity_part = velocity_dissipation(&lifted.u_part, lifted.nu, t_end);
    let theta_part = 0.5 * lifted.theta_part.total_dissipation();
    Dissipation3d {
        total: velocity_part + theta_part,
        velocity_part,
        theta_part,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPlan {
    /// Fixed solver step; also the centered-difference half width.
    pub dt: f64,
    pub sample_times: Vec<f64>,
    /// Grid points `(i, j)` at which the scalar residual is evaluated.
    pub points: Vec<(usize, usize)>,
}

impl ResidualPlan {
    /// `samples` random space-time points with `t` inside stage windows
    /// active for `field`.
    pub fn random(field: &TruncatedField, n: usize, samples: usize, dt: f64, seed: u64) -> Result<Self> {
        let stages: Vec<&ShearStage> = field.stages().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut times = Vec::with_capacity(samples);
        for _ in 0..samples {
            let t = if stages.is_empty() {
                rng.gen_range(2.0 * dt..1.0)
            } else {
                let s = stages[rng.gen_range(0..stages.len())];
                s.start + s.width * rng.gen_range(0.2..0.8)
            };
            times.push(t);
        }
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup_by(|a, b| (*a - *b).abs() < 4.0 * dt);
        let points = (0..samples).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        Ok(ResidualPlan {
            dt,
            sample_times: times,
            points,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub component_residuals: [f64; 3],
    pub dt: f64,
    pub n: usize,
    pub nu: f64,
}

/// Max pointwise residual of `∂_t v + v·∇v + ∇p − νΔv − F` for the lift of
/// `field` at viscosity `nu`. The scalar is solved with the fixed step
/// `plan.dt` and differenced over `±dt` in time.
pub fn ns_residual(field: &TruncatedField, nu: f64, n: usize, plan: &ResidualPlan) -> Result<ResidualReport> {
    let f = force(field, nu);
    let h = plan.dt;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.sample_times.len() as u64);

    let mut uv = Vec::new();
    for &t in &plan.sample_times {
        for _ in 0..plan.points.len().max(1) {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            uv.push(velocity_residual(field, &f, nu, t, x));
        }
    }
    let r1 = max_of(&uv.iter().map(|r| r[0].abs()).collect::<Vec<_>>());
    let r2 = max_of(&uv.iter().map(|r| r[1].abs()).collect::<Vec<_>>());

    let mut cps = Vec::with_capacity(3 * plan.sample_times.len());
    for &t in &plan.sample_times {
        cps.extend([t - h, t, t + h]);
    }
    if cps.first().is_some_and(|&t| t <= 0.0) {
        return Err(AdlabError::Invalid("sample time closer to 0 than dt".into()));
    }
    let opts = SolveOptions::new(cps).with_policy(DtPolicy::Fixed(h)).storing_fields();
    let traj = solve(field, nu, &initial_datum(n)?, &opts)?;
    let r3: Vec<f64> = plan
        .sample_times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| -> Result<f64> {
            let (before, mid, after) = (&traj.fields[3 * i], &traj.fields[3 * i + 1], &traj.fields[3 * i + 2]);
            let (gx, gy) = mid.gradient()?;
            let lap = mid.laplacian()?;
            let mut m = 0.0f64;
            for &(a, b) in &plan.points {
                let idx = b * n + a;
                let u = field.velocity_at(t, [a as f64 / n as f64, b as f64 / n as f64]);
                let dtheta = (after.values()[idx] - before.values()[idx]) / (2.0 * h);
                let r = dtheta + u[0] * gx.values()[idx] + u[1] * gy.values()[idx] - nu * lap.values()[idx];
                m = m.max(r.abs());
            }
            Ok(m)
        })
        .collect::<Result<Vec<f64>>>()?;
    let r3 = if r3.is_empty() { 0.0 } else { max_of(&r3) };
    Ok(ResidualReport {
        component_residuals: [r1, r2, r3],
        dt: h,
        n,
        nu,
    })
}

/// First two components of `∂_t u + u·∇u − νΔu − F`, all from the closed
/// form of the active stage.
fn velocity_residual(field: &TruncatedField, f: &LiftedForce, nu: f64, t: f64, x: [f64; 2]) -> [f64; 2] {
    let Some(s) = field.active_stage(t) else {
        let force = f.at(t, x);
        return [-force[0], -force[1]];
    };
    let chi = s.envelope_jet(t);
    let k = s.wavenumber();
    let (y, along) = match s.direction {
        Direction::Horizontal => (x[1], 0),
        Direction::Vertical => (x[0], 1),
    };
    let sin = (k * y).sin();
    let w = s.amplitude * chi.value() * sin;
    let w_t = s.amplitude * chi.derivative(1) * sin;
    let w_y = s.amplitude * chi.value() * k * (k * y).cos();
    let w_yy = -s.amplitude * chi.value() * k * k * sin;
    // (u·∇)W for u = W e_along: W does not vary along the flow and the
    // transverse velocity is zero.
    let (dw_along, u_across) = (0.0, 0.0);
    let transport = w * dw_along + u_across * w_y;
    let force = f.at(t, x);
    let mut r = [0.0; 2];
    r[along] = w_t + transport - nu * w_yy - force[along];
    r[1 - along] = -force[1 - along];
    r
}

/// `(1 − e^{−8π²νT}) / 4`: dissipation of `sin(2πx₂)` under pure heat flow.
pub fn single_mode_dissipation(nu: f64, t_end: f64) -> f64 {
    -(-8.0 * PI * PI * nu * t_end).exp_m1() / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{build_sequences, CascadeParams};
    use crate::shearflow::{build_schedule, truncate, Profile};
    use std::sync::Arc;

    fn field(q: usize) -> TruncatedField {
        let seq = build_sequences(&CascadeParams::desk_scale()).unwrap();
        let s = Arc::new(build_schedule(&seq, Profile::Sine).unwrap());
        truncate(&s, q).unwrap()
    }

    #[test]
    fn force_vanishes_off_support() {
        let u = field(2);
        let f = force(&u, 1e-3);
        assert_eq!(f.at(0.01, [0.3, 0.4]), [0.0; 3]);
        assert_eq!(f.at(1.0, [0.3, 0.4]), [0.0; 3]);
    }

    #[test]
    fn force_matches_finite_differences() {
        let u = field(3);
        let nu = 1e-3;
        let f = force(&u, nu);
        let s = u.stages().nth(2).unwrap();
        let t = s.start + 0.2 * s.width;
        let x = [0.31, 0.17];
        let ht = 1e-5;
        let hx = 1e-4;
        let comp = if s.direction == Direction::Horizontal { 0 } else { 1 };
        let val = |t: f64, x: [f64; 2]| u.velocity_at(t, x)[comp];
        let dt = (val(t + ht, x) - val(t - ht, x)) / (2.0 * ht);
        let lap = |x: [f64; 2]| {
            let mut acc = -4.0 * val(t, x);
            for d in [[hx, 0.0], [-hx, 0.0], [0.0, hx], [0.0, -hx]] {
                acc += val(t, [x[0] + d[0], x[1] + d[1]]);
            }
            acc / (hx * hx)
        };
        let fd = dt - nu * lap(x);
        let exact = f.at(t, x)[comp];
        assert!((fd - exact).abs() < 1e-4 * (1.0 + exact.abs()), "{fd} {exact}");
        assert_eq!(f.at(t, x)[2], 0.0);
    }

    #[test]
    fn inviscid_force_is_time_derivative() {
        let u = field(3);
        let f = force(&u, 0.0);
        let s = u.stages().next().unwrap();
        let t = s.start + 0.1 * s.width;
        let sl = f.slice(t);
        assert_eq!(sl.coefficient, s.amplitude * s.envelope_jet(t).derivative(1));
    }

    #[test]
    fn lift_rejects_mismatched_provenance() {
        let u2 = field(2);
        let u3 = field(3);
        let traj = solve(&u2, 0.0, &initial_datum(256).unwrap(), &SolveOptions::new(vec![0.1])).unwrap();
        assert!(lift(&u3, traj.clone(), 0.0).is_err());
        assert!(lift(&u2, traj.clone(), 1e-3).is_err());
        assert!(lift(&u2, traj, 0.0).is_ok());
    }

    #[test]
    fn zero_schedule_dissipation_closed_form() {
        let u = field(0);
        let nu = 1e-2;
        let traj = solve(&u, nu, &initial_datum(16).unwrap(), &SolveOptions::new(vec![0.5, 1.0])).unwrap();
        let lifted = lift(&u, traj, nu).unwrap();
        let d = dissipation_3d(&lifted);
        assert_eq!(d.velocity_part, 0.0);
        assert!((d.total - single_mode_dissipation(nu, 1.0)).abs() < 1e-14);
    }
}
