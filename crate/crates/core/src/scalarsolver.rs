//! Advection–diffusion `∂_t θ + u·∇θ = νΔθ` on the two-torus.
//!
//! The velocity is a shear at every instant, so advection over any interval
//! translates each grid line by a known displacement. That translation is a
//! per-line Fourier phase shift: unitary, exact for band-limited data and
//! free of numerical diffusion. Diffusion is the exact heat multiplier.
//! Both sub-flows are combined by Strang splitting.
//!
//! Inside a segment the state lives in a mixed representation: Fourier in
//! the coordinate along the shear lines, physical across them, stored with
//! the Fourier index as the row. Advection is then a pointwise phase and
//! diffusion a row transform, so no transform along the lines is repeated
//! per step.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::ScaleSequences;
use crate::error::{AdlabError, Result};
use crate::shearflow::{Direction, ShearSchedule, ShearStage, TruncatedField};
use crate::spectral::{angular_wavenumbers, check_grid, transpose, transpose_real, Spectral};
use crate::sum::{max_of, pairwise_sum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    n: usize,
    values: Vec<f64>,
    mean: f64,
}

impl ScalarField {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_grid(n)?;
        if values.len() != n * n {
            return Err(AdlabError::Invalid(format!(
                "{} values for an {n} x {n} grid",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(AdlabError::NonFinite(*v));
        }
        let mean = pairwise_sum(&values) / (n * n) as f64;
        Ok(ScalarField { n, values, mean })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    /// Samples `f(x₁, x₂)` at the grid points.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        check_grid(n)?;
        let h = 1.0 / n as f64;
        let values = (0..n * n)
            .into_par_iter()
            .map(|idx| f((idx % n) as f64 * h, (idx / n) as f64 * h))
            .collect();
        Self::new(n, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `∫ θ² dx` by the grid rule.
    pub fn l2_sq(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        pairwise_sum(&sq) / (self.n * self.n) as f64
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn l1(&self) -> f64 {
        let abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        pairwise_sum(&abs) / (self.n * self.n) as f64
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        ScalarField {
            n: self.n,
            values: self.values.iter().map(|v| c * v).collect(),
            mean: c * self.mean,
        }
    }

    pub fn transposed(&self) -> ScalarField {
        ScalarField {
            n: self.n,
            values: transpose_real(&self.values, self.n),
            mean: self.mean,
        }
    }

    /// Injection onto a coarser grid of size `m` dividing `n`.
    pub fn restrict(&self, m: usize) -> Result<ScalarField> {
        check_grid(m)?;
        if m > self.n || !self.n.is_multiple_of(m) {
            return Err(AdlabError::GridMismatch(self.n, m));
        }
        let r = self.n / m;
        let values = (0..m * m)
            .map(|idx| self.values[(idx / m) * r * self.n + (idx % m) * r])
            .collect();
        ScalarField::new(m, values)
    }

    /// Spectral gradient `(∂₁θ, ∂₂θ)`; the Nyquist mode is dropped.
    pub fn gradient(&self) -> Result<(ScalarField, ScalarField)> {
        let n = self.n;
        let sp = Spectral::for_size(n)?;
        let spec = sp.fft2(&self.values);
        let kk = angular_wavenumbers(n);
        let deriv = |axis: usize| {
            let d: Vec<Complex64> = spec
                .par_iter()
                .enumerate()
                .map(|(idx, c)| {
                    let k = if axis == 0 { idx / n } else { idx % n };
                    if k == n / 2 {
                        Complex64::default()
                    } else {
                        c * Complex64::new(0.0, kk[k])
                    }
                })
                .collect();
            sp.ifft2_real(&d)
        };
        Ok((ScalarField::new(n, deriv(0))?, ScalarField::new(n, deriv(1))?))
    }

    /// `∫ |∇θ|² dx` from the spectrum, Nyquist at `|κ| = n/2`.
    pub fn grad_l2_sq(&self) -> Result<f64> {
        let n = self.n;
        let sp = Spectral::for_size(n)?;
        Ok(grad_l2_sq_of_spectrum(&sp.fft2(&self.values), n))
    }

    pub fn laplacian(&self) -> Result<ScalarField> {
        let n = self.n;
        let sp = Spectral::for_size(n)?;
        let kk = angular_wavenumbers(n);
        let mut spec = sp.fft2(&self.values);
        spec.par_iter_mut().enumerate().for_each(|(idx, c)| {
            *c *= -(kk[idx / n].powi(2) + kk[idx % n].powi(2));
        });
        ScalarField::new(n, sp.ifft2_real(&spec))
    }
}

fn grad_l2_sq_of_spectrum(spec: &[Complex64], n: usize) -> f64 {
    let kk = angular_wavenumbers(n);
    let rows: Vec<f64> = spec
        .par_chunks(n)
        .enumerate()
        .map(|(k1, row)| {
            let terms: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(k2, c)| (kk[k1].powi(2) + kk[k2].powi(2)) * c.norm_sqr())
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    pairwise_sum(&rows) / ((n * n) as f64).powi(2)
}

/// `θ_in(x) = sin(2π x₂)`: smooth, mean zero, unit sup norm.
pub fn initial_datum(n: usize) -> Result<ScalarField> {
    ScalarField::from_fn(n, |_, x2| (2.0 * PI * x2).sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    /// Inside a stage `dt = min(window_fraction · width, diffusion_factor / (4π²ν f²))`.
    Adaptive {
        window_fraction: f64,
        diffusion_factor: f64,
    },
    Fixed(f64),
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy::Adaptive {
            window_fraction: 1.0 / 64.0,
            diffusion_factor: 0.1,
        }
    }
}

/// What drives the scalar between two consecutive breakpoints.
#[derive(Debug, Clone, Copy)]
pub enum Drive<'a> {
    Still,
    Shear(&'a ShearStage),
    /// Time-independent source term.
    Forcing(&'a ScalarField),
}

pub trait TransportFlow: Sync {
    /// Times where the drive may change.
    fn breakpoints(&self) -> Vec<f64>;
    /// The drive on `(t0, t1)`, an interval free of breakpoints.
    fn drive(&self, t0: f64, t1: f64) -> Drive<'_>;
    fn resolution_floor(&self) -> usize;
    fn label(&self) -> String;
}

impl TransportFlow for TruncatedField {
    fn breakpoints(&self) -> Vec<f64> {
        self.stages().flat_map(|s| [s.start, s.end()]).collect()
    }

    fn drive(&self, t0: f64, t1: f64) -> Drive<'_> {
        match self.active_stage(0.5 * (t0 + t1)) {
            Some(s) => Drive::Shear(s),
            None => Drive::Still,
        }
    }

    fn resolution_floor(&self) -> usize {
        TruncatedField::resolution_floor(self)
    }

    fn label(&self) -> String {
        TruncatedField::label(self)
    }
}

/// Zero velocity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Still;

impl TransportFlow for Still {
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn drive(&self, _: f64, _: f64) -> Drive<'_> {
        Drive::Still
    }

    fn resolution_floor(&self) -> usize {
        8
    }

    fn label(&self) -> String {
        "still".into()
    }
}

#[derive(Debug, Clone)]
pub struct SteadyForcing {
    pub field: ScalarField,
}

impl TransportFlow for SteadyForcing {
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn drive(&self, _: f64, _: f64) -> Drive<'_> {
        Drive::Forcing(&self.field)
    }

    fn resolution_floor(&self) -> usize {
        self.field.n()
    }

    fn label(&self) -> String {
        format!("forcing:n={}", self.field.n())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub l2: f64,
    pub linf: f64,
    pub grad_l2: f64,
    pub grad_linf: f64,
    pub mean: f64,
    pub cumulative_dissipation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: usize,
    pub nu: f64,
    pub flow: String,
    pub initial: Diagnostics,
    pub diagnostics: Vec<Diagnostics>,
    /// `2ν∫‖∇θ‖²` over each interval ending at a checkpoint.
    pub diss_increments: Vec<f64>,
    /// Stored only when requested.
    pub fields: Vec<ScalarField>,
    pub steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.t).collect()
    }

    pub fn total_dissipation(&self) -> f64 {
        self.diagnostics.last().map_or(0.0, |d| d.cumulative_dissipation)
    }

    /// `max_t |‖θ(t)‖² + 2ν∫₀ᵗ‖∇θ‖² − ‖θ_in‖²| / ‖θ_in‖²`.
    pub fn energy_balance_residual(&self) -> f64 {
        let e0 = self.initial.l2 * self.initial.l2;
        let r: Vec<f64> = self
            .diagnostics
            .iter()
            .map(|d| (d.l2 * d.l2 + d.cumulative_dissipation - e0).abs() / e0.max(f64::MIN_POSITIVE))
            .collect();
        if r.is_empty() {
            0.0
        } else {
            max_of(&r)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,L2,Linf,grad_L2,cumulative_dissipation\n");
        for d in &self.diagnostics {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                d.t, d.l2, d.linf, d.grad_l2, d.cumulative_dissipation
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Strictly increasing, nonnegative; the solve ends at the last one.
    pub checkpoints: Vec<f64>,
    pub policy: DtPolicy,
    pub store_fields: bool,
}

impl SolveOptions {
    pub fn new(checkpoints: Vec<f64>) -> Self {
        SolveOptions {
            checkpoints,
            policy: DtPolicy::default(),
            store_fields: false,
        }
    }

    pub fn with_policy(mut self, policy: DtPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn storing_fields(mut self) -> Self {
        self.store_fields = true;
        self
    }
}

pub fn diagnose(field: &ScalarField, t: f64, cumulative: f64) -> Result<Diagnostics> {
    let (gx, gy) = field.gradient()?;
    let grad_linf = gx
        .values()
        .iter()
        .zip(gy.values())
        .fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)));
    Ok(Diagnostics {
        t,
        l2: field.l2(),
        linf: field.linf(),
        grad_l2: field.grad_l2_sq()?.sqrt(),
        grad_linf,
        mean: field.mean(),
        cumulative_dissipation: cumulative,
    })
}

pub fn solve<F: TransportFlow + ?Sized>(
    flow: &F,
    nu: f64,
    theta_in: &ScalarField,
    opts: &SolveOptions,
) -> Result<Trajectory> {
    solve_observed(flow, nu, theta_in, opts, |_, _| Ok(()))
}

/// Solves from `θ_in`, calling `observer` with the diagnostics and field at
/// every checkpoint.
pub fn solve_observed<F, O>(
    flow: &F,
    nu: f64,
    theta_in: &ScalarField,
    opts: &SolveOptions,
    mut observer: O,
) -> Result<Trajectory>
where
    F: TransportFlow + ?Sized,
    O: FnMut(&Diagnostics, &ScalarField) -> Result<()>,
{
    let n = theta_in.n();
    let floor = flow.resolution_floor();
    if n < floor {
        return Err(AdlabError::Resolution { n, floor });
    }
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(AdlabError::OutOfRange {
            name: "nu",
            value: nu,
            range: "[0, inf)",
        });
    }
    validate_checkpoints(&opts.checkpoints)?;
    if let DtPolicy::Fixed(dt) = opts.policy {
        if !(dt > 0.0) {
            return Err(AdlabError::OutOfRange {
                name: "dt",
                value: dt,
                range: "(0, inf)",
            });
        }
    }
    let t_end = opts.checkpoints.last().copied().unwrap_or(0.0);

    let mut cuts: Vec<f64> = flow
        .breakpoints()
        .into_iter()
        .filter(|&t| t > 0.0 && t < t_end)
        .chain(opts.checkpoints.iter().copied())
        .chain([0.0])
        .collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();

    let mut kernel = Kernel::new(n)?;
    let mut field = theta_in.clone();
    let initial = diagnose(&field, 0.0, 0.0)?;
    let mut traj = Trajectory {
        n,
        nu,
        flow: flow.label(),
        initial,
        diagnostics: Vec::with_capacity(opts.checkpoints.len()),
        diss_increments: Vec::with_capacity(opts.checkpoints.len()),
        fields: Vec::new(),
        steps: 0,
    };
    let mut cumulative = 0.0;
    let mut pending = 0.0;
    let mut next_cp = 0;

    let mut record = |field: &ScalarField, t: f64, cumulative: f64, pending: f64, traj: &mut Trajectory| -> Result<()> {
        let d = diagnose(field, t, cumulative)?;
        if !(d.l2.is_finite() && d.grad_l2.is_finite()) {
            return Err(AdlabError::NonFinite(t));
        }
        observer(&d, field)?;
        traj.diagnostics.push(d);
        traj.diss_increments.push(pending);
        if opts.store_fields {
            traj.fields.push(field.clone());
        }
        Ok(())
    };

    if opts.checkpoints.first() == Some(&0.0) {
        record(&field, 0.0, 0.0, 0.0, &mut traj)?;
        next_cp = 1;
    }
    for w in cuts.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let drive = flow.drive(ta, tb);
        let (next, loss, steps) = kernel.segment(field, drive, nu, ta, tb, opts.policy)?;
        field = next;
        cumulative += loss;
        pending += loss;
        traj.steps += steps;
        if next_cp < opts.checkpoints.len() && opts.checkpoints[next_cp] == tb {
            record(&field, tb, cumulative, pending, &mut traj)?;
            pending = 0.0;
            next_cp += 1;
        }
    }
    Ok(traj)
}

fn validate_checkpoints(cps: &[f64]) -> Result<()> {
    if cps.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(AdlabError::Invalid("checkpoints must be finite and nonnegative".into()));
    }
    if cps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AdlabError::Invalid("checkpoints must be strictly increasing".into()));
    }
    Ok(())
}

/// Convenience wrapper starting from [`initial_datum`].
pub fn solve_from_datum<F: TransportFlow + ?Sized>(flow: &F, nu: f64, n: usize, opts: &SolveOptions) -> Result<Trajectory> {
    solve(flow, nu, &initial_datum(n)?, opts)
}

const POW_BLOCK: usize = 32;

struct Kernel {
    n: usize,
    sp: Arc<Spectral>,
    kk: Vec<f64>,
    mixed: Vec<Complex64>,
    work: Vec<Complex64>,
    row_loss: Vec<f64>,
    lo: Vec<Complex64>,
    hi: Vec<Complex64>,
}

impl Kernel {
    fn new(n: usize) -> Result<Self> {
        let hi_len = n / 2 / POW_BLOCK + 1;
        Ok(Kernel {
            n,
            sp: Spectral::for_size(n)?,
            kk: angular_wavenumbers(n),
            mixed: vec![Complex64::default(); n * n],
            work: vec![Complex64::default(); n * n],
            row_loss: vec![0.0; n],
            lo: vec![Complex64::default(); POW_BLOCK * n],
            hi: vec![Complex64::default(); hi_len * n],
        })
    }

    /// Line layout `[r][s]` → mixed layout `[k][r]`.
    fn to_mixed(&mut self, lines: &[f64]) {
        for (w, &v) in self.work.iter_mut().zip(lines) {
            *w = Complex64::new(v, 0.0);
        }
        self.sp.rows_forward(&mut self.work);
        transpose(&self.work, &mut self.mixed, self.n);
    }

    fn from_mixed(&mut self) -> Vec<f64> {
        transpose(&self.mixed, &mut self.work, self.n);
        self.sp.rows_inverse(&mut self.work);
        let s = 1.0 / self.n as f64;
        self.work.iter().map(|c| c.re * s).collect()
    }

    /// Translates line `r` by `coeff · profile[r]` along the line.
    fn shift(&mut self, coeff: f64, profile: &[f64]) {
        let n = self.n;
        let hi_len = self.hi.len() / n;
        for r in 0..n {
            let theta = -2.0 * PI * coeff * profile[r];
            let base = Complex64::from_polar(1.0, theta);
            let mut z = Complex64::new(1.0, 0.0);
            for b in 0..POW_BLOCK {
                self.lo[b * n + r] = z;
                z *= base;
            }
            for h in 0..hi_len {
                self.hi[h * n + r] = Complex64::from_polar(1.0, theta * (h * POW_BLOCK) as f64);
            }
        }
        let (lo, hi) = (&self.lo, &self.hi);
        self.mixed.par_chunks_mut(n).enumerate().for_each(|(k, row)| {
            if k == 0 || k == n / 2 {
                return;
            }
            let (m, conj) = if k < n / 2 { (k, false) } else { (n - k, true) };
            let l = &lo[(m % POW_BLOCK) * n..(m % POW_BLOCK + 1) * n];
            let h = &hi[(m / POW_BLOCK) * n..(m / POW_BLOCK + 1) * n];
            for r in 0..n {
                let p = l[r] * h[r];
                row[r] *= if conj { p.conj() } else { p };
            }
        });
    }

    fn add_forcing(&mut self, forcing_mixed: &[Complex64], dt: f64) {
        self.mixed
            .par_iter_mut()
            .zip(forcing_mixed.par_iter())
            .for_each(|(m, f)| *m += f * dt);
    }

    /// Exact heat flow over `dt`; returns the exact `2ν∫‖∇θ‖²` lost.
    fn diffuse(&mut self, nu: f64, dt: f64) -> f64 {
        let n = self.n;
        let a = nu * dt;
        let g: Vec<f64> = self.kk.iter().map(|k| (-a * k * k).exp()).collect();
        let gg: Vec<f64> = g.iter().map(|x| x * x).collect();
        let h: Vec<f64> = self.kk.iter().map(|k| -(-2.0 * a * k * k).exp_m1()).collect();
        let inv_n = 1.0 / n as f64;
        let sp = &self.sp;
        let scratch_len = sp.scratch_len();
        let rows = &mut self.mixed;
        let loss = &mut self.row_loss;
        rows.par_chunks_mut(n).zip(loss.par_iter_mut()).enumerate().for_each_init(
            || (vec![0.0f64; n], vec![Complex64::default(); scratch_len]),
            |(terms, scratch), (k, (row, out))| {
                sp.row_forward(row, scratch);
                for (kp, c) in row.iter_mut().enumerate() {
                    terms[kp] = c.norm_sqr() * (h[k] + gg[k] * h[kp]);
                    *c *= g[k] * g[kp] * inv_n;
                }
                *out = pairwise_sum(terms);
                sp.row_inverse(row, scratch);
            },
        );
        pairwise_sum(&self.row_loss) / ((n * n) as f64).powi(2)
    }

    fn segment(
        &mut self,
        field: ScalarField,
        drive: Drive<'_>,
        nu: f64,
        ta: f64,
        tb: f64,
        policy: DtPolicy,
    ) -> Result<(ScalarField, f64, usize)> {
        let n = self.n;
        let len = tb - ta;
        let transposed = matches!(drive, Drive::Shear(s) if s.direction == Direction::Vertical);
        let lines = if transposed {
            transpose_real(field.values(), n)
        } else {
            field.into_values()
        };
        self.to_mixed(&lines);
        drop(lines);

        let mut loss = 0.0;
        let mut steps = 0;
        match drive {
            Drive::Still => {
                if nu > 0.0 {
                    loss += self.diffuse(nu, len);
                    steps = 1;
                }
            }
            Drive::Shear(stage) => {
                if !(ta >= stage.start && tb <= stage.end()) {
                    return Err(AdlabError::StageBoundary {
                        t0: ta,
                        t1: tb,
                        w0: stage.start,
                        w1: stage.end(),
                    });
                }
                let profile: Vec<f64> = (0..n).map(|r| stage.profile(r as f64 / n as f64)).collect();
                if nu == 0.0 {
                    self.shift(stage.displacement(ta, tb), &profile);
                    steps = 1;
                } else {
                    let dt_target = match policy {
                        DtPolicy::Adaptive {
                            window_fraction,
                            diffusion_factor,
                        } => {
                            let f = stage.frequency as f64;
                            (window_fraction * stage.width).min(diffusion_factor / (4.0 * PI * PI * nu * f * f))
                        }
                        DtPolicy::Fixed(dt) => dt,
                    };
                    let m = step_count(len, dt_target);
                    let dt = len / m as f64;
                    let at = |i: f64| ta + i * dt;
                    self.shift(stage.displacement(ta, at(0.5)), &profile);
                    for i in 0..m {
                        loss += self.diffuse(nu, dt);
                        let t1 = if i + 1 == m { tb } else { at(i as f64 + 1.5) };
                        self.shift(stage.displacement(at(i as f64 + 0.5), t1), &profile);
                    }
                    steps = m;
                }
            }
            Drive::Forcing(f) => {
                if f.n() != n {
                    return Err(AdlabError::GridMismatch(f.n(), n));
                }
                let mut forcing_mixed = vec![Complex64::default(); n * n];
                for (w, &v) in self.work.iter_mut().zip(f.values()) {
                    *w = Complex64::new(v, 0.0);
                }
                self.sp.rows_forward(&mut self.work);
                transpose(&self.work, &mut forcing_mixed, n);
                if nu == 0.0 {
                    self.add_forcing(&forcing_mixed, len);
                    steps = 1;
                } else {
                    let dt_target = match policy {
                        DtPolicy::Adaptive { window_fraction, .. } => window_fraction * len,
                        DtPolicy::Fixed(dt) => dt,
                    };
                    let m = step_count(len, dt_target);
                    let dt = len / m as f64;
                    self.add_forcing(&forcing_mixed, 0.5 * dt);
                    for i in 0..m {
                        loss += self.diffuse(nu, dt);
                        let h = if i + 1 == m { 0.5 * dt } else { dt };
                        self.add_forcing(&forcing_mixed, h);
                    }
                    steps = m;
                }
            }
        }

        let lines = self.from_mixed();
        let values = if transposed { transpose_real(&lines, n) } else { lines };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AdlabError::NonFinite(tb));
        }
        Ok((ScalarField::new(n, values)?, loss, steps))
    }
}

fn step_count(len: f64, dt: f64) -> usize {
    ((len / dt - 1e-9).ceil() as usize).max(1)
}

/// Exact transport of `field` by `stage` from `t0` to `t1`.
pub fn advect_exact(field: &ScalarField, stage: &ShearStage, t0: f64, t1: f64) -> Result<ScalarField> {
    if !(t0 >= stage.start && t1 <= stage.end() && t0 <= t1) {
        return Err(AdlabError::StageBoundary {
            t0,
            t1,
            w0: stage.start,
            w1: stage.end(),
        });
    }
    let n = field.n();
    let profile: Vec<f64> = (0..n).map(|r| stage.profile(r as f64 / n as f64)).collect();
    shift_lines(field, stage.direction, stage.displacement(t0, t1), &profile)
}

/// Translates every grid line transverse coordinate `r/n` by
/// `coeff · profile[r]`: along `x₁` for horizontal shears, along `x₂` for
/// vertical ones.
pub fn shift_lines(field: &ScalarField, direction: Direction, coeff: f64, profile: &[f64]) -> Result<ScalarField> {
    let n = field.n();
    if profile.len() != n {
        return Err(AdlabError::GridMismatch(profile.len(), n));
    }
    let mut k = Kernel::new(n)?;
    let lines = match direction {
        Direction::Horizontal => field.values().to_vec(),
        Direction::Vertical => transpose_real(field.values(), n),
    };
    k.to_mixed(&lines);
    k.shift(coeff, profile);
    let out = k.from_mixed();
    let values = match direction {
        Direction::Horizontal => out,
        Direction::Vertical => transpose_real(&out, n),
    };
    ScalarField::new(n, values)
}

/// Heat multiplier `e^{-4π²ν|κ|²dt}`; returns the new field and the exact
/// `2ν∫‖∇θ‖²` over the step.
pub fn diffuse_exact(field: &ScalarField, nu: f64, dt: f64) -> Result<(ScalarField, f64)> {
    if !(nu >= 0.0) || !(dt >= 0.0) {
        return Err(AdlabError::Invalid(format!("nu = {nu}, dt = {dt}")));
    }
    let n = field.n();
    if nu == 0.0 || dt == 0.0 {
        return Ok((field.clone(), 0.0));
    }
    let mut k = Kernel::new(n)?;
    k.to_mixed(field.values());
    let loss = k.diffuse(nu, dt);
    Ok((ScalarField::new(n, k.from_mixed())?, loss))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatCalibration {
    pub nu: f64,
    pub frequency: u64,
    pub n: usize,
    pub dt: f64,
    pub analytic: f64,
    pub solver: f64,
    pub relative_error: f64,
    pub lower_bound_ok: bool,
}

/// `ν∫₀¹∫|∇θ|²` for `θ(t, x) = (e^{-4π²t} − 1) sin(2π ν^{-1/2} x)`.
pub fn heat_dissipation_closed_form() -> f64 {
    let p2 = PI * PI;
    2.0 * p2 * (1.0 - (-(-4.0 * p2).exp_m1()) / (2.0 * p2) + (-(-8.0 * p2).exp_m1()) / (8.0 * p2))
}

pub const HEAT_DT: f64 = 1.0 / 32768.0;

/// Forced heat equation `∂_tθ − νΔθ = −4π² sin(2π m x₁)`, `m = ν^{-1/2}`,
/// from rest over `[0, 1]`.
pub fn heat_counterexample(nu: f64, dt: f64) -> Result<HeatCalibration> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(AdlabError::OutOfRange {
            name: "nu",
            value: nu,
            range: "(0, 1)",
        });
    }
    let m = nu.powf(-0.5).round();
    if ((m * m * nu) - 1.0).abs() > 1e-12 {
        return Err(AdlabError::Invalid(format!("nu^(-1/2) = {} is not an integer", nu.powf(-0.5))));
    }
    let n = (4 * m as usize).next_power_of_two().max(8);
    let forcing = ScalarField::from_fn(n, |x1, _| -4.0 * PI * PI * (2.0 * PI * m * x1).sin())?;
    let flow = SteadyForcing { field: forcing };
    let opts = SolveOptions::new(vec![1.0]).with_policy(DtPolicy::Fixed(dt));
    let traj = solve(&flow, nu, &ScalarField::zeros(n)?, &opts)?;
    let solver = 0.5 * traj.total_dissipation();
    let analytic = heat_dissipation_closed_form();
    Ok(HeatCalibration {
        nu,
        frequency: m as u64,
        n,
        dt,
        analytic,
        solver,
        relative_error: (solver - analytic).abs() / analytic,
        lower_bound_ok: solver >= 0.25,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingGap {
    pub nu: f64,
    pub level: usize,
    pub k: usize,
    pub t_of_nu: f64,
    pub gap_l2: f64,
}

/// Largest `k ≤ Q − 1` with `(2 − γ/(1+δ)) ln a_q + a_k^{2−2γ} a_{k+1}^{−2−2εδ} ≤ 0`,
/// or `0` when none qualifies.
pub fn vanishing_level(seq: &ScaleSequences, q: usize) -> usize {
    let (g, d, e) = (seq.gamma, seq.delta, seq.epsilon);
    let ln_a0 = seq.a0.ln();
    let lhs = (2.0 - g / (1.0 + d)) * seq.ladder.a[q].a0_exponent * ln_a0;
    let mut best = 0;
    for k in 0..seq.depth {
        let ek = seq.ladder.a[k].a0_exponent;
        let ek1 = seq.ladder.a[k + 1].a0_exponent;
        let ln_x = (ek * (2.0 - 2.0 * g) - ek1 * (2.0 + 2.0 * e * d)) * ln_a0;
        if ln_x < 700.0 && lhs + ln_x.exp() <= 0.0 {
            best = k;
        }
    }
    best
}

/// `‖θ̃_ν(t(ν)) − θ₀(t(ν))‖_{L²}` with `t(ν) = 1 − T_{k(q)}`.
pub fn vanishing_viscosity_gap(nu: f64, schedule: &Arc<ShearSchedule>, n: usize) -> Result<VanishingGap> {
    let seq = &schedule.sequences;
    if !(nu >= 0.0) {
        return Err(AdlabError::OutOfRange {
            name: "nu",
            value: nu,
            range: "[0, a0^2)",
        });
    }
    let q = if nu == 0.0 { seq.depth } else { seq.level_for_viscosity(nu) };
    let k = vanishing_level(seq, q);
    let t = 1.0 - seq.time(k as isize);
    let field = crate::shearflow::truncate(schedule, q)?;
    let opts = SolveOptions::new(vec![t]).storing_fields();
    let theta_in = initial_datum(n)?;
    let viscous = solve(&field, nu, &theta_in, &opts)?;
    let inviscid = solve(&field, 0.0, &theta_in, &opts)?;
    let gap = crate::norms::l2_gap(&viscous.fields[0], &inviscid.fields[0])?;
    Ok(VanishingGap {
        nu,
        level: q,
        k,
        t_of_nu: t,
        gap_l2: gap,
    })
}

/// Smallest `C` per level with
/// `max_{t ∈ I_q} ‖∇θ(t)‖_∞ ≤ C a_{q+1}^{−1−3ε(1+δ)} ‖∇θ_in‖_∞`.
pub fn gradient_ceiling(traj: &Trajectory, seq: &ScaleSequences) -> Vec<(usize, f64)> {
    let g0 = traj.initial.grad_linf.max(f64::MIN_POSITIVE);
    (0..seq.depth)
        .filter_map(|q| {
            let (lo, hi) = seq.interval_i(q as isize);
            let peak = traj
                .diagnostics
                .iter()
                .filter(|d| d.t >= lo && d.t <= hi)
                .map(|d| d.grad_linf)
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))?;
            let scale = seq.a[q + 1].powf(-1.0 - 3.0 * seq.epsilon * (1.0 + seq.delta));
            Some((q, peak / (scale * g0)))
        })
        .collect()
}
