//! Experiment drivers and report output.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cascade::{build_sequences, CascadeParams, ScaleSequences};
use crate::error::{AdlabError, Result};
use crate::io::{ensure_dir, write_text};
use crate::nslift::{force, lift};
use crate::norms::{bochner_norm, force_norm, holder_seminorm_components, l2_gap, stage_aligned_times, trapezoid_weights, uniformity_scan};
use crate::scalarsolver::{
    heat_counterexample, initial_datum, solve, solve_observed, vanishing_viscosity_gap, DtPolicy, HeatCalibration, ScalarField,
    SolveOptions, VanishingGap, HEAT_DT,
};
use crate::shearflow::{build_schedule, truncate, Profile, ShearSchedule, TruncatedField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentTag {
    #[serde(rename = "theoremA")]
    TheoremA,
    #[serde(rename = "dichotomyB")]
    DichotomyB,
    #[serde(rename = "dichotomyC")]
    DichotomyC,
    #[serde(rename = "vanishing")]
    Vanishing,
    #[serde(rename = "heat_calibration")]
    HeatCalibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub q_min: usize,
    pub q_max: usize,
    /// Grid size; the smallest admissible power of two when absent.
    pub n: Option<usize>,
    pub min_n: usize,
    pub dt: DtPolicy,
    /// Norm checkpoints between consecutive stage boundaries.
    pub checkpoints_per_piece: usize,
    /// Force-norm samples between consecutive stage boundaries.
    pub force_samples_per_piece: usize,
    /// Hölder exponent for the `L³C^α` norm; the cascade `α` when absent.
    pub holder_alpha: Option<f64>,
    pub nu_list: Vec<f64>,
    pub heat_nus: Vec<f64>,
    pub heat_dt: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            q_min: 1,
            q_max: 3,
            n: None,
            min_n: 64,
            dt: DtPolicy::default(),
            checkpoints_per_piece: 4,
            force_samples_per_piece: 64,
            holder_alpha: None,
            nu_list: Vec::new(),
            heat_nus: vec![0.25, 0.0625, 0.015625],
            heat_dt: HEAT_DT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Lower bound on `2ν∫‖∇θ‖²` for the dissipative branch.
    pub eps_diss: f64,
    pub tol_slope: f64,
    pub branch_factor: f64,
    /// Upper bound on the conservative-branch `L²` gap.
    pub gap_tol: f64,
    pub uniformity_ratio: f64,
    pub energy_tol: f64,
    pub sup_tol: f64,
    pub heat_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            eps_diss: 1e-3,
            tol_slope: 0.2,
            branch_factor: 3.0,
            gap_tol: 1e-2,
            uniformity_ratio: 3.0,
            energy_tol: 1e-6,
            sup_tol: 1e-9,
            heat_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tag: ExperimentTag,
    pub cascade: CascadeParams,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| AdlabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&crate::io::read_text(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.cascade.validate()?;
        let r = &self.run;
        if r.q_min > r.q_max || r.q_max > self.cascade.depth {
            return Err(AdlabError::Config(format!(
                "q range {}..={} not inside [0, {}]",
                r.q_min, r.q_max, self.cascade.depth
            )));
        }
        if r.checkpoints_per_piece == 0 || r.force_samples_per_piece == 0 {
            return Err(AdlabError::Config("sample counts must be positive".into()));
        }
        if self.tag == ExperimentTag::DichotomyC && self.cascade.beta != 0.0 {
            return Err(AdlabError::Config("the C variant requires beta = 0".into()));
        }
        Ok(())
    }

    pub fn holder_alpha(&self) -> f64 {
        self.run.holder_alpha.unwrap_or(self.cascade.alpha)
    }

    /// The desk-scale dichotomy run: `a0 = 0.1`, `δ = 1/4`, `β = 0`, `q = 1..3`.
    pub fn desk_scale(tag: ExperimentTag) -> Self {
        ExperimentConfig {
            tag,
            cascade: CascadeParams::desk_scale(),
            run: RunConfig::default(),
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `ν = ν̃_q`.
    Tilde,
    /// `ν = ν_q`, the conservative sequence of the variant.
    Conservative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub nu: f64,
    pub level: usize,
    pub branch: Branch,
    /// `ν∫|∇v|²` over `[0, t*]`.
    pub total_dissipation: f64,
    /// `2ν∫₀^{t*}‖∇θ‖²` with `t* = 1 − T_{q+1}`.
    pub theta_dissipation: f64,
    pub sup_norm: f64,
    pub l3_calpha: f64,
    pub force_norm: f64,
    /// `‖θ̃_ν − θ₀‖_{L²}` at `1 − T_q`.
    pub l2_gap_to_theta0: f64,
    pub energy_balance_residual: f64,
    pub admissibility_margin: f64,
    pub classification: String,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub tag: ExperimentTag,
    pub params: CascadeParams,
    pub gamma: f64,
    pub sigma: f64,
    pub holder_alpha: f64,
    pub n: usize,
    pub rows: Vec<ReportRow>,
    pub vanishing: Vec<VanishingGap>,
    pub heat: Vec<HeatCalibration>,
    pub verdicts: Vec<Verdict>,
}

impl DissipationReport {
    fn empty(cfg: &ExperimentConfig, n: usize) -> Self {
        DissipationReport {
            tag: cfg.tag,
            params: cfg.cascade.clone(),
            gamma: cfg.cascade.gamma(),
            sigma: cfg.cascade.sigma(),
            holder_alpha: cfg.holder_alpha(),
            n,
            rows: Vec::new(),
            vanishing: Vec::new(),
            heat: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }

    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.verdicts.push(Verdict {
            name: name.into(),
            pass,
            detail,
        });
    }
}

/// Sequences, schedule and common grid of a configuration.
pub struct Setup {
    pub sequences: ScaleSequences,
    pub schedule: Arc<ShearSchedule>,
    pub n: usize,
}

pub fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let sequences = build_sequences(&cfg.cascade)?;
    let schedule = Arc::new(build_schedule(&sequences, Profile::Sine)?);
    let floor = truncate(&schedule, cfg.run.q_max)?.resolution_floor();
    let n = match cfg.run.n {
        Some(n) => {
            if n < floor {
                return Err(AdlabError::Resolution { n, floor });
            }
            n
        }
        None => floor.next_power_of_two().max(cfg.run.min_n),
    };
    crate::spectral::check_grid(n)?;
    Ok(Setup { sequences, schedule, n })
}

/// Conservative viscosity of the variant at level `q`.
fn conservative_nu(seq: &ScaleSequences, tag: ExperimentTag, q: usize) -> f64 {
    match tag {
        ExperimentTag::DichotomyC => seq.nu_cons_c[q],
        _ => seq.nu_cons_a[q],
    }
}

struct Job {
    nu: f64,
    level: usize,
    branch: Branch,
}

/// Field of `θ₀` at each `1 − T_q`.
fn inviscid_reference(setup: &Setup, cfg: &ExperimentConfig) -> Result<Vec<(usize, ScalarField)>> {
    let seq = &setup.sequences;
    let levels: Vec<usize> = (cfg.run.q_min..=cfg.run.q_max).collect();
    let times: Vec<f64> = levels.iter().map(|&q| 1.0 - seq.time(q as isize)).collect();
    let mut uniq = times.clone();
    uniq.dedup();
    let field = truncate(&setup.schedule, cfg.run.q_max)?;
    let traj = solve(&field, 0.0, &initial_datum(setup.n)?, &SolveOptions::new(uniq.clone()).storing_fields())?;
    Ok(levels
        .into_iter()
        .zip(times)
        .map(|(q, t)| {
            let i = uniq.iter().position(|&u| u == t).unwrap();
            (q, traj.fields[i].clone())
        })
        .collect())
}

fn run_job(setup: &Setup, cfg: &ExperimentConfig, job: &Job, theta0: &ScalarField) -> Result<ReportRow> {
    let seq = &setup.sequences;
    let n = setup.n;
    let q = job.level;
    let field = truncate(&setup.schedule, q)?;
    let t_gap = 1.0 - seq.time(q as isize);
    let t_star = 1.0 - seq.time(q as isize + 1);
    let breaks: Vec<f64> = field.stages().flat_map(|s| [s.start, s.end()]).collect();
    let mut cps = stage_aligned_times(&breaks, 0.0, 1.0, cfg.run.checkpoints_per_piece);
    cps.extend([t_gap, t_star]);
    cps.sort_by(|a, b| a.total_cmp(b));
    cps.dedup();

    let alpha = cfg.holder_alpha();
    let mut holder = Vec::with_capacity(cps.len());
    let mut gap = None;
    let mut at_star = None;
    let opts = SolveOptions::new(cps.clone()).with_policy(cfg.run.dt);
    let traj = solve_observed(&field, job.nu, &initial_datum(n)?, &opts, |d, theta| {
        holder.push(vector_holder_norm(&field, d.t, theta, alpha)?);
        if d.t == t_gap {
            gap = Some(l2_gap(theta, theta0)?);
        }
        if d.t == t_star {
            at_star = Some(d.cumulative_dissipation);
        }
        Ok(())
    })?;
    let l3_calpha = bochner_norm(&holder, 3.0, &trapezoid_weights(&cps)?)?;
    let theta_dissipation = at_star.unwrap_or(0.0);
    let force_norm = force_norm(
        &force(&field, job.nu),
        cfg.cascade.sigma(),
        n,
        0.0,
        1.0,
        cfg.run.force_samples_per_piece,
    )?
    .value;
    let energy_balance_residual = traj.energy_balance_residual();
    let lifted = lift(&field, traj, job.nu)?;
    let admissibility_margin = lifted
        .admissibility_margins()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let sup_norm = lifted.sup_norm();
    let total = partial_dissipation_3d(&lifted, t_star, theta_dissipation);
    let th = &cfg.thresholds;
    let l2_gap_to_theta0 = gap.unwrap_or(f64::NAN);
    let classification = if theta_dissipation >= th.eps_diss {
        "dissipative-branch"
    } else if l2_gap_to_theta0 <= th.gap_tol {
        "conservative-branch"
    } else {
        "unclassified"
    };
    Ok(ReportRow {
        nu: job.nu,
        level: q,
        branch: job.branch,
        total_dissipation: total,
        theta_dissipation,
        sup_norm,
        l3_calpha,
        force_norm,
        l2_gap_to_theta0,
        energy_balance_residual,
        admissibility_margin,
        classification: classification.into(),
        flagged: energy_balance_residual > th.energy_tol || admissibility_margin < -th.energy_tol,
    })
}

fn partial_dissipation_3d(lifted: &crate::nslift::LiftedSolution, t_end: f64, theta_cum: f64) -> f64 {
    crate::nslift::velocity_dissipation(&lifted.u_part, lifted.nu, t_end) + 0.5 * theta_cum
}

/// `‖(u_q(t), θ(t))‖_{C^α}`, Euclidean in the three components.
fn vector_holder_norm(field: &TruncatedField, t: f64, theta: &ScalarField, alpha: f64) -> Result<f64> {
    let n = theta.n();
    let u1 = ScalarField::from_fn(n, |x1, x2| field.velocity_at(t, [x1, x2])[0])?;
    let u2 = ScalarField::from_fn(n, |x1, x2| field.velocity_at(t, [x1, x2])[1])?;
    let semi = holder_seminorm_components(&[u1.values(), u2.values(), theta.values()], n, alpha)?;
    let sup = u1
        .values()
        .iter()
        .zip(u2.values())
        .zip(theta.values())
        .fold(0.0f64, |m, ((a, b), c)| m.max((a * a + b * b + c * c).sqrt()));
    Ok(sup + semi)
}

fn run_jobs(setup: &Setup, cfg: &ExperimentConfig, jobs: Vec<Job>) -> Result<Vec<ReportRow>> {
    let refs = inviscid_reference(setup, cfg)?;
    let mut rows = jobs
        .par_iter()
        .map(|job| {
            let theta0 = &refs.iter().find(|(q, _)| *q == job.level).unwrap().1;
            run_job(setup, cfg, job, theta0)
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.nu.total_cmp(&a.nu));
    Ok(rows)
}

/// Least-squares slope of `ln y` against `x`.
pub fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|p| !(p.1 > 0.0)) {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn run_theorem_a(cfg: &ExperimentConfig) -> Result<DissipationReport> {
    let s = setup(cfg)?;
    let jobs = (cfg.run.q_min..=cfg.run.q_max)
        .map(|q| Job {
            nu: s.sequences.nu_tilde[q],
            level: q,
            branch: Branch::Tilde,
        })
        .collect();
    let mut report = DissipationReport::empty(cfg, s.n);
    report.rows = run_jobs(&s, cfg, jobs)?;
    let th = &cfg.thresholds;
    let diss: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.level as f64, r.theta_dissipation)).collect();
    let min = diss.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let slope = log_slope(&diss);
    let ok = min >= th.eps_diss && slope.is_none_or(|s| s >= -th.tol_slope);
    report.push(
        "nonvanishing",
        ok,
        format!("min dissipation {min:.6e} (threshold {:.3e}), log-slope {}", th.eps_diss, fmt_opt(slope)),
    );
    push_energy_verdict(&mut report, th);
    Ok(report)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.6e}"))
}

fn push_energy_verdict(report: &mut DissipationReport, th: &Thresholds) {
    let worst = report.rows.iter().map(|r| r.energy_balance_residual).fold(0.0, f64::max);
    report.push(
        "energy_balance",
        worst <= th.energy_tol,
        format!("max relative residual {worst:.3e} (tolerance {:.1e})", th.energy_tol),
    );
}

pub fn run_dichotomy(cfg: &ExperimentConfig) -> Result<DissipationReport> {
    if !matches!(cfg.tag, ExperimentTag::DichotomyB | ExperimentTag::DichotomyC) {
        return Err(AdlabError::Config("dichotomy runs need tag dichotomyB or dichotomyC".into()));
    }
    let s = setup(cfg)?;
    let mut jobs = Vec::new();
    for q in cfg.run.q_min..=cfg.run.q_max {
        jobs.push(Job {
            nu: s.sequences.nu_tilde[q],
            level: q,
            branch: Branch::Tilde,
        });
        jobs.push(Job {
            nu: conservative_nu(&s.sequences, cfg.tag, q),
            level: q,
            branch: Branch::Conservative,
        });
    }
    let mut report = DissipationReport::empty(cfg, s.n);
    report.rows = run_jobs(&s, cfg, jobs)?;
    let th = cfg.thresholds.clone();
    let branch = |b: Branch| -> Vec<&ReportRow> {
        let mut v: Vec<&ReportRow> = report.rows.iter().filter(|r| r.branch == b).collect();
        v.sort_by_key(|r| r.level);
        v
    };
    let tilde = branch(Branch::Tilde);
    let cons = branch(Branch::Conservative);

    let factors: Vec<f64> = tilde
        .iter()
        .zip(&cons)
        .map(|(a, b)| a.theta_dissipation / b.theta_dissipation)
        .collect();
    let factor_ok = factors.iter().all(|f| *f >= th.branch_factor);
    let gaps: Vec<f64> = cons.iter().map(|r| r.l2_gap_to_theta0).collect();
    let gaps_ok = gaps.windows(2).all(|w| w[1] < w[0]);
    let pts: Vec<(f64, f64)> = tilde.iter().map(|r| (r.level as f64, r.theta_dissipation)).collect();
    let slope = log_slope(&pts);
    let slope_ok = slope.is_none_or(|s| s >= -th.tol_slope);
    let min_tilde = tilde.iter().map(|r| r.theta_dissipation).fold(f64::INFINITY, f64::min);
    let max_cons = cons.iter().map(|r| r.theta_dissipation).fold(0.0, f64::max);
    let classified = tilde.iter().all(|r| r.classification == "dissipative-branch")
        && cons.iter().all(|r| r.classification == "conservative-branch");

    let sup = report.rows.iter().map(|r| r.sup_norm).fold(0.0, f64::max);
    let l3 = uniformity_scan(&report.rows.iter().map(|r| (r.nu, r.l3_calpha)).collect::<Vec<_>>());
    let fnorm = uniformity_scan(&report.rows.iter().map(|r| (r.nu, r.force_norm)).collect::<Vec<_>>());

    let list = |v: &[f64]| v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ");
    report.push(
        "branch_factor",
        factor_ok,
        format!("dissipation ratios tilde/conservative [{}] (required >= {})", list(&factors), th.branch_factor),
    );
    report.push("conservative_gap_monotone", gaps_ok, format!("gaps by level [{}]", list(&gaps)));
    report.push(
        "dissipative_log_slope",
        slope_ok,
        format!("slope {} (required >= {})", fmt_opt(slope), -th.tol_slope),
    );
    report.push(
        "branch_separation",
        min_tilde > max_cons,
        format!("min tilde {min_tilde:.6e} vs max conservative {max_cons:.6e}"),
    );
    report.push(
        "branch_classification",
        classified,
        format!("eps_diss {:.3e}, gap_tol {:.3e}", th.eps_diss, th.gap_tol),
    );
    report.push(
        "uniform_sup",
        sup <= 1.0 + th.sup_tol,
        format!("max sup norm {sup:.15e}"),
    );
    for (name, table) in [("uniform_l3calpha", &l3), ("uniform_force", &fnorm)] {
        let ratio = table.ratio.unwrap_or(1.0);
        report.push(
            name,
            ratio <= th.uniformity_ratio,
            format!("max/median {ratio:.4e} (threshold {})", th.uniformity_ratio),
        );
    }
    push_energy_verdict(&mut report, &th);
    Ok(report)
}

pub fn run_vanishing(cfg: &ExperimentConfig) -> Result<DissipationReport> {
    let s = setup(cfg)?;
    let nus: Vec<f64> = if cfg.run.nu_list.is_empty() {
        (cfg.run.q_min..=cfg.run.q_max).map(|q| s.sequences.nu_tilde[q]).collect()
    } else {
        cfg.run.nu_list.clone()
    };
    let mut rows = nus
        .par_iter()
        .map(|&nu| vanishing_viscosity_gap(nu, &s.schedule, s.n))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.nu.total_cmp(&a.nu));
    let mut report = DissipationReport::empty(cfg, s.n);
    let ok = rows.windows(2).all(|w| w[1].gap_l2 <= w[0].gap_l2);
    let detail = rows
        .iter()
        .map(|r| format!("nu {:.4e}: t {:.6} gap {:.4e}", r.nu, r.t_of_nu, r.gap_l2))
        .collect::<Vec<_>>()
        .join("; ");
    report.vanishing = rows;
    report.push("gaps_decreasing", ok, detail);
    Ok(report)
}

pub fn run_heat_calibration(cfg: &ExperimentConfig) -> Result<DissipationReport> {
    let rows = cfg
        .run
        .heat_nus
        .par_iter()
        .map(|&nu| heat_counterexample(nu, cfg.run.heat_dt))
        .collect::<Result<Vec<_>>>()?;
    let mut report = DissipationReport::empty(cfg, rows.iter().map(|r| r.n).max().unwrap_or(0));
    let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    report.push(
        "heat_closed_form",
        worst <= cfg.thresholds.heat_tol,
        format!("max relative error {worst:.3e}"),
    );
    report.push(
        "heat_lower_bound",
        rows.iter().all(|r| r.lower_bound_ok),
        "dissipation >= 1/4".into(),
    );
    report.heat = rows;
    Ok(report)
}

pub fn run(cfg: &ExperimentConfig) -> Result<DissipationReport> {
    match cfg.tag {
        ExperimentTag::TheoremA => run_theorem_a(cfg),
        ExperimentTag::DichotomyB | ExperimentTag::DichotomyC => run_dichotomy(cfg),
        ExperimentTag::Vanishing => run_vanishing(cfg),
        ExperimentTag::HeatCalibration => run_heat_calibration(cfg),
    }
}

pub const CSV_HEADER: &str = "nu,level,branch,total_dissipation,theta_dissipation,sup_norm,L3Calpha,force_norm,\
l2_gap_to_theta0,energy_balance_residual,admissibility_margin,classification,flagged";

pub fn report_csv(report: &DissipationReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let branch = match r.branch {
            Branch::Tilde => "tilde",
            Branch::Conservative => "conservative",
        };
        let _ = writeln!(
            out,
            "{:.17e},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
            r.nu,
            r.level,
            branch,
            r.total_dissipation,
            r.theta_dissipation,
            r.sup_norm,
            r.l3_calpha,
            r.force_norm,
            r.l2_gap_to_theta0,
            r.energy_balance_residual,
            r.admissibility_margin,
            r.classification,
            r.flagged
        );
    }
    out
}

/// Writes `report.json`, `report.csv` and three SVG plots.
pub fn emit_outputs(report: &DissipationReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    ensure_dir(dir)?;
    let json = serde_json::to_string_pretty(report).map_err(|e| AdlabError::Invalid(e.to_string()))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        write_text(&p, text)?;
        written.push(p);
        Ok(())
    };
    put("report.json", &(json + "\n"))?;
    put("report.csv", &report_csv(report))?;

    let series = |b: Branch, f: &dyn Fn(&ReportRow) -> (f64, f64)| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = report.rows.iter().filter(|r| r.branch == b).map(f).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let by_q = |r: &ReportRow| (r.level as f64, r.theta_dissipation);
    put(
        "dissipation_vs_q.svg",
        &svg_plot(
            "dissipation vs q",
            "q",
            "2ν∫‖∇θ‖²",
            false,
            &[("tilde", series(Branch::Tilde, &by_q)), ("conservative", series(Branch::Conservative, &by_q))],
        ),
    )?;
    let mut gap_series: Vec<(&str, Vec<(f64, f64)>)> = vec![
        ("tilde", series(Branch::Tilde, &|r| (r.nu, r.l2_gap_to_theta0))),
        ("conservative", series(Branch::Conservative, &|r| (r.nu, r.l2_gap_to_theta0))),
    ];
    if !report.vanishing.is_empty() {
        let mut v: Vec<(f64, f64)> = report.vanishing.iter().map(|r| (r.nu, r.gap_l2)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        gap_series.push(("vanishing", v));
    }
    put("gap_vs_nu.svg", &svg_plot("L2 gap vs viscosity", "ν", "gap", true, &gap_series))?;
    let mut norms: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.nu, r.l3_calpha)).collect();
    norms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut forces: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.nu, r.force_norm)).collect();
    forces.sort_by(|a, b| a.0.total_cmp(&b.0));
    put(
        "norm_vs_nu.svg",
        &svg_plot("norms vs viscosity", "ν", "norm", true, &[("L3 C^alpha", norms), ("force L^(1+σ) C^σ", forces)]),
    )?;
    Ok(written)
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Minimal self-contained SVG line plot with a log-scaled y axis (and x axis
/// when `log_x`). Non-positive values are skipped.
pub fn svg_plot(title: &str, xlabel: &str, ylabel: &str, log_x: bool, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .filter(|p| p.1 > 0.0 && p.1.is_finite() && (!log_x || p.0 > 0.0))
        .map(|p| (tx(p.0), p.1.log10()))
        .collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#,
        h - m,
        w - m,
        h - m,
        h - m
    );
    let xl = if log_x { format!("log10 {xlabel}") } else { xlabel.to_string() };
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        w / 2.0,
        h - 20.0,
        escape(&xl)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">log10 {}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(ylabel)
    );
    if !pts.is_empty() {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
        let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
        for (v, anchor, xx, yy) in [(x0, "start", m, h - m + 16.0), (x1, "end", w - m, h - m + 16.0)] {
            let _ = writeln!(
                out,
                r#"<text x="{xx}" y="{yy}" text-anchor="{anchor}" font-family="sans-serif" font-size="10">{v:.3}</text>"#
            );
        }
        for (v, yy) in [(y0, h - m), (y1, m)] {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{yy:.1}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.3}</text>"#,
                m - 4.0
            );
        }
        for (i, (name, data)) in series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let coords: Vec<String> = data
                .iter()
                .filter(|p| p.1 > 0.0 && p.1.is_finite() && (!log_x || p.0 > 0.0))
                .map(|p| format!("{:.2},{:.2}", px(tx(p.0)), py(p.1.log10())))
                .collect();
            if !coords.is_empty() {
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    coords.join(" ")
                );
                for c in &coords {
                    let (cx, cy) = c.split_once(',').unwrap();
                    let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
                }
            }
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
                w - m - 120.0,
                m + 14.0 * i as f64,
                escape(name)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Single-mode heat dissipation `2ν∫₀ᵗ‖∇θ‖²` of `sin(2πx₂)` without shear.
pub fn unsheared_dissipation(nu: f64, t: f64) -> f64 {
    -(-8.0 * PI * PI * nu * t).exp_m1() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::desk_scale(ExperimentTag::DichotomyC);
        let text = cfg.to_toml();
        assert!(text.contains("tag = \"dichotomyC\""));
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_ranges() {
        let mut cfg = ExperimentConfig::desk_scale(ExperimentTag::TheoremA);
        cfg.run.q_max = 9;
        assert!(cfg.validate().is_err());
        let text = ExperimentConfig::desk_scale(ExperimentTag::TheoremA).to_toml() + "\nbogus = 1\n";
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn variant_c_requires_beta_zero() {
        let mut cfg = ExperimentConfig::desk_scale(ExperimentTag::DichotomyC);
        cfg.cascade.beta = 0.01;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn slope_of_geometric_sequence() {
        let pts: Vec<(f64, f64)> = (0..4).map(|q| (q as f64, 2f64.powi(-q))).collect();
        assert!((log_slope(&pts).unwrap() + 2f64.ln()).abs() < 1e-14);
        assert!(log_slope(&pts[..1]).is_none());
    }

    #[test]
    fn empty_report_outputs_have_headers_only() {
        let cfg = ExperimentConfig::desk_scale(ExperimentTag::TheoremA);
        let report = DissipationReport::empty(&cfg, 64);
        let dir = tempfile::tempdir().unwrap();
        emit_outputs(&report, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let svg = std::fs::read_to_string(dir.path().join("dissipation_vs_q.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn unsheared_zero_horizon() {
        assert_eq!(unsheared_dissipation(0.1, 0.0), 0.0);
    }
}
