use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use adlab_core::cascade::build_sequences;
use adlab_core::error::{AdlabError, Result};
use adlab_core::experiments::{self, setup, ExperimentConfig};
use adlab_core::io::{ensure_dir, write_text, write_trajectory};
use adlab_core::nslift::{dissipation_3d, force, lift, ns_residual, ResidualPlan};
use adlab_core::norms::{bochner_norm, force_norm, holder_report, stage_aligned_times, trapezoid_weights};
use adlab_core::scalarsolver::{initial_datum, solve, SolveOptions, Trajectory};
use adlab_core::shearflow::{build_schedule, truncate, verify_regularity, Profile, TruncatedField};

#[derive(Parser)]
#[command(name = "adlab", version, about = "Alternating-shear anomalous dissipation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scale, time and viscosity sequences plus the parameter conditions.
    Cascade(Io),
    /// Shear schedule, velocity snapshots and regularity table.
    Shear(Io),
    /// Transport the scalar through `u_{q_max}` at one viscosity.
    Solve(Io),
    /// Lift a solve to the forced Navier–Stokes problem.
    Lift(Io),
    /// Hölder, Bochner and force norms of a solve.
    Norms(Io),
    /// Run the experiment named by the config `tag`.
    Run(Io),
}

#[derive(clap::Args)]
struct Io {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("adlab: {e}");
        return ExitCode::from(1);
    }
    let (name, io) = match &cli.command {
        Command::Cascade(io) => ("cascade", io),
        Command::Shear(io) => ("shear", io),
        Command::Solve(io) => ("solve", io),
        Command::Lift(io) => ("lift", io),
        Command::Norms(io) => ("norms", io),
        Command::Run(io) => ("run", io),
    };
    match dispatch(name, io) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("adlab {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// `ADLAB_THREADS` caps the worker pool.
fn configure_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var("ADLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("ADLAB_THREADS={v:?} is not a positive integer"))?;
    if n == 0 {
        return Err("ADLAB_THREADS must be positive".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn dispatch(name: &str, io: &Io) -> Result<u8> {
    let text = adlab_core::io::read_text(&io.config)?;
    ensure_dir(&io.out)?;
    match name {
        "cascade" => cmd_cascade(&text, &io.out),
        _ => {
            let cfg = ExperimentConfig::from_toml(&text)?;
            match name {
                "shear" => cmd_shear(&cfg, &io.out),
                "solve" => cmd_solve(&cfg, &io.out),
                "lift" => cmd_lift(&cfg, &io.out),
                "norms" => cmd_norms(&cfg, &io.out),
                _ => cmd_run(&cfg, &io.out),
            }
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AdlabError::Invalid(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

/// Writes the condition report before validating, so a violating
/// parameter set still leaves its slacks behind.
fn cmd_cascade(text: &str, out: &Path) -> Result<u8> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| AdlabError::Config(e.to_string()))?;
    let params = &cfg.cascade;
    let report = params.conditions();
    write_json(
        &out.join("conditions.json"),
        &json!({ "gamma": params.gamma(), "sigma": params.sigma(), "conditions": report }),
    )?;
    cfg.validate()?;
    let seq = build_sequences(params)?;
    write_text(&out.join("sequences.csv"), &seq.to_csv())?;
    Ok(0)
}

fn cmd_shear(cfg: &ExperimentConfig, out: &Path) -> Result<u8> {
    let seq = build_sequences(&cfg.cascade)?;
    let schedule = build_schedule(&seq, Profile::Sine)?;
    write_json(&out.join("schedule.json"), &json!({ "stages": schedule.stages }))?;
    let mut table = String::from("level,k,l,measured,scale,ratio\n");
    for q in 0..seq.depth {
        for r in verify_regularity(&schedule, q, 2, 2)? {
            table += &format!("{},{},{},{:.17e},{:.17e},{:.17e}\n", r.level, r.k, r.l, r.measured, r.scale, r.ratio);
        }
    }
    write_text(&out.join("regularity.csv"), &table)?;
    let n = 64;
    for (i, s) in schedule.stages.iter().enumerate().filter(|(_, s)| s.level <= cfg.run.q_max) {
        let mid = s.start + 0.5 * s.width;
        write_text(&out.join(format!("velocity_{i:03}.csv")), &schedule.sample_velocity(mid, n).to_csv())?;
    }
    Ok(0)
}

fn viscosity(cfg: &ExperimentConfig, nu_tilde: &[f64]) -> f64 {
    cfg.run.nu_list.first().copied().unwrap_or(nu_tilde[cfg.run.q_max])
}

fn checkpoints(field: &TruncatedField, per_piece: usize) -> Vec<f64> {
    let breaks: Vec<f64> = field.stages().flat_map(|s| [s.start, s.end()]).collect();
    stage_aligned_times(&breaks, 0.0, 1.0, per_piece)
}

struct Solved {
    field: TruncatedField,
    nu: f64,
    n: usize,
    sigma: f64,
    traj: Trajectory,
}

fn solve_config(cfg: &ExperimentConfig, store: bool) -> Result<Solved> {
    let s = setup(cfg)?;
    let field = truncate(&s.schedule, cfg.run.q_max)?;
    let nu = viscosity(cfg, &s.sequences.nu_tilde);
    let mut opts = SolveOptions::new(checkpoints(&field, cfg.run.checkpoints_per_piece)).with_policy(cfg.run.dt);
    if store {
        opts = opts.storing_fields();
    }
    let traj = solve(&field, nu, &initial_datum(s.n)?, &opts)?;
    Ok(Solved {
        field,
        nu,
        n: s.n,
        sigma: cfg.cascade.sigma(),
        traj,
    })
}

fn energy_code(cfg: &ExperimentConfig, traj: &Trajectory) -> u8 {
    if traj.energy_balance_residual() > cfg.thresholds.energy_tol {
        eprintln!(
            "adlab: energy balance residual {:.3e} exceeds {:.1e}",
            traj.energy_balance_residual(),
            cfg.thresholds.energy_tol
        );
        2
    } else {
        0
    }
}

fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<u8> {
    let s = solve_config(cfg, true)?;
    write_trajectory(out, "trajectory", &s.traj)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "nu": s.nu,
            "n": s.n,
            "flow": s.traj.flow,
            "steps": s.traj.steps,
            "total_dissipation": s.traj.total_dissipation(),
            "energy_balance_residual": s.traj.energy_balance_residual(),
        }),
    )?;
    Ok(energy_code(cfg, &s.traj))
}

fn cmd_lift(cfg: &ExperimentConfig, out: &Path) -> Result<u8> {
    let s = solve_config(cfg, false)?;
    let code = energy_code(cfg, &s.traj);
    let plan = ResidualPlan::random(&s.field, s.n, 4, 1e-4, 0)?;
    let residual = ns_residual(&s.field, s.nu, s.n, &plan)?;
    let lifted = lift(&s.field, s.traj, s.nu)?;
    let margin = lifted.admissibility_margins().into_iter().fold(f64::INFINITY, f64::min);
    let d = dissipation_3d(&lifted);
    write_json(
        &out.join("lift.json"),
        &json!({
            "nu": s.nu,
            "n": s.n,
            "dissipation": d,
            "sup_norm": lifted.sup_norm(),
            "initial_velocity": lifted.initial_velocity(),
            "min_admissibility_margin": margin,
            "residual": residual,
        }),
    )?;
    Ok(if margin < -cfg.thresholds.energy_tol { 2 } else { code })
}

fn cmd_norms(cfg: &ExperimentConfig, out: &Path) -> Result<u8> {
    let s = solve_config(cfg, true)?;
    let alpha = cfg.holder_alpha();
    let times = s.traj.times();
    let mut csv = String::from("t,holder_norm,seminorm,refinement_ratio\n");
    let mut values = Vec::with_capacity(times.len());
    for (t, f) in times.iter().zip(&s.traj.fields) {
        let r = holder_report(f, alpha)?;
        csv += &format!(
            "{t:.17e},{:.17e},{:.17e},{}\n",
            r.value,
            r.value - f.linf(),
            r.refinement_ratio.map_or(String::new(), |x| format!("{x:.6e}"))
        );
        values.push(r.value);
    }
    write_text(&out.join("holder.csv"), &csv)?;
    let l3 = bochner_norm(&values, 3.0, &trapezoid_weights(&times)?)?;
    let f = force(&s.field, s.nu);
    let fnorm = force_norm(&f, s.sigma, s.n, 0.0, 1.0, cfg.run.force_samples_per_piece)?;
    write_json(
        &out.join("norms.json"),
        &json!({ "nu": s.nu, "n": s.n, "alpha": alpha, "theta_l3_calpha": l3, "force": fnorm }),
    )?;
    Ok(energy_code(cfg, &s.traj))
}

fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<u8> {
    let start = Instant::now();
    let report = experiments::run(cfg)?;
    experiments::emit_outputs(&report, out)?;
    write_json(
        &out.join("timing.json"),
        &json!({ "wall_time_s": start.elapsed().as_secs_f64(), "threads": rayon::current_num_threads() }),
    )?;
    for v in &report.verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    Ok(if report.any_flagged() { 2 } else { 0 })
}
