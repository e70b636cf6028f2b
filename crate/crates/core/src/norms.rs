//! Discrete norm estimators.
//!
//! Hölder seminorms use a structured neighbour set: for every grid point the
//! partners at offsets `(2^j, 0)`, `(0, 2^j)` and `(2^j, 2^j)`, restricted to
//! torus distance at most `1/4`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AdlabError, Result};
use crate::nslift::{ForceSlice, LiftedForce};
use crate::scalarsolver::ScalarField;
use crate::sum::{max_of, pairwise_sum};

pub const MAX_DISTANCE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    Linf,
    Calpha,
    L3Calpha,
    L1sCsigma,
    CalphaSpaceTime,
    L2gap,
    Dissipation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub kind: NormKind,
    pub value: f64,
    pub exponent: Option<f64>,
    pub resolution: usize,
    /// Value at `n` divided by the value at `n / 2`.
    pub refinement_ratio: Option<f64>,
}

fn offsets(n: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    let mut s = 1;
    while s <= n / 4 {
        let d = s as f64 / n as f64;
        out.push((s, 0, d));
        out.push((0, s, d));
        let diag = d * std::f64::consts::SQRT_2;
        if diag <= MAX_DISTANCE {
            out.push((s, s, diag));
        }
        s *= 2;
    }
    out
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(AdlabError::OutOfRange {
            name: "alpha",
            value: alpha,
            range: "(0, 1]",
        });
    }
    Ok(())
}

/// Seminorm of a vector-valued grid function (Euclidean in the components).
pub fn holder_seminorm_components(components: &[&[f64]], n: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if components.iter().any(|c| c.len() != n * n) {
        return Err(AdlabError::GridMismatch(n * n, components.iter().map(|c| c.len()).max().unwrap_or(0)));
    }
    let offs = offsets(n);
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut m = 0.0f64;
            for &(di, dj, d) in &offs {
                let w = d.powf(-alpha);
                let jj = (j + dj) % n;
                for i in 0..n {
                    let ii = (i + di) % n;
                    let mut s = 0.0;
                    for c in components {
                        let diff = c[jj * n + ii] - c[j * n + i];
                        s += diff * diff;
                    }
                    m = m.max(s.sqrt() * w);
                }
            }
            m
        })
        .collect();
    Ok(if rows.is_empty() { 0.0 } else { max_of(&rows) })
}

pub fn holder_seminorm(field: &ScalarField, alpha: f64) -> Result<f64> {
    holder_seminorm_components(&[field.values()], field.n(), alpha)
}

/// Same neighbour rule on a one-dimensional periodic profile.
pub fn holder_seminorm_1d(values: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let n = values.len();
    let mut m = 0.0f64;
    let mut s = 1;
    while s <= n / 4 {
        let w = (s as f64 / n as f64).powf(-alpha);
        for i in 0..n {
            m = m.max((values[(i + s) % n] - values[i]).abs() * w);
        }
        s *= 2;
    }
    Ok(m)
}

/// `sup|f| + [f]_α`.
pub fn holder_norm(field: &ScalarField, alpha: f64) -> Result<f64> {
    Ok(field.linf() + holder_seminorm(field, alpha)?)
}

pub fn holder_report(field: &ScalarField, alpha: f64) -> Result<NormReport> {
    let value = holder_norm(field, alpha)?;
    let refinement_ratio = if field.n() >= 16 {
        let coarse = holder_norm(&field.restrict(field.n() / 2)?, alpha)?;
        (coarse > 0.0).then(|| value / coarse)
    } else {
        None
    };
    Ok(NormReport {
        kind: NormKind::Calpha,
        value,
        exponent: Some(alpha),
        resolution: field.n(),
        refinement_ratio,
    })
}

/// Trapezoid weights for nondecreasing nodes; repeated nodes mark jumps.
pub fn trapezoid_weights(times: &[f64]) -> Result<Vec<f64>> {
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(AdlabError::Invalid("time nodes must be nondecreasing".into()));
    }
    let mut w = vec![0.0; times.len()];
    for i in 1..times.len() {
        let h = 0.5 * (times[i] - times[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    Ok(w)
}

/// `(Σ wᵢ vᵢ^p)^{1/p}`.
pub fn bochner_norm(values: &[f64], p: f64, weights: &[f64]) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(AdlabError::OutOfRange {
            name: "p",
            value: p,
            range: "[1, inf)",
        });
    }
    if values.len() != weights.len() {
        return Err(AdlabError::GridMismatch(values.len(), weights.len()));
    }
    if values.iter().any(|v| *v < 0.0) {
        return Err(AdlabError::Invalid("Bochner integrand must be nonnegative".into()));
    }
    let terms: Vec<f64> = values.iter().zip(weights).map(|(v, w)| w * v.powf(p)).collect();
    Ok(pairwise_sum(&terms).powf(1.0 / p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityRow {
    pub nu: f64,
    pub value: f64,
    pub running_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityTable {
    pub rows: Vec<UniformityRow>,
    pub max: Option<f64>,
    pub median: Option<f64>,
    /// `max / median`.
    pub ratio: Option<f64>,
}

pub fn uniformity_scan(values: &[(f64, f64)]) -> UniformityTable {
    let mut running = f64::NEG_INFINITY;
    let rows: Vec<UniformityRow> = values
        .iter()
        .map(|&(nu, value)| {
            running = running.max(value);
            UniformityRow {
                nu,
                value,
                running_max: running,
            }
        })
        .collect();
    if rows.is_empty() {
        return UniformityTable {
            rows,
            max: None,
            median: None,
            ratio: None,
        };
    }
    let mut sorted: Vec<f64> = values.iter().map(|v| v.1).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    UniformityTable {
        rows,
        max: Some(running),
        median: Some(median),
        ratio: Some(running / median),
    }
}

/// Grid `L²` distance.
pub fn l2_gap(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if a.n() != b.n() {
        return Err(AdlabError::GridMismatch(a.n(), b.n()));
    }
    let sq: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).collect();
    Ok((pairwise_sum(&sq) / (a.n() * a.n()) as f64).sqrt())
}

/// `max_t |‖v(t)‖² − ‖v_in‖² − W(t)| / ‖v_in‖²` with `W(t) = 2∫₀ᵗ∫F·v`
/// supplied per checkpoint.
pub fn energy_balance_check(energies: &[f64], initial_energy: f64, force_work: &[f64]) -> Result<f64> {
    if energies.len() != force_work.len() {
        return Err(AdlabError::GridMismatch(energies.len(), force_work.len()));
    }
    let r: Vec<f64> = energies
        .iter()
        .zip(force_work)
        .map(|(e, w)| (e - initial_energy - w).abs() / initial_energy.max(f64::MIN_POSITIVE))
        .collect();
    Ok(if r.is_empty() { 0.0 } else { max_of(&r) })
}

/// Uniform sample times with every stage window boundary as a node.
pub fn stage_aligned_times(breaks: &[f64], t0: f64, t1: f64, per_piece: usize) -> Vec<f64> {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&t| t > t0 && t < t1).collect();
    cuts.push(t0);
    cuts.push(t1);
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let mut out = vec![t0];
    for w in cuts.windows(2) {
        for i in 1..=per_piece {
            out.push(w[0] + (w[1] - w[0]) * i as f64 / per_piece as f64);
        }
    }
    out
}

/// `sup|sin(2π f ·)|` and the `σ`-seminorm of the sampled profile.
fn profile_norms(frequency: u32, n: usize, sigma: f64) -> Result<(f64, f64)> {
    let p: Vec<f64> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * frequency as f64 * i as f64 / n as f64).sin())
        .collect();
    let sup = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((sup, holder_seminorm_1d(&p, sigma)?))
}

fn slice_holder(slice: &ForceSlice, n: usize, sigma: f64) -> Result<f64> {
    match slice.stage {
        None => Ok(0.0),
        Some(s) => {
            let (sup, semi) = profile_norms(s.frequency, n, sigma)?;
            Ok(slice.coefficient.abs() * (sup + semi))
        }
    }
}

/// `‖F‖_{L^{1+σ}([t0, t1]; C^σ)}` with slices sampled `per_piece` times
/// between consecutive stage boundaries.
pub fn force_norm(force: &LiftedForce, sigma: f64, n: usize, t0: f64, t1: f64, per_piece: usize) -> Result<NormReport> {
    let times = stage_aligned_times(&force.breakpoints(), t0, t1, per_piece);
    let vals = times
        .iter()
        .map(|&t| slice_holder(&force.slice(t), n, sigma))
        .collect::<Result<Vec<f64>>>()?;
    let value = bochner_norm(&vals, 1.0 + sigma, &trapezoid_weights(&times)?)?;
    Ok(NormReport {
        kind: NormKind::L1sCsigma,
        value,
        exponent: Some(sigma),
        resolution: n,
        refinement_ratio: None,
    })
}

/// `‖F_a − F_b‖_{L^{1+σ}C^σ}` for two forces built on the same schedule.
pub fn force_gap_norm(a: &LiftedForce, b: &LiftedForce, sigma: f64, n: usize, t0: f64, t1: f64, per_piece: usize) -> Result<f64> {
    let mut breaks = a.breakpoints();
    breaks.extend(b.breakpoints());
    let times = stage_aligned_times(&breaks, t0, t1, per_piece);
    let vals = times
        .iter()
        .map(|&t| {
            let (sa, sb) = (a.slice(t), b.slice(t));
            let stage = sa.stage.or(sb.stage);
            if let (Some(x), Some(y)) = (sa.stage, sb.stage) {
                if x != y {
                    return Err(AdlabError::Provenance("forces built on different schedules".into()));
                }
            }
            slice_holder(
                &ForceSlice {
                    stage,
                    coefficient: sa.coefficient - sb.coefficient,
                },
                n,
                sigma,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    bochner_norm(&vals, 1.0 + sigma, &trapezoid_weights(&times)?)
}

/// Space-time `C^{α′}` norm of the force over `[t0, t1] × T²`: sup, the
/// largest spatial quotient, and temporal quotients over sample pairs at
/// most `1/4` apart.
pub fn force_space_time_holder(force: &LiftedForce, alpha: f64, n: usize, t0: f64, t1: f64, per_piece: usize) -> Result<NormReport> {
    check_alpha(alpha)?;
    let times = stage_aligned_times(&force.breakpoints(), t0, t1, per_piece);
    let slices: Vec<ForceSlice> = times.iter().map(|&t| force.slice(t)).collect();
    let profiles: Vec<Option<Vec<f64>>> = slices
        .iter()
        .map(|s| {
            s.stage.map(|st| {
                (0..n)
                    .map(|i| s.coefficient * (2.0 * std::f64::consts::PI * st.frequency as f64 * i as f64 / n as f64).sin())
                    .collect()
            })
        })
        .collect();
    let mut sup = 0.0f64;
    let mut spatial = 0.0f64;
    for p in profiles.iter().flatten() {
        sup = sup.max(p.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        spatial = spatial.max(holder_seminorm_1d(p, alpha)?);
    }
    let temporal: Vec<f64> = (0..times.len())
        .into_par_iter()
        .map(|i| {
            let mut m = 0.0f64;
            for j in i + 1..times.len() {
                let dt = times[j] - times[i];
                if dt > MAX_DISTANCE {
                    break;
                }
                if dt <= 0.0 {
                    continue;
                }
                let diff = slice_difference_sup(&slices[i], &profiles[i], &slices[j], &profiles[j]);
                m = m.max(diff / dt.powf(alpha));
            }
            m
        })
        .collect();
    let temporal = if temporal.is_empty() { 0.0 } else { max_of(&temporal) };
    Ok(NormReport {
        kind: NormKind::CalphaSpaceTime,
        value: sup + spatial.max(temporal),
        exponent: Some(alpha),
        resolution: n,
        refinement_ratio: None,
    })
}

fn slice_difference_sup(a: &ForceSlice, pa: &Option<Vec<f64>>, b: &ForceSlice, pb: &Option<Vec<f64>>) -> f64 {
    let sup = |p: &Option<Vec<f64>>| p.as_ref().map_or(0.0, |v| v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    match (a.stage, b.stage, pa, pb) {
        (Some(sa), Some(sb), Some(va), Some(vb)) if sa.direction == sb.direction => {
            va.iter().zip(vb).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        }
        (Some(_), Some(_), _, _) => sup(pa).hypot(sup(pb)),
        _ => sup(pa).max(sup(pb)),
    }
}
