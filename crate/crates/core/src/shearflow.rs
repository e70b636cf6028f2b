//! Alternating shear schedule.
//!
//! Every level `q < Q` contributes a vertical and then a horizontal shear
//! inside `I_q`, mirrored with opposite sign inside `J_q`, so that
//! `u(t, x) = -u(2 - t, x)`. A stage evaluates to
//! `W(t, y) = A χ(t) sin(2π f y)` with `A = ±a_q^{1-γ}` and
//! `f = round(λ_{q+1})`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::cascade::ScaleSequences;
use crate::error::{AdlabError, Result};
use crate::jet::Jet;
use crate::quadrature::GaussLegendre;

/// Bound on `sup|u| / a_q^{1-γ}` over any stage of level `q`.
pub const VELOCITY_CONSTANT: f64 = 1.0;

const STEP_FLAT: f64 = 0.002;

/// Smooth monotone step on `[0, 1]`: `1 / (1 + exp(1/x - 1/(1-x)))`, flattened
/// to exactly 0 and 1 near the ends.
pub fn step(x: f64) -> f64 {
    if x <= STEP_FLAT {
        0.0
    } else if x >= 1.0 - STEP_FLAT {
        1.0
    } else {
        let g = 1.0 / x - 1.0 / (1.0 - x);
        if x < 0.5 {
            let e = (-g).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + g.exp())
        }
    }
}

fn step_jet(x: f64) -> Jet<5> {
    if x <= STEP_FLAT {
        Jet::constant(0.0)
    } else if x >= 1.0 - STEP_FLAT {
        Jet::constant(1.0)
    } else {
        let one = Jet::constant(1.0);
        let xj = Jet::<5>::variable(x);
        let g = xj.recip() - (one - xj).recip();
        if x < 0.5 {
            let e = (-g).exp();
            e * (one + e).recip()
        } else {
            (one + g.exp()).recip()
        }
    }
}

/// Normalized envelope on `[0, 1]`: rises on the first quarter, equals one
/// on the middle half and falls on the last quarter. Zero outside.
pub fn envelope(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else if s < 0.25 {
        step(4.0 * s)
    } else if s <= 0.75 {
        1.0
    } else {
        step(4.0 - 4.0 * s)
    }
}

/// Envelope value and its first four derivatives in `s`.
pub fn envelope_jet(s: f64) -> Jet<5> {
    if s <= 0.0 || s >= 1.0 {
        Jet::constant(0.0)
    } else if s < 0.25 {
        step_jet(4.0 * s).chain_affine(4.0)
    } else if s <= 0.75 {
        Jet::constant(1.0)
    } else {
        step_jet(4.0 - 4.0 * s).chain_affine(-4.0)
    }
}

fn quadrature() -> &'static GaussLegendre {
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(16))
}

/// `∫_0^y step` for `y ∈ [0, 1]`.
fn step_integral(y: f64) -> f64 {
    let y = y.clamp(0.0, 1.0);
    if y > 0.5 {
        return y - 0.5 + step_integral(1.0 - y);
    }
    if y <= STEP_FLAT {
        return 0.0;
    }
    quadrature().integrate_composite(STEP_FLAT, y, 16, step)
}

/// `Ψ(s) = ∫_0^s envelope`, with `Ψ(1) = 3/4`.
pub fn envelope_integral(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s <= 0.25 {
        0.25 * step_integral(4.0 * s)
    } else if s <= 0.75 {
        0.125 + (s - 0.25)
    } else if s < 1.0 {
        0.75 - 0.25 * step_integral(4.0 - 4.0 * s)
    } else {
        0.75
    }
}

/// `sup |envelope^{(l)}|` for `l = 0..=4`, from dense sampling of the
/// analytic derivatives.
pub fn envelope_sup(l: usize) -> f64 {
    static SUP: OnceLock<[f64; 5]> = OnceLock::new();
    SUP.get_or_init(|| {
        let mut sup = [0.0f64; 5];
        let m = 200_000;
        for i in 0..=m {
            let y = i as f64 / m as f64;
            let d = step_jet(y).derivatives();
            let mut p = 1.0;
            for (k, s) in sup.iter_mut().enumerate() {
                *s = s.max(d[k].abs() * p);
                p *= 4.0;
            }
        }
        sup
    })[l]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `u = (W(t, x₂), 0)`.
    Horizontal,
    /// `u = (0, W(t, x₁))`.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearStage {
    pub direction: Direction,
    pub level: usize,
    /// Closed support window `[start, start + width]`.
    pub start: f64,
    pub width: f64,
    /// Signed amplitude; negative on the mirrored half.
    pub amplitude: f64,
    pub frequency: u32,
}

impl ShearStage {
    pub fn end(&self) -> f64 {
        self.start + self.width
    }

    pub fn window(&self) -> (f64, f64) {
        (self.start, self.end())
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end()
    }

    fn local(&self, t: f64) -> f64 {
        (t - self.start) / self.width
    }

    pub fn envelope(&self, t: f64) -> f64 {
        envelope(self.local(t))
    }

    /// `χ` and its time derivatives up to order four.
    pub fn envelope_jet(&self, t: f64) -> Jet<5> {
        envelope_jet(self.local(t)).chain_affine(1.0 / self.width)
    }

    pub fn profile(&self, y: f64) -> f64 {
        (2.0 * PI * self.frequency as f64 * y).sin()
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.frequency as f64
    }

    pub fn value(&self, t: f64, y: f64) -> f64 {
        self.amplitude * self.envelope(t) * self.profile(y)
    }

    /// `A ∫_{t0}^{t1} χ`, the coefficient of `sin(2π f y)` in the displacement.
    pub fn displacement(&self, t0: f64, t1: f64) -> f64 {
        let s0 = self.local(t0).clamp(0.0, 1.0);
        let s1 = self.local(t1).clamp(0.0, 1.0);
        self.amplitude * self.width * (envelope_integral(s1) - envelope_integral(s0))
    }

    /// `sup |∂_t^l ∇^k u|` over the stage.
    pub fn derivative_sup(&self, k: usize, l: usize) -> f64 {
        self.amplitude.abs() * self.wavenumber().powi(k as i32) * envelope_sup(l) / self.width.powi(l as i32)
    }
}

/// Sub-stage placement inside each interval, as fractions of its length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageLayout {
    pub margin_fraction: f64,
}

impl Default for StageLayout {
    fn default() -> Self {
        StageLayout { margin_fraction: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearSchedule {
    pub stages: Vec<ShearStage>,
    pub sequences: ScaleSequences,
    pub profile: Profile,
    pub layout: StageLayout,
}

pub fn build_schedule(sequences: &ScaleSequences, profile: Profile) -> Result<ShearSchedule> {
    ShearSchedule::build(sequences, profile, StageLayout::default())
}

impl ShearSchedule {
    pub fn build(sequences: &ScaleSequences, profile: Profile, layout: StageLayout) -> Result<Self> {
        let m = layout.margin_fraction;
        if !(m > 0.0 && m < 1.0 / 3.0) {
            return Err(AdlabError::OutOfRange {
                name: "margin_fraction",
                value: m,
                range: "(0, 1/3)",
            });
        }
        let seq = sequences;
        let mut first = Vec::new();
        let mut mirrored = Vec::new();
        for q in 0..seq.depth {
            let (lo, hi) = seq.interval_i(q as isize);
            let len = hi - lo;
            let margin = m * len;
            let width = 0.5 * (len - 3.0 * margin);
            if !(width > 0.0) {
                return Err(AdlabError::Schedule {
                    level: q,
                    reason: format!("interval length {len} leaves no room for two stages"),
                });
            }
            let measure = 4.0 * width;
            let budget = seq.support_budget(q);
            if measure > budget {
                return Err(AdlabError::Schedule {
                    level: q,
                    reason: format!("support measure {measure} exceeds budget {budget}"),
                });
            }
            let amplitude = seq.a[q].powf(1.0 - seq.gamma);
            let frequency = seq.stage_frequency(q);
            let starts = [lo + margin, lo + 2.0 * margin + width];
            for (start, direction) in starts.into_iter().zip([Direction::Vertical, Direction::Horizontal]) {
                let stage = ShearStage {
                    direction,
                    level: q,
                    start,
                    width,
                    amplitude,
                    frequency,
                };
                mirrored.push(ShearStage {
                    start: 2.0 - stage.end(),
                    amplitude: -amplitude,
                    ..stage.clone()
                });
                first.push(stage);
            }
        }
        mirrored.reverse();
        first.extend(mirrored);
        Ok(ShearSchedule {
            stages: first,
            sequences: seq.clone(),
            profile,
            layout,
        })
    }

    pub fn depth(&self) -> usize {
        self.sequences.depth
    }

    pub fn active_stage(&self, t: f64) -> Option<&ShearStage> {
        self.stages.iter().find(|s| s.contains(t))
    }

    pub fn stages_at_level(&self, q: usize) -> impl Iterator<Item = &ShearStage> {
        self.stages.iter().filter(move |s| s.level == q)
    }

    /// Total window length of level `q` stages over `I_q ∪ J_q`.
    pub fn support_measure(&self, q: usize) -> f64 {
        self.stages_at_level(q).map(|s| s.width).sum()
    }

    pub fn velocity_at(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        stage_velocity(self.active_stage(t), t, x)
    }

    pub fn sample_velocity(&self, t: f64, n: usize) -> VelocitySample {
        sample_stage(self.active_stage(t), t, n)
    }
}

fn stage_velocity(stage: Option<&ShearStage>, t: f64, x: [f64; 2]) -> [f64; 2] {
    match stage {
        None => [0.0, 0.0],
        Some(s) => match s.direction {
            Direction::Horizontal => [s.value(t, x[1]), 0.0],
            Direction::Vertical => [0.0, s.value(t, x[0])],
        },
    }
}

fn sample_stage(stage: Option<&ShearStage>, t: f64, n: usize) -> VelocitySample {
    match stage {
        Some(s) if s.envelope(t) != 0.0 => VelocitySample {
            t,
            direction: Some(s.direction),
            level: Some(s.level),
            values: (0..n).map(|i| s.value(t, i as f64 / n as f64)).collect(),
        },
        _ => VelocitySample {
            t,
            direction: None,
            level: None,
            values: vec![0.0; n],
        },
    }
}

/// Profile `W(t, ·)` on `n` grid points of the transverse coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    pub t: f64,
    pub direction: Option<Direction>,
    pub level: Option<usize>,
    pub values: Vec<f64>,
}

impl VelocitySample {
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn to_csv(&self) -> String {
        let n = self.values.len();
        let mut out = String::from("index,y,W\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{:.17e},{:.17e}\n", i as f64 / n as f64, v));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityRow {
    pub level: usize,
    pub k: usize,
    pub l: usize,
    pub measured: f64,
    pub scale: f64,
    pub ratio: f64,
}

/// Ratios `sup|∂_t^l ∇^k u| / (a_q^{1-γ} a_{q+1}^{-k(1+εδ)} a_q^{-lγ})` over
/// the level `q` stages.
pub fn verify_regularity(schedule: &ShearSchedule, q: usize, k_max: usize, l_max: usize) -> Result<Vec<RegularityRow>> {
    if k_max > 4 || l_max > 4 {
        return Err(AdlabError::Invalid(format!(
            "derivative orders ({k_max}, {l_max}) exceed 4"
        )));
    }
    let seq = &schedule.sequences;
    if q >= seq.depth {
        return Err(AdlabError::Invalid(format!("level {q} beyond depth {}", seq.depth)));
    }
    let (g, e, d) = (seq.gamma, seq.epsilon, seq.delta);
    let mut rows = Vec::new();
    for k in 0..=k_max {
        for l in 0..=l_max {
            let ln_scale = (1.0 - g) * seq.a[q].ln() - k as f64 * (1.0 + e * d) * seq.a[q + 1].ln()
                - l as f64 * g * seq.a[q].ln();
            let scale = ln_scale.exp();
            let measured = schedule
                .stages_at_level(q)
                .map(|s| s.derivative_sup(k, l))
                .fold(0.0, f64::max);
            rows.push(RegularityRow {
                level: q,
                k,
                l,
                measured,
                scale,
                ratio: measured / scale,
            });
        }
    }
    Ok(rows)
}

/// `u_q = u · 1_{K_q}`: keeps only stages of level below `q_cut`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedField {
    pub schedule: Arc<ShearSchedule>,
    pub q_cut: usize,
}

pub fn truncate(schedule: &Arc<ShearSchedule>, q: usize) -> Result<TruncatedField> {
    if q > schedule.depth() {
        return Err(AdlabError::OutOfRange {
            name: "q",
            value: q as f64,
            range: "[0, Q]",
        });
    }
    Ok(TruncatedField {
        schedule: Arc::clone(schedule),
        q_cut: q,
    })
}

impl TruncatedField {
    pub fn full(schedule: &Arc<ShearSchedule>) -> Self {
        TruncatedField {
            schedule: Arc::clone(schedule),
            q_cut: schedule.depth(),
        }
    }

    pub fn stages(&self) -> impl Iterator<Item = &ShearStage> {
        self.schedule.stages.iter().filter(move |s| s.level < self.q_cut)
    }

    pub fn active_stage(&self, t: f64) -> Option<&ShearStage> {
        self.schedule.active_stage(t).filter(|s| s.level < self.q_cut)
    }

    /// Whether `t ∈ K_q = [0, 1 - T_q] ∪ [1 + T_q, 2]`.
    pub fn in_k(&self, t: f64) -> bool {
        let tq = self.schedule.sequences.time(self.q_cut as isize);
        t <= 1.0 - tq || t >= 1.0 + tq
    }

    pub fn velocity_at(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        stage_velocity(self.active_stage(t), t, x)
    }

    pub fn sample_velocity(&self, t: f64, n: usize) -> VelocitySample {
        sample_stage(self.active_stage(t), t, n)
    }

    pub fn finest_level(&self) -> Option<usize> {
        self.stages().map(|s| s.level).max()
    }

    pub fn resolution_floor(&self) -> usize {
        match self.finest_level() {
            Some(q) => self.schedule.sequences.resolution_floor(q),
            None => 8,
        }
    }

    /// Label recorded in trajectories for provenance checks.
    pub fn label(&self) -> String {
        let s = &self.schedule.sequences;
        format!(
            "shear:q_cut={};depth={};a0={:e};delta={:e};gamma={:e};t0={:e}",
            self.q_cut,
            s.depth,
            s.a0,
            s.delta,
            s.gamma,
            s.t[0]
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{build_sequences, CascadeParams};
    use proptest::prelude::*;

    fn schedule() -> Arc<ShearSchedule> {
        let seq = build_sequences(&CascadeParams::desk_scale()).unwrap();
        Arc::new(build_schedule(&seq, Profile::Sine).unwrap())
    }

    #[test]
    fn step_is_antisymmetric_about_half() {
        for i in 1..100 {
            let x = i as f64 / 100.0;
            assert!((step(x) + step(1.0 - x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(step(0.5), 0.5);
    }

    #[test]
    fn step_integral_matches_fine_simpson() {
        let m = 200_000;
        let y = 0.37;
        let h = y / m as f64;
        let mut s = step(0.0) + step(y);
        for i in 1..m {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * step(i as f64 * h);
        }
        let simpson = s * h / 3.0;
        assert!((step_integral(y) - simpson).abs() < 1e-13);
        assert!((step_integral(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn envelope_integral_is_consistent_with_envelope() {
        assert_eq!(envelope_integral(1.0), 0.75);
        let gl = GaussLegendre::new(20);
        for &(a, b) in &[(0.0, 0.1), (0.05, 0.3), (0.6, 0.9), (0.8, 1.0)] {
            let direct = gl.integrate_composite(a, b, 200, envelope);
            let via = envelope_integral(b) - envelope_integral(a);
            assert!((direct - via).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn envelope_derivatives_match_finite_differences() {
        let h = 1e-4;
        for &s in &[0.1, 0.2, 0.8, 0.93] {
            let j = envelope_jet(s).derivatives();
            let fd1 = (envelope(s + h) - envelope(s - h)) / (2.0 * h);
            let fd2 = (envelope(s + h) - 2.0 * envelope(s) + envelope(s - h)) / (h * h);
            assert!((j[1] - fd1).abs() < 1e-5 * (1.0 + fd1.abs()));
            assert!((j[2] - fd2).abs() < 1e-3 * (1.0 + fd2.abs()));
        }
    }

    #[test]
    fn envelope_sup_is_one_for_values() {
        assert_eq!(envelope_sup(0), 1.0);
        assert!(envelope_sup(1) > 4.0);
    }

    #[test]
    fn stages_alternate_and_mirror() {
        let s = schedule();
        let n = s.stages.len();
        assert_eq!(n, 4 * s.depth());
        for w in s.stages.windows(2) {
            assert!(w[0].end() < w[1].start);
            if w[0].level == w[1].level && (w[0].start - 1.0) * (w[1].start - 1.0) > 0.0 {
                assert_ne!(w[0].direction, w[1].direction);
            }
        }
        for i in 0..n / 2 {
            let (a, b) = (&s.stages[i], &s.stages[n - 1 - i]);
            assert_eq!(a.width, b.width);
            assert_eq!(a.amplitude, -b.amplitude);
            assert_eq!(a.direction, b.direction);
        }
    }

    #[test]
    fn support_avoids_outer_intervals() {
        let s = schedule();
        let t0 = s.sequences.t[0];
        for st in &s.stages {
            assert!(st.start > 1.0 - t0 && st.end() < 1.0 + t0);
        }
    }

    #[test]
    fn zero_near_interval_endpoints() {
        let s = schedule();
        for q in 0..=s.depth() {
            let tq = s.sequences.time(q as isize);
            for &t in &[1.0 - tq, 1.0 + tq] {
                for d in [-1e-6, 0.0, 1e-6] {
                    assert!(s.sample_velocity(t + d, 32).is_zero());
                }
            }
        }
    }

    #[test]
    fn truncation_zero_and_full() {
        let s = schedule();
        let u0 = truncate(&s, 0).unwrap();
        assert_eq!(u0.stages().count(), 0);
        let uq = truncate(&s, s.depth()).unwrap();
        assert_eq!(uq.stages().count(), s.stages.len());
        assert!(truncate(&s, s.depth() + 1).is_err());
    }

    #[test]
    fn regularity_rejects_high_orders() {
        assert!(verify_regularity(&schedule(), 0, 5, 0).is_err());
    }

    proptest! {
        #[test]
        fn reflection_antisymmetry(t in 1.0f64..2.0, x1 in 0.0f64..1.0, x2 in 0.0f64..1.0) {
            let s = schedule();
            let a = s.velocity_at(t, [x1, x2]);
            let b = s.velocity_at(2.0 - t, [x1, x2]);
            prop_assert!((a[0] + b[0]).abs() < 1e-12);
            prop_assert!((a[1] + b[1]).abs() < 1e-12);
        }

        #[test]
        fn truncation_agrees_on_k(t in 0.0f64..2.0, q in 0usize..5, x in 0.0f64..1.0) {
            let s = schedule();
            let uq = truncate(&s, q).unwrap();
            let v = uq.velocity_at(t, [x, x]);
            if uq.in_k(t) {
                prop_assert_eq!(v, s.velocity_at(t, [x, x]));
            } else {
                prop_assert_eq!(v, [0.0, 0.0]);
            }
        }

        #[test]
        fn displacement_is_additive(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            let s = schedule();
            let st = &s.stages[3];
            let t = |u: f64| st.start + u * st.width;
            let whole = st.displacement(t(a), t(c));
            let split = st.displacement(t(a), t(b)) + st.displacement(t(b), t(c));
            prop_assert!((whole - split).abs() < 1e-14);
        }
    }
}
