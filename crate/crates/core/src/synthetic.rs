//! Parametric synthetic agents whose stability indices are known in closed
//! form. They are the oracle the index implementations are checked against.
//!
//! Every random quantity comes from its own counter-derived stream, and the
//! number of draws never depends on the parameters. Two agents simulated
//! with the same seed therefore share noise (common random numbers).

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lottery::{splitmix, SessionSchedule};
use crate::model::{
    in_unit, DomainId, DomainProfile, ErrorTrajectory, EvaluationBundle, FeedbackKind, NumericGuards, PerturbationKind,
    PerturbationRun, ScaffoldTrial, TeachRetestRecord, N_DOMAINS,
};
use crate::stability;

/// Error added by one backslide event.
pub const BACKSLIDE_BUMP: f64 = 0.05;

/// Share of the scaffold removed in the degraded condition (context limited
/// to 20% of its maximum).
pub const DEGRADED_REMOVAL: f64 = 0.8;

/// Slack allowed when comparing a zero-noise measurement to its prediction.
pub const EXACT_TOL: f64 = 1e-12;

/// Half-width of the noisy bands, in standard deviations of the estimator.
pub const BAND_SDS: f64 = 3.0;

const MAX_ATTEMPTS: usize = 20;

const STREAM_PROFILE: u64 = 1;
const STREAM_RETENTION: u64 = 2;
const STREAM_TRAJECTORY: u64 = 3;
const STREAM_SCAFFOLD: u64 = 4;
const STREAM_RETENTION_DEGRADED: u64 = 5;
const STREAM_TRAJECTORY_DEGRADED: u64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentParams {
    pub system_id: String,
    pub base_profile: DomainProfile,
    /// Multiplicative retention per 24 hours.
    pub retention_per_day: f64,
    /// Fractional error reduction per feedback round.
    pub correction_step: f64,
    pub backslide_prob: f64,
    /// Fraction of each score supplied by the scaffold.
    pub scaffold_dependence: f64,
    pub profile_noise_sd: f64,
    #[serde(default = "default_retention_items")]
    pub retention_items: usize,
    #[serde(default = "default_tasks")]
    pub tasks: usize,
    #[serde(default = "default_attempts")]
    pub attempts: usize,
    #[serde(default = "default_initial_error")]
    pub initial_error: f64,
}

fn default_retention_items() -> usize {
    10
}
fn default_tasks() -> usize {
    10
}
fn default_attempts() -> usize {
    5
}
fn default_initial_error() -> f64 {
    0.8
}

impl AgentParams {
    pub fn new(system_id: impl Into<String>, base_profile: DomainProfile) -> Self {
        AgentParams {
            system_id: system_id.into(),
            base_profile,
            retention_per_day: 1.0,
            correction_step: 0.0,
            backslide_prob: 0.0,
            scaffold_dependence: 0.0,
            profile_noise_sd: 0.0,
            retention_items: default_retention_items(),
            tasks: default_tasks(),
            attempts: default_attempts(),
            initial_error: default_initial_error(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("retention_per_day", self.retention_per_day),
            ("correction_step", self.correction_step),
            ("backslide_prob", self.backslide_prob),
            ("scaffold_dependence", self.scaffold_dependence),
            ("initial_error", self.initial_error),
        ];
        for (name, v) in rates {
            if !in_unit(v) {
                return Err(Error::InvalidParams(format!("{}: {name} = {v} is outside [0, 1]", self.system_id)));
            }
        }
        if !(self.profile_noise_sd.is_finite() && self.profile_noise_sd >= 0.0) {
            return Err(Error::InvalidParams(format!("{}: profile_noise_sd must be nonnegative", self.system_id)));
        }
        if self.retention_items == 0 || self.tasks == 0 {
            return Err(Error::InvalidParams(format!("{}: need at least one item and one task", self.system_id)));
        }
        if !(2..=MAX_ATTEMPTS).contains(&self.attempts) {
            return Err(Error::InvalidParams(format!(
                "{}: attempts must be between 2 and {MAX_ATTEMPTS}",
                self.system_id
            )));
        }
        let base = self.base_profile.to_array()?;
        if base.iter().any(|v| !in_unit(*v)) {
            return Err(Error::InvalidParams(format!("{}: base profile scores must lie in [0, 1]", self.system_id)));
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed, id))
}

fn bad_instance(instance: &str) -> Error {
    Error::InvalidFamily(format!("cannot interpret instance `{instance}`"))
}

/// `delay=<hours>h`.
pub fn parse_delay_hours(instance: &str) -> Result<u32> {
    instance
        .strip_prefix("delay=")
        .and_then(|v| v.strip_suffix('h'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad_instance(instance))
}

/// Fraction of the scaffold taken away by a removal instance:
/// `context=N%` keeps N%, `*corrupt*=N%` removes N%, `=off` or `=none`
/// removes everything.
pub fn removal_fraction(instance: &str) -> Result<f64> {
    let (key, value) = instance.split_once('=').ok_or_else(|| bad_instance(instance))?;
    if value == "off" || value == "none" {
        return Ok(1.0);
    }
    let pct: f64 = value
        .strip_suffix('%')
        .and_then(|v| v.parse().ok())
        .filter(|p| (0.0..=100.0).contains(p))
        .ok_or_else(|| bad_instance(instance))?;
    if key.contains("corrupt") {
        Ok(pct / 100.0)
    } else if key == "context" {
        Ok(1.0 - pct / 100.0)
    } else {
        Err(bad_instance(instance))
    }
}

/// Multiplier the agent's true profile receives under one drawn instance.
pub fn perturbation_factor(p: &AgentParams, family: PerturbationKind, instance: &str) -> Result<f64> {
    Ok(match family {
        PerturbationKind::TemporalDelay => p.retention_per_day.powf(parse_delay_hours(instance)? as f64 / 24.0),
        PerturbationKind::ScaffoldRemoval => 1.0 - p.scaffold_dependence * removal_fraction(instance)?,
        PerturbationKind::DistributionShift => 1.0,
    })
}

fn noisy_profile(label: String, base: &[f64; N_DOMAINS], k: f64, sd: f64, rng: &mut ChaCha8Rng) -> DomainProfile {
    let scores = base.map(|a| {
        let z: f64 = rng.sample(StandardNormal);
        (k * a + sd * z).clamp(0.0, 1.0)
    });
    DomainProfile::from_array(label, scores)
}

fn item_domain(i: usize) -> DomainId {
    DomainId::ALL[i % N_DOMAINS]
}

fn retention_records(
    p: &AgentParams,
    base: &[f64; N_DOMAINS],
    delays: &[u32],
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<TeachRetestRecord> {
    (0..p.retention_items)
        .map(|i| {
            let domain = item_domain(i);
            let b = base[domain.index()];
            let delayed_scores = delays
                .iter()
                .map(|&d| {
                    let z: f64 = rng.sample(StandardNormal);
                    let mu = b * scale * p.retention_per_day.powf(d as f64 / 24.0);
                    (d, (mu + p.profile_noise_sd * z).clamp(0.0, 1.0))
                })
                .collect();
            TeachRetestRecord { item_id: format!("item-{i:03}"), domain, baseline_score: b, delayed_scores }
        })
        .collect()
}

/// `e_{k+1} = min(1, e_k (1 - step) + bump)`, with the bump applied on a
/// backslide event.
fn step_error(e: f64, step: f64, backslide: bool) -> f64 {
    let mut next = e * (1.0 - step);
    if backslide {
        next += BACKSLIDE_BUMP;
    }
    next.min(1.0)
}

fn trajectories(p: &AgentParams, step: f64, rng: &mut ChaCha8Rng) -> Vec<ErrorTrajectory> {
    (0..p.tasks)
        .map(|t| {
            let mut e = p.initial_error;
            let mut error_rates = vec![e];
            for _ in 1..p.attempts {
                let u: f64 = rng.random();
                e = step_error(e, step, u < p.backslide_prob);
                error_rates.push(e);
            }
            ErrorTrajectory { task_id: format!("task-{t:03}"), error_rates, feedback_kind: FeedbackKind::Structured }
        })
        .collect()
}

/// Degraded/baseline ratio; an index that is zero at baseline cannot drop
/// further, so that case counts as fully maintained.
fn ratio(degraded: f64, baseline: f64) -> f64 {
    if baseline > 0.0 {
        degraded / baseline
    } else {
        1.0
    }
}

/// Full, degraded and no-scaffold conditions for one agent. Under the
/// degraded scaffold both delayed recall and per-round correction shrink by
/// `1 - dependence * DEGRADED_REMOVAL`.
pub fn scaffold_trial(p: &AgentParams, delays: &[u32], seed: u64) -> Result<ScaffoldTrial> {
    p.validate()?;
    let base = p.base_profile.to_array()?;
    let dep = p.scaffold_dependence;
    let keep = 1.0 - dep * DEGRADED_REMOVAL;
    let sd = p.profile_noise_sd;
    let mut rng = stream(seed, STREAM_SCAFFOLD);
    let full = noisy_profile("full".into(), &base, 1.0, sd, &mut rng);
    let degraded = noisy_profile("degraded".into(), &base, keep, sd, &mut rng);
    let none = noisy_profile("none".into(), &base, 1.0 - dep, sd, &mut rng);

    let guards = NumericGuards::default();
    let ret = retention_records(p, &base, delays, 1.0, &mut stream(seed, STREAM_RETENTION));
    let ret_deg = retention_records(p, &base, delays, keep, &mut stream(seed, STREAM_RETENTION_DEGRADED));
    let (dcsi_degraded, dcsi_degraded_ratio) =
        match (stability::dcsi(&ret, delays, &guards), stability::dcsi(&ret_deg, delays, &guards)) {
            (Ok(b), Ok(d)) => (Some(d.dcsi), ratio(d.dcsi, b.dcsi)),
            _ => (None, 1.0),
        };
    let tr = trajectories(p, p.correction_step, &mut stream(seed, STREAM_TRAJECTORY));
    let tr_deg = trajectories(p, p.correction_step * keep, &mut stream(seed, STREAM_TRAJECTORY_DEGRADED));
    let ecsi_degraded_ratio = match (stability::ecsi(&tr, &guards), stability::ecsi(&tr_deg, &guards)) {
        (Ok(b), Ok(d)) => ratio(d.ecsi, b.ecsi),
        _ => 1.0,
    };

    Ok(ScaffoldTrial {
        scaffold: "synthetic".into(),
        full,
        degraded,
        none,
        pcsi_across_conditions: None,
        dcsi_degraded,
        dcsi_degraded_ratio,
        ecsi_degraded_ratio,
    })
}

/// One full battery run for the drawn instances and delays in `schedule`.
pub fn simulate_bundle(p: &AgentParams, schedule: &SessionSchedule, seed: u64) -> Result<EvaluationBundle> {
    p.validate()?;
    let base = p.base_profile.to_array()?;
    let mut rng = stream(seed, STREAM_PROFILE);
    let perturbations = schedule
        .drawn_instances()
        .into_iter()
        .map(|(family, instance)| {
            let k = perturbation_factor(p, family, &instance)?;
            let label = format!("{}:{instance}", family.name());
            Ok(PerturbationRun {
                family,
                profile: noisy_profile(label, &base, k, p.profile_noise_sd, &mut rng),
                instance,
                drawn_by: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EvaluationBundle {
        system_id: p.system_id.clone(),
        created_at: DateTime::<Utc>::UNIX_EPOCH,
        registered_delays: schedule.delays.clone(),
        baseline: DomainProfile { label: "baseline".into(), scores: p.base_profile.scores.clone() },
        perturbations,
        retention: retention_records(p, &base, &schedule.delays, 1.0, &mut stream(seed, STREAM_RETENTION)),
        trajectories: trajectories(p, p.correction_step, &mut stream(seed, STREAM_TRAJECTORY)),
        scaffold_trials: vec![scaffold_trial(p, &schedule.delays, seed)?],
        lottery: None,
    })
}

/// Simulates many agents in parallel; output order follows input order.
pub fn simulate_batch(agents: &[(AgentParams, u64)], schedule: &SessionSchedule) -> Vec<Result<EvaluationBundle>> {
    agents.par_iter().map(|(p, seed)| simulate_bundle(p, schedule, *seed)).collect()
}

/// A predicted index value with an acceptance interval. For zero-noise
/// agents `lo == hi == expected`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub expected: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    fn exact(v: f64) -> Self {
        Band { expected: v, lo: v, hi: v }
    }

    fn around(mean: f64, sd: f64) -> Self {
        Band { expected: mean, lo: mean - BAND_SDS * sd, hi: mean + BAND_SDS * sd }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo - EXACT_TOL && x <= self.hi + EXACT_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedIndices {
    pub pcsi: Option<Band>,
    /// Mean perturbation factor. Exact only without profile noise.
    pub level_shift: Option<f64>,
    pub dcsi: Option<Band>,
    pub ecsi: Option<Band>,
}

/// Mean and variance of `clamp(X, lo, hi)` for `X ~ N(mu, sd^2)`, `sd > 0`.
fn clamped_normal_moments(mu: f64, sd: f64, lo: f64, hi: f64) -> (f64, f64) {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let (a, b) = ((lo - mu) / sd, (hi - mu) / sd);
    let (ca, cb) = (n.cdf(a), n.cdf(b));
    let (pa, pb) = (n.pdf(a), n.pdf(b));
    let inside = cb - ca;
    let m1 = lo * ca + hi * (1.0 - cb) + mu * inside + sd * (pa - pb);
    let m2 = lo * lo * ca
        + hi * hi * (1.0 - cb)
        + mu * mu * inside
        + 2.0 * mu * sd * (pa - pb)
        + sd * sd * (inside + a * pa - b * pb);
    (m1, (m2 - m1 * m1).max(0.0))
}

fn expected_dcsi(p: &AgentParams, base: &[f64; N_DOMAINS], delays: &[u32], g: &NumericGuards) -> Option<Band> {
    if delays.is_empty() {
        return None;
    }
    let sd = p.profile_noise_sd;
    let mut means = Vec::new();
    let mut var_sum = 0.0;
    for i in 0..p.retention_items {
        let b = base[item_domain(i).index()];
        if b < g.screening_floor || b <= 0.0 || b > g.screening_ceiling {
            continue;
        }
        let mut item = 0.0;
        for &d in delays {
            let decay = p.retention_per_day.powf(d as f64 / 24.0);
            if sd == 0.0 {
                item += decay.min(1.0);
            } else {
                // The measured ratio is clamp(b * decay + noise, 0, b) / b.
                let (m, v) = clamped_normal_moments(b * decay, sd, 0.0, b);
                item += m / b;
                var_sum += v / (b * b);
            }
        }
        means.push(item / delays.len() as f64);
    }
    if means.is_empty() {
        return None;
    }
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let sd_est = var_sum.sqrt() / (delays.len() as f64 * n);
    Some(if sd == 0.0 { Band::exact(mean) } else { Band::around(mean, sd_est) })
}

/// Task-level index over every backslide pattern, weighted by probability.
fn expected_ecsi(p: &AgentParams, g: &NumericGuards) -> Option<Band> {
    if p.initial_error < g.tau {
        return None;
    }
    let steps = p.attempts - 1;
    let (mut m1, mut m2) = (0.0, 0.0);
    for pattern in 0u32..(1 << steps) {
        let mut prob = 1.0;
        let mut e = vec![p.initial_error];
        for k in 0..steps {
            let slide = pattern >> k & 1 == 1;
            prob *= if slide { p.backslide_prob } else { 1.0 - p.backslide_prob };
            let next = step_error(e[k], p.correction_step, slide);
            e.push(next);
        }
        if prob == 0.0 {
            continue;
        }
        let (mut up, mut total) = (0.0, 0.0);
        for w in e.windows(2) {
            let step = w[1] - w[0];
            up += step.max(0.0);
            total += step.abs();
        }
        let b = up / (total + g.eps_floor);
        let first = e[0];
        let i = ((first - e[steps]) / first.max(g.eps_floor)).max(0.0);
        let v = i * (1.0 - b.min(1.0));
        m1 += prob * v;
        m2 += prob * v * v;
    }
    let var_task = (m2 - m1 * m1).max(0.0);
    let deterministic = p.backslide_prob == 0.0 || p.backslide_prob == 1.0;
    Some(if deterministic { Band::exact(m1) } else { Band::around(m1, (var_task / p.tasks as f64).sqrt()) })
}

/// Fisher-z band for the profile index. A run with factor `k` and noise `s`
/// has population correlation `k S / sqrt(k^2 S^2 + (n - 1) s^2)` with the
/// baseline, where `S^2` is the baseline's centred sum of squares; its z has
/// bias `rho / (2 (n - 1))` and variance `1 / (n - 3)`.
fn expected_pcsi(base: &[f64; N_DOMAINS], factors: &[f64], sd: f64, g: &NumericGuards) -> Option<Band> {
    let n = N_DOMAINS as f64;
    let to_unit = |r: f64| (1.0 + r) / 2.0;
    if sd == 0.0 {
        // Pure scaling: every usable run correlates perfectly, which the
        // clamp caps at 1 - c.
        return factors.iter().any(|k| *k > 0.0).then(|| Band::exact(to_unit(1.0 - g.corr_clamp)));
    }
    let mean_a = base.iter().sum::<f64>() / n;
    let sxx: f64 = base.iter().map(|a| (a - mean_a).powi(2)).sum();
    if sxx == 0.0 || factors.is_empty() {
        return None;
    }
    let zs: Vec<f64> = factors
        .iter()
        .map(|&k| {
            let rho = (k * sxx.sqrt() / (k * k * sxx + (n - 1.0) * sd * sd).sqrt()).min(1.0 - g.corr_clamp);
            rho.atanh() + rho / (2.0 * (n - 1.0))
        })
        .collect();
    let m = zs.len() as f64;
    let z = zs.iter().sum::<f64>() / m;
    let half = BAND_SDS / ((n - 3.0) * m).sqrt();
    Some(Band { expected: to_unit(z.tanh()), lo: to_unit((z - half).tanh()), hi: to_unit((z + half).tanh()) })
}

/// Analytic predictions for what [`simulate_bundle`] will measure. The
/// noisy bands assume profile noise rarely pushes a score past 0 or 1.
pub fn expected_indices(
    p: &AgentParams,
    schedule: &SessionSchedule,
    guards: &NumericGuards,
) -> Result<ExpectedIndices> {
    p.validate()?;
    let base = p.base_profile.to_array()?;
    let factors =
        schedule.drawn_instances().iter().map(|(f, i)| perturbation_factor(p, *f, i)).collect::<Result<Vec<_>>>()?;
    let level_shift = (p.profile_noise_sd == 0.0 && !factors.is_empty())
        .then(|| factors.iter().map(|k| k.min(1.0)).sum::<f64>() / factors.len() as f64);
    Ok(ExpectedIndices {
        pcsi: expected_pcsi(&base, &factors, p.profile_noise_sd, guards),
        level_shift,
        dcsi: expected_dcsi(p, &base, &schedule.delays, guards),
        ecsi: expected_ecsi(p, guards),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classification::{classify_scaffold, ScaffoldThresholds, ScaffoldTriplet, Verdict};
    use crate::lottery::{build_schedule, draw, PerturbationFamily};
    use crate::weighting::WeightVector;
    use proptest::prelude::*;

    const SHAPE: [f64; N_DOMAINS] = [0.8, 0.75, 0.7, 0.85, 0.72, 0.45, 0.5, 0.68, 0.6, 0.9];

    fn schedule(seed: u64) -> SessionSchedule {
        let fams = vec![
            PerturbationFamily {
                family: PerturbationKind::TemporalDelay,
                instances: vec!["delay=24h".into(), "delay=72h".into(), "delay=168h".into()],
                draws_per_family: 1,
            },
            PerturbationFamily {
                family: PerturbationKind::ScaffoldRemoval,
                instances: vec!["context=10%".into(), "rag_corrupt=30%".into(), "rag=off".into()],
                draws_per_family: 2,
            },
            PerturbationFamily {
                family: PerturbationKind::DistributionShift,
                instances: vec!["rephrase=lexical".into(), "rephrase=syntactic".into()],
                draws_per_family: 1,
            },
        ];
        build_schedule(&draw(&fams, seed).unwrap(), &[24, 72, 168]).unwrap()
    }

    fn agent() -> AgentParams {
        AgentParams::new("agent", DomainProfile::from_array("base", SHAPE))
    }

    fn measured(b: &EvaluationBundle) -> (f64, f64, f64, f64) {
        let g = NumericGuards::default();
        let p = stability::pcsi(&b.baseline, &b.perturbations, &WeightVector::equal(), &g, 50, 0).unwrap();
        let d = stability::dcsi(&b.retention, &b.registered_delays, &g).unwrap();
        let e = stability::ecsi(&b.trajectories, &g).unwrap();
        (p.pcsi, p.level_shift, d.dcsi, e.ecsi)
    }

    #[test]
    fn descriptors() {
        assert_eq!(parse_delay_hours("delay=72h").unwrap(), 72);
        assert!(parse_delay_hours("delay=3d").is_err());
        assert!((removal_fraction("context=20%").unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(removal_fraction("rag_corrupt=30%").unwrap(), 0.3);
        assert_eq!(removal_fraction("rag=off").unwrap(), 1.0);
        assert_eq!(removal_fraction("tools=none").unwrap(), 1.0);
        assert!(removal_fraction("tools=weaker").is_err());
        assert!(removal_fraction("context=120%").is_err());
    }

    #[test]
    fn no_forgetting() {
        let b = simulate_bundle(&agent(), &schedule(1), 9).unwrap();
        assert!(b.retention.iter().all(|r| r.delayed_scores.values().all(|s| *s == r.baseline_score)));
        assert_eq!(measured(&b).2, 1.0);
    }

    #[test]
    fn retention_closed_form() {
        let p = AgentParams { retention_per_day: 0.9, ..agent() };
        let b = simulate_bundle(&p, &schedule(1), 9).unwrap();
        // (0.9 + 0.9^3 + 0.9^7) / 3 = 0.7024323 (Python)
        let expected = 0.702_432_3;
        assert!((measured(&b).2 - expected).abs() < 1e-12);
        let e = expected_indices(&p, &schedule(1), &NumericGuards::default()).unwrap();
        assert!((e.dcsi.unwrap().expected - expected).abs() < 1e-12);
    }

    #[test]
    fn scaffold_free_agent_is_compensatory() {
        let t = scaffold_trial(&AgentParams { retention_per_day: 0.95, correction_step: 0.3, ..agent() }, &[24, 72], 3)
            .unwrap();
        let trip = ScaffoldTriplet::from_trial(&t, &NumericGuards::default()).unwrap();
        assert!(trip.pcsi_across_conditions > 0.999);
        assert_eq!(trip.full_pp, trip.none_pp);
        assert_eq!(classify_scaffold(&trip, &ScaffoldThresholds::default()).verdict, Verdict::Compensatory);
    }

    #[test]
    fn zero_noise_matches_prediction() {
        let g = NumericGuards::default();
        for (ret, step, slide, dep) in [(0.9, 0.3, 0.0, 0.5), (0.7, 0.1, 1.0, 0.0), (1.0, 0.5, 0.0, 1.0)] {
            let p = AgentParams {
                retention_per_day: ret,
                correction_step: step,
                backslide_prob: slide,
                scaffold_dependence: dep,
                ..agent()
            };
            let s = schedule(5);
            let (pc, lvl, d, e) = measured(&simulate_bundle(&p, &s, 11).unwrap());
            let x = expected_indices(&p, &s, &g).unwrap();
            assert!(x.pcsi.unwrap().contains(pc), "{pc} {:?}", x.pcsi);
            assert!((x.level_shift.unwrap() - lvl).abs() < EXACT_TOL);
            assert!(x.dcsi.unwrap().contains(d));
            assert!(x.ecsi.unwrap().contains(e));
        }
    }

    #[test]
    fn stuck_learner_scores_zero() {
        let p = AgentParams { backslide_prob: 1.0, correction_step: 0.0, ..agent() };
        let x = expected_indices(&p, &schedule(1), &NumericGuards::default()).unwrap();
        assert_eq!(x.ecsi.unwrap().expected, 0.0);
        assert_eq!(measured(&simulate_bundle(&p, &schedule(1), 4).unwrap()).3, 0.0);
    }

    #[test]
    fn clamped_normal_moments_limits() {
        // Far inside the bounds the clamp does nothing.
        let (m, v) = clamped_normal_moments(0.5, 0.01, 0.0, 1.0);
        assert!((m - 0.5).abs() < 1e-12);
        assert!((v - 1e-4).abs() < 1e-12);
        // Centred on the upper bound: mean = hi - sd * phi(0).
        let (m, _) = clamped_normal_moments(1.0, 0.1, 0.0, 1.0);
        assert!((m - (1.0 - 0.1 * 0.398_942_280_401_432_7)).abs() < 1e-9);
    }

    #[test]
    fn batch_is_ordered_and_deterministic() {
        let agents: Vec<_> = (0..6)
            .map(|i| (AgentParams { profile_noise_sd: 0.02, backslide_prob: 0.2, correction_step: 0.2, ..agent() }, i))
            .collect();
        let s = schedule(2);
        let a = simulate_batch(&agents, &s);
        let b: Vec<_> = agents.iter().map(|(p, seed)| simulate_bundle(p, &s, *seed)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn p3_signature() {
        let s = schedule(3);
        for (dep, want) in [
            (0.6, Verdict::Contorted),
            (0.8, Verdict::Contorted),
            (0.1, Verdict::Compensatory),
            (0.2, Verdict::Compensatory),
        ] {
            let p = AgentParams {
                scaffold_dependence: dep,
                retention_per_day: 0.98,
                correction_step: 0.3,
                profile_noise_sd: 0.01,
                ..agent()
            };
            let t = scaffold_trial(&p, &s.delays, 21).unwrap();
            let trip = ScaffoldTriplet::from_trial(&t, &NumericGuards::default()).unwrap();
            assert_eq!(classify_scaffold(&trip, &ScaffoldThresholds::default()).verdict, want, "dep {dep}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn retention_is_monotone_under_common_noise(r in 0.3f64..0.99, bump in 0.0f64..0.3, sd in 0.0f64..0.05, seed: u64) {
            let s = schedule(7);
            let g = NumericGuards::default();
            let lo = AgentParams { retention_per_day: r, profile_noise_sd: sd, ..agent() };
            let hi = AgentParams { retention_per_day: (r + bump).min(1.0), ..lo.clone() };
            let d = |p: &AgentParams| {
                let b = simulate_bundle(p, &s, seed).unwrap();
                stability::dcsi(&b.retention, &b.registered_delays, &g).unwrap().dcsi
            };
            prop_assert!(d(&hi) >= d(&lo));
        }
    }
}
