//! Domain data types shared by every scoring module.
//!
//! All vector-valued math in this crate lays the ten domains out in the
//! fixed order of [`DomainId::ALL`]. Scores are stored normalized to `[0, 1]`;
//! conversion from native battery scales happens once, at ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lottery::{self, LotteryAudit};

/// Number of evaluation domains.
pub const N_DOMAINS: usize = 10;

/// One of the ten capability domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DomainId {
    /// General knowledge. Also covers comprehension-knowledge (Gc).
    #[serde(alias = "Gc")]
    K,
    RW,
    M,
    R,
    WM,
    MS,
    MR,
    V,
    A,
    S,
}

impl DomainId {
    /// Canonical order used for every vector layout.
    pub const ALL: [DomainId; N_DOMAINS] = [
        DomainId::K,
        DomainId::RW,
        DomainId::M,
        DomainId::R,
        DomainId::WM,
        DomainId::MS,
        DomainId::MR,
        DomainId::V,
        DomainId::A,
        DomainId::S,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            DomainId::K => "K",
            DomainId::RW => "RW",
            DomainId::M => "M",
            DomainId::R => "R",
            DomainId::WM => "WM",
            DomainId::MS => "MS",
            DomainId::MR => "MR",
            DomainId::V => "V",
            DomainId::A => "A",
            DomainId::S => "S",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DomainId::K => "General Knowledge",
            DomainId::RW => "Reading and Writing",
            DomainId::M => "Mathematics",
            DomainId::R => "Reasoning",
            DomainId::WM => "Working Memory",
            DomainId::MS => "Long-term Storage",
            DomainId::MR => "Long-term Retrieval",
            DomainId::V => "Visual Processing",
            DomainId::A => "Auditory Processing",
            DomainId::S => "Processing Speed",
        }
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for DomainId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            // Gc is an alias for general knowledge.
            "Gc" => Ok(DomainId::K),
            _ => DomainId::ALL
                .iter()
                .copied()
                .find(|d| d.code() == s)
                .ok_or_else(|| Error::Schema(format!("unknown domain `{s}`"))),
        }
    }
}

/// Normalized domain scores for one testing condition.
///
/// The map may be incomplete while a record is being validated; every
/// computation goes through [`DomainProfile::to_array`], which rejects
/// missing domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainProfile {
    pub label: String,
    pub scores: BTreeMap<DomainId, f64>,
}

impl DomainProfile {
    pub fn from_array(label: impl Into<String>, scores: [f64; N_DOMAINS]) -> Self {
        DomainProfile { label: label.into(), scores: DomainId::ALL.iter().copied().zip(scores).collect() }
    }

    /// Constant profile, handy in tests and synthetic agents.
    pub fn uniform(label: impl Into<String>, value: f64) -> Self {
        Self::from_array(label, [value; N_DOMAINS])
    }

    pub fn get(&self, domain: DomainId) -> Option<f64> {
        self.scores.get(&domain).copied()
    }

    /// Scores in canonical domain order.
    pub fn to_array(&self) -> Result<[f64; N_DOMAINS]> {
        let mut out = [0.0; N_DOMAINS];
        for d in DomainId::ALL {
            out[d.index()] =
                self.get(d).ok_or_else(|| Error::IncompleteProfile { label: self.label.clone(), domain: d })?;
        }
        Ok(out)
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(self.to_array()?.iter().sum::<f64>() / N_DOMAINS as f64)
    }

    /// A copy with every score multiplied by `factor` and clamped to `[0, 1]`.
    pub fn scaled(&self, label: impl Into<String>, factor: f64) -> Self {
        DomainProfile {
            label: label.into(),
            scores: self.scores.iter().map(|(d, v)| (*d, (v * factor).clamp(0.0, 1.0))).collect(),
        }
    }

    fn violations(&self, record: &str, out: &mut Vec<Violation>) {
        for d in DomainId::ALL {
            match self.get(d) {
                None => out.push(Violation::MissingDomain { record: record.to_string(), domain: d }),
                Some(v) if !in_unit(v) => out.push(Violation::ScoreOutOfRange {
                    record: record.to_string(),
                    position: d.code().to_string(),
                    value: v,
                }),
                Some(_) => {}
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PerturbationKind {
    TemporalDelay,
    ScaffoldRemoval,
    DistributionShift,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 3] =
        [PerturbationKind::TemporalDelay, PerturbationKind::ScaffoldRemoval, PerturbationKind::DistributionShift];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::TemporalDelay => "TemporalDelay",
            PerturbationKind::ScaffoldRemoval => "ScaffoldRemoval",
            PerturbationKind::DistributionShift => "DistributionShift",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Links a perturbation run to the lottery commitment that selected it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotteryDrawRef {
    pub family: PerturbationKind,
    /// Hex digest of the seed commitment.
    pub commitment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationRun {
    pub family: PerturbationKind,
    pub instance: String,
    pub profile: DomainProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drawn_by: Option<LotteryDrawRef>,
}

/// Teach-then-retest scores for one item. Delays are in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachRetestRecord {
    pub item_id: String,
    pub domain: DomainId,
    pub baseline_score: f64,
    pub delayed_scores: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackKind {
    Explicit,
    Implicit,
    Structured,
}

/// Error rates `e_1..e_K` over repeated attempts with feedback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorTrajectory {
    pub task_id: String,
    pub error_rates: Vec<f64>,
    pub feedback_kind: FeedbackKind,
}

/// Capability profiles under full, degraded and no scaffolds, plus the
/// stability measurements taken under the degraded condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaffoldTrial {
    pub scaffold: String,
    pub full: DomainProfile,
    pub degraded: DomainProfile,
    pub none: DomainProfile,
    /// Measured externally; computed from the three profiles when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pcsi_across_conditions: Option<f64>,
    /// Absolute dCSI under degraded scaffolds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dcsi_degraded: Option<f64>,
    pub dcsi_degraded_ratio: f64,
    pub ecsi_degraded_ratio: f64,
}

/// Everything recorded for one system over one battery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationBundle {
    pub system_id: String,
    pub created_at: DateTime<Utc>,
    /// Pre-registered retest delays in hours.
    pub registered_delays: Vec<u32>,
    pub baseline: DomainProfile,
    pub perturbations: Vec<PerturbationRun>,
    pub retention: Vec<TeachRetestRecord>,
    pub trajectories: Vec<ErrorTrajectory>,
    pub scaffold_trials: Vec<ScaffoldTrial>,
    pub lottery: Option<LotteryAudit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericGuards {
    /// Soft floor for the combined index and the eCSI denominators.
    pub eps_floor: f64,
    /// Correlations are clamped to `[-1 + c, 1 - c]` before `arctanh`.
    pub corr_clamp: f64,
    pub screening_floor: f64,
    pub screening_ceiling: f64,
    /// Minimum first-attempt error rate for an eCSI task to count.
    pub tau: f64,
}

impl Default for NumericGuards {
    fn default() -> Self {
        NumericGuards { eps_floor: 1e-6, corr_clamp: 1e-7, screening_floor: 0.1, screening_ceiling: 0.95, tau: 0.2 }
    }
}

impl NumericGuards {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidGuards(msg.to_string()));
        if !(self.eps_floor > 0.0 && self.eps_floor < 0.01) {
            return bad("eps_floor must lie in (0, 0.01)");
        }
        if !(self.corr_clamp > 0.0 && self.corr_clamp < 0.01) {
            return bad("corr_clamp must lie in (0, 0.01)");
        }
        if !(in_unit(self.screening_floor) && in_unit(self.screening_ceiling)) {
            return bad("screening bounds must lie in [0, 1]");
        }
        if self.screening_floor >= self.screening_ceiling {
            return bad("screening_floor must be below screening_ceiling");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        Ok(())
    }
}

/// A broken invariant in an [`EvaluationBundle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    MissingDomain { record: String, domain: DomainId },
    ScoreOutOfRange { record: String, position: String, value: f64 },
    EmptyId { record: String },
    DuplicateId { record: String },
    UnregisteredDelay { record: String, delay_hours: u32 },
    NonPositiveDelay { record: String },
    MissingDelayedScores { record: String },
    TooFewAttempts { record: String, attempts: usize },
    NegativeRatio { record: String, field: String, value: f64 },
    DrawFamilyMismatch { record: String, expected: PerturbationKind, found: PerturbationKind },
    UndrawnInstance { record: String, family: PerturbationKind, instance: String },
    IncompleteReveal,
    RevealMismatch,
    DrawMismatch { family: PerturbationKind },
    InvalidRegistry { reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingDomain { record, domain } => {
                write!(f, "{record}: missing domain {domain}")
            }
            Violation::ScoreOutOfRange { record, position, value } => {
                write!(f, "{record}: score at {position} = {value} is outside [0, 1]")
            }
            Violation::EmptyId { record } => write!(f, "{record}: empty identifier"),
            Violation::DuplicateId { record } => write!(f, "{record}: duplicate identifier"),
            Violation::UnregisteredDelay { record, delay_hours } => {
                write!(f, "{record}: delay {delay_hours}h is not pre-registered")
            }
            Violation::NonPositiveDelay { record } => write!(f, "{record}: delay must be > 0h"),
            Violation::MissingDelayedScores { record } => {
                write!(f, "{record}: no delayed scores recorded")
            }
            Violation::TooFewAttempts { record, attempts } => {
                write!(f, "{record}: {attempts} attempt(s), need at least 2")
            }
            Violation::NegativeRatio { record, field, value } => {
                write!(f, "{record}: {field} = {value} must be finite and >= 0")
            }
            Violation::DrawFamilyMismatch { record, expected, found } => {
                write!(f, "{record}: drawn_by family {found} does not match run family {expected}")
            }
            Violation::UndrawnInstance { record, family, instance } => {
                write!(f, "{record}: instance `{instance}` was not drawn for {family}")
            }
            Violation::IncompleteReveal => write!(f, "lottery: seed and salt must be revealed together"),
            Violation::RevealMismatch => write!(f, "lottery: revealed seed/salt do not match the commitment"),
            Violation::DrawMismatch { family } => {
                write!(f, "lottery: recorded draws for {family} differ from the seeded draw")
            }
            Violation::InvalidRegistry { reason } => write!(f, "lottery registry: {reason}"),
        }
    }
}

pub(crate) fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn check_id(id: &str, record: &str, seen: &mut BTreeSet<String>, out: &mut Vec<Violation>) {
    if id.trim().is_empty() {
        out.push(Violation::EmptyId { record: record.to_string() });
    } else if !seen.insert(id.to_string()) {
        out.push(Violation::DuplicateId { record: record.to_string() });
    }
}

/// Checks every type invariant of `bundle`. An empty list means the bundle
/// is well formed.
pub fn validate_bundle(bundle: &EvaluationBundle) -> Vec<Violation> {
    let mut out = Vec::new();

    if bundle.system_id.trim().is_empty() {
        out.push(Violation::EmptyId { record: "system_id".into() });
    }
    bundle.baseline.violations("baseline", &mut out);

    for (j, run) in bundle.perturbations.iter().enumerate() {
        let record = format!("perturbation[{j}] ({})", run.instance);
        run.profile.violations(&record, &mut out);
        if let Some(by) = &run.drawn_by {
            if by.family != run.family {
                out.push(Violation::DrawFamilyMismatch {
                    record: record.clone(),
                    expected: run.family,
                    found: by.family,
                });
            }
            if let Some(drawn) = bundle.lottery.as_ref().and_then(|l| l.draws.get(&run.family)) {
                if !drawn.contains(&run.instance) {
                    out.push(Violation::UndrawnInstance { record, family: run.family, instance: run.instance.clone() });
                }
            }
        }
    }

    for &d in &bundle.registered_delays {
        if d == 0 {
            out.push(Violation::NonPositiveDelay { record: "registered_delays".into() });
        }
    }
    let registered: BTreeSet<u32> = bundle.registered_delays.iter().copied().collect();
    let mut seen = BTreeSet::new();
    for rec in &bundle.retention {
        let record = format!("retention `{}`", rec.item_id);
        check_id(&rec.item_id, &record, &mut seen, &mut out);
        if !in_unit(rec.baseline_score) {
            out.push(Violation::ScoreOutOfRange {
                record: record.clone(),
                position: "baseline".into(),
                value: rec.baseline_score,
            });
        }
        if rec.delayed_scores.is_empty() {
            out.push(Violation::MissingDelayedScores { record: record.clone() });
        }
        for (&delay, &score) in &rec.delayed_scores {
            if delay == 0 {
                out.push(Violation::NonPositiveDelay { record: record.clone() });
            } else if !registered.contains(&delay) {
                out.push(Violation::UnregisteredDelay { record: record.clone(), delay_hours: delay });
            }
            if !in_unit(score) {
                out.push(Violation::ScoreOutOfRange {
                    record: record.clone(),
                    position: format!("{delay}h"),
                    value: score,
                });
            }
        }
    }

    let mut seen = BTreeSet::new();
    for traj in &bundle.trajectories {
        let record = format!("trajectory `{}`", traj.task_id);
        check_id(&traj.task_id, &record, &mut seen, &mut out);
        if traj.error_rates.len() < 2 {
            out.push(Violation::TooFewAttempts { record: record.clone(), attempts: traj.error_rates.len() });
        }
        for (k, &e) in traj.error_rates.iter().enumerate() {
            if !in_unit(e) {
                out.push(Violation::ScoreOutOfRange {
                    record: record.clone(),
                    position: format!("e_{}", k + 1),
                    value: e,
                });
            }
        }
    }

    let mut seen = BTreeSet::new();
    for trial in &bundle.scaffold_trials {
        let record = format!("scaffold `{}`", trial.scaffold);
        check_id(&trial.scaffold, &record, &mut seen, &mut out);
        trial.full.violations(&format!("{record} full"), &mut out);
        trial.degraded.violations(&format!("{record} degraded"), &mut out);
        trial.none.violations(&format!("{record} none"), &mut out);
        for (field, value) in
            [("pcsi_across_conditions", trial.pcsi_across_conditions), ("dcsi_degraded", trial.dcsi_degraded)]
        {
            if let Some(v) = value {
                if !in_unit(v) {
                    out.push(Violation::ScoreOutOfRange { record: record.clone(), position: field.into(), value: v });
                }
            }
        }
        for (field, value) in
            [("dcsi_degraded_ratio", trial.dcsi_degraded_ratio), ("ecsi_degraded_ratio", trial.ecsi_degraded_ratio)]
        {
            if !(value.is_finite() && value >= 0.0) {
                out.push(Violation::NegativeRatio { record: record.clone(), field: field.into(), value });
            }
        }
    }

    if let Some(audit) = &bundle.lottery {
        out.extend(lottery::audit_violations(audit));
    }

    out
}
