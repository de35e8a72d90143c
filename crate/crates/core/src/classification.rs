//! Scaffold verdicts (compensatory vs. contorted) and governance tiers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NumericGuards, ScaffoldTrial};
use crate::stability::{fisher_aggregate, profile_similarity, CsiResult, SimilarityMeasure};

/// Inputs to the scaffold rule table. Condition means are in percentage
/// points, matching how the rule thresholds are phrased.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldTriplet {
    pub scaffold: String,
    pub full_pp: f64,
    pub degraded_pp: f64,
    pub none_pp: f64,
    pub pcsi_across_conditions: f64,
    pub dcsi_degraded_ratio: f64,
    pub ecsi_degraded_ratio: f64,
    pub dcsi_degraded: Option<f64>,
}

impl ScaffoldTriplet {
    /// Reduces a recorded trial. A missing `pcsi_across_conditions` is
    /// computed against the full-scaffold profile, Pearson on equal weights.
    pub fn from_trial(trial: &ScaffoldTrial, guards: &NumericGuards) -> Result<Self> {
        let pcsi = match trial.pcsi_across_conditions {
            Some(p) => p,
            None => {
                let rs = [
                    profile_similarity(&trial.full, &trial.degraded, SimilarityMeasure::Pearson)?,
                    profile_similarity(&trial.full, &trial.none, SimilarityMeasure::Pearson)?,
                ];
                (1.0 + fisher_aggregate(&rs, guards.corr_clamp)?) / 2.0
            }
        };
        Ok(ScaffoldTriplet {
            scaffold: trial.scaffold.clone(),
            full_pp: 100.0 * trial.full.mean()?,
            degraded_pp: 100.0 * trial.degraded.mean()?,
            none_pp: 100.0 * trial.none.mean()?,
            pcsi_across_conditions: pcsi,
            dcsi_degraded_ratio: trial.dcsi_degraded_ratio,
            ecsi_degraded_ratio: trial.ecsi_degraded_ratio,
            dcsi_degraded: trial.dcsi_degraded,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaffoldThresholds {
    /// Largest per-step drop, in points, still counted as graceful.
    pub max_step_drop_pp: f64,
    pub min_pcsi_compensatory: f64,
    /// Degraded dCSI and eCSI must stay at or above this share of baseline.
    pub min_degraded_ratio: f64,
    pub catastrophic_drop_pp: f64,
    pub max_pcsi_contorted: f64,
    pub max_dcsi_contorted: f64,
}

impl Default for ScaffoldThresholds {
    fn default() -> Self {
        ScaffoldThresholds {
            max_step_drop_pp: 20.0,
            min_pcsi_compensatory: 0.7,
            min_degraded_ratio: 0.8,
            catastrophic_drop_pp: 30.0,
            max_pcsi_contorted: 0.5,
            max_dcsi_contorted: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    GracefulFullToDegraded,
    GracefulDegradedToNone,
    ProfilePreserved,
    DcsiMaintained,
    EcsiMaintained,
    CatastrophicDrop,
    NearTotalCollapse,
    ProfileCollapse,
    ZeroConsolidation,
}

impl RuleId {
    pub fn is_contorted(self) -> bool {
        matches!(
            self,
            RuleId::CatastrophicDrop | RuleId::NearTotalCollapse | RuleId::ProfileCollapse | RuleId::ZeroConsolidation
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleCheck {
    pub rule: RuleId,
    pub value: f64,
    pub threshold: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Compensatory,
    Contorted,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldVerdict {
    pub scaffold: String,
    pub verdict: Verdict,
    /// Compensatory rules that pass and contorted rules that fire.
    pub fired_rules: Vec<RuleCheck>,
    /// Compensatory rules that did not pass.
    pub unmet_rules: Vec<RuleCheck>,
}

pub fn classify_scaffold(t: &ScaffoldTriplet, th: &ScaffoldThresholds) -> ScaffoldVerdict {
    let drop1 = t.full_pp - t.degraded_pp;
    let drop2 = t.degraded_pp - t.none_pp;
    let check = |rule, value, threshold, holds| RuleCheck { rule, value, threshold, holds };

    let mut checks = vec![
        check(RuleId::GracefulFullToDegraded, drop1, th.max_step_drop_pp, drop1 < th.max_step_drop_pp),
        check(RuleId::GracefulDegradedToNone, drop2, th.max_step_drop_pp, drop2 < th.max_step_drop_pp),
        check(
            RuleId::ProfilePreserved,
            t.pcsi_across_conditions,
            th.min_pcsi_compensatory,
            t.pcsi_across_conditions > th.min_pcsi_compensatory,
        ),
        check(
            RuleId::DcsiMaintained,
            t.dcsi_degraded_ratio,
            th.min_degraded_ratio,
            t.dcsi_degraded_ratio >= th.min_degraded_ratio,
        ),
        check(
            RuleId::EcsiMaintained,
            t.ecsi_degraded_ratio,
            th.min_degraded_ratio,
            t.ecsi_degraded_ratio >= th.min_degraded_ratio,
        ),
        check(RuleId::CatastrophicDrop, drop1, th.catastrophic_drop_pp, drop1 > th.catastrophic_drop_pp),
        check(RuleId::NearTotalCollapse, drop2, th.catastrophic_drop_pp, drop2 > th.catastrophic_drop_pp),
        check(
            RuleId::ProfileCollapse,
            t.pcsi_across_conditions,
            th.max_pcsi_contorted,
            t.pcsi_across_conditions < th.max_pcsi_contorted,
        ),
    ];
    // Only evaluable when an absolute degraded dCSI was measured.
    if let Some(d) = t.dcsi_degraded {
        checks.push(check(RuleId::ZeroConsolidation, d, th.max_dcsi_contorted, d < th.max_dcsi_contorted));
    }

    let contorted = checks.iter().any(|c| c.rule.is_contorted() && c.holds);
    let compensatory = checks.iter().filter(|c| !c.rule.is_contorted()).all(|c| c.holds);
    let verdict = if contorted {
        Verdict::Contorted
    } else if compensatory {
        Verdict::Compensatory
    } else {
        Verdict::Indeterminate
    };
    let (fired_rules, rest): (Vec<_>, Vec<_>) = checks.into_iter().partition(|c| c.holds);
    ScaffoldVerdict {
        scaffold: t.scaffold.clone(),
        verdict,
        fired_rules,
        unmet_rules: rest.into_iter().filter(|c| !c.rule.is_contorted()).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    None,
    A,
    B,
    C,
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Tier::None => "None",
            Tier::A => "A",
            Tier::B => "B",
            Tier::C => "C",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierGate {
    pub s_prior: f64,
    pub csi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierThresholds {
    pub tier_a: TierGate,
    pub tier_b: TierGate,
    pub tier_b_dcsi_72h: f64,
    pub tier_c: TierGate,
}

impl Default for TierThresholds {
    fn default() -> Self {
        TierThresholds {
            tier_a: TierGate { s_prior: 0.60, csi: 0.75 },
            tier_b: TierGate { s_prior: 0.75, csi: 0.85 },
            tier_b_dcsi_72h: 0.7,
            tier_c: TierGate { s_prior: 0.90, csi: 0.90 },
        }
    }
}

impl TierThresholds {
    /// Each tier's gates must be at least as strict as the one below it.
    pub fn validate(&self) -> Result<()> {
        let a = self.tier_a;
        let b = self.tier_b;
        let c = self.tier_c;
        let all = [a.s_prior, a.csi, b.s_prior, b.csi, c.s_prior, c.csi, self.tier_b_dcsi_72h];
        if all.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParams("tier thresholds must lie in [0, 1]".into()));
        }
        if b.s_prior < a.s_prior || b.csi < a.csi || c.s_prior < b.s_prior || c.csi < b.csi {
            return Err(Error::InvalidParams("tier thresholds must be nested A <= B <= C".into()));
        }
        Ok(())
    }
}

/// Operator-supplied per-component floors for the top tier. No defaults
/// exist; without them the top tier cannot be granted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentFloors {
    pub pcsi: f64,
    pub dcsi: f64,
    pub ecsi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedGate {
    pub tier: Tier,
    pub gate: String,
    /// `None` when the input the gate needs was not supplied.
    pub value: Option<f64>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierAssignment {
    pub tier: Tier,
    pub s_prior: f64,
    pub csi: CsiResult,
    pub dcsi_72h: Option<f64>,
    pub failed_gates: Vec<FailedGate>,
}

/// Highest tier whose gates, and those of every lower tier, all pass.
/// Every comparison is strict.
pub fn assign_tier(
    s_prior: f64,
    csi: &CsiResult,
    dcsi_72h: Option<f64>,
    floors: Option<&ComponentFloors>,
    th: &TierThresholds,
) -> TierAssignment {
    let mut failed = Vec::new();
    let mut gate = |tier, name: &str, value: Option<f64>, threshold: Option<f64>| -> bool {
        let ok = matches!((value, threshold), (Some(v), Some(t)) if v > t);
        if !ok {
            failed.push(FailedGate { tier, gate: name.to_string(), value, threshold });
        }
        ok
    };

    let a = [
        gate(Tier::A, "s_prior", Some(s_prior), Some(th.tier_a.s_prior)),
        gate(Tier::A, "csi", Some(csi.csi), Some(th.tier_a.csi)),
    ]
    .iter()
    .all(|ok| *ok);
    let b = [
        gate(Tier::B, "s_prior", Some(s_prior), Some(th.tier_b.s_prior)),
        gate(Tier::B, "csi", Some(csi.csi), Some(th.tier_b.csi)),
        gate(Tier::B, "dcsi_72h", dcsi_72h, Some(th.tier_b_dcsi_72h)),
    ]
    .iter()
    .all(|ok| *ok);
    let mut c_gates = vec![
        gate(Tier::C, "s_prior", Some(s_prior), Some(th.tier_c.s_prior)),
        gate(Tier::C, "csi", Some(csi.csi), Some(th.tier_c.csi)),
    ];
    match floors {
        Some(f) => {
            c_gates.push(gate(Tier::C, "pcsi_floor", Some(csi.pcsi), Some(f.pcsi)));
            c_gates.push(gate(Tier::C, "dcsi_floor", Some(csi.dcsi), Some(f.dcsi)));
            c_gates.push(gate(Tier::C, "ecsi_floor", Some(csi.ecsi), Some(f.ecsi)));
        }
        None => c_gates.push(gate(Tier::C, "component_floors", None, None)),
    }
    let c = c_gates.iter().all(|ok| *ok);

    let tier = match (a, b, c) {
        (true, true, true) => Tier::C,
        (true, true, false) => Tier::B,
        (true, false, _) => Tier::A,
        _ => Tier::None,
    };
    TierAssignment { tier, s_prior, csi: csi.clone(), dcsi_72h, failed_gates: failed }
}
