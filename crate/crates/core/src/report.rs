//! Full evaluation report: dual scores, all stability indices with their
//! intervals and exclusions, scaffold verdicts, governance tier and the
//! lottery audit, plus table and plot-data renderings.

use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::classification::{
    assign_tier, classify_scaffold, ComponentFloors, ScaffoldThresholds, ScaffoldTriplet, ScaffoldVerdict, Tier,
    TierAssignment, TierThresholds,
};
use crate::error::{Error, Result};
use crate::io::FORMAT_VERSION;
use crate::lottery::{audit_violations, Draws, PerturbationFamily, SeedCommitment};
use crate::model::{EvaluationBundle, NumericGuards, Violation};
use crate::stability::{
    self, CsiResult, DcsiResult, EcsiResult, ExcludedRun, MissingDelay, PcsiResult, DEFAULT_BOOTSTRAP_N,
};
use crate::weighting::{sensitivity_sweep, weighted_score, MixParams, SensitivityBand, WeightVector, WeightsConfig};

/// Delay at which the tier-B retention gate is read.
pub const TIER_GATE_DELAY_HOURS: u32 = 72;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub weights: WeightsConfig,
    pub guards: NumericGuards,
    pub tiers: TierThresholds,
    pub scaffold: ScaffoldThresholds,
    pub component_floors: Option<ComponentFloors>,
    pub bootstrap_n: usize,
    pub seed: u64,
}

impl ReportConfig {
    pub fn new(weights: WeightsConfig, seed: u64) -> Self {
        ReportConfig {
            weights,
            guards: NumericGuards::default(),
            tiers: TierThresholds::default(),
            scaffold: ScaffoldThresholds::default(),
            component_floors: None,
            bootstrap_n: DEFAULT_BOOTSTRAP_N,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
// Adjacent tagging keeps the payload unbuffered, so integer-keyed maps
// inside it still deserialize.
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Section<T> {
    Available(T),
    Unavailable { reason: String },
}

impl<T> Section<T> {
    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(v) => Section::Available(v),
            Err(e) => Section::Unavailable { reason: e.to_string() },
        }
    }

    fn unavailable(reason: impl Into<String>) -> Self {
        Section::Unavailable { reason: reason.into() }
    }

    pub fn available(&self) -> Option<&T> {
        match self {
            Section::Available(v) => Some(v),
            Section::Unavailable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub s_equal: f64,
    /// Score under the headline weights (prior at the headline lambda, or
    /// the posterior mix when configured).
    pub s_prior: f64,
    pub headline_mix: MixParams,
    pub headline_weights: WeightVector,
    pub sensitivity: SensitivityBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldOutcome {
    pub triplet: ScaffoldTriplet,
    pub verdict: ScaffoldVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotteryReport {
    pub scheme_id: String,
    pub commitment: SeedCommitment,
    pub registry: Vec<PerturbationFamily>,
    pub draws: Draws,
    pub revealed_seed: Option<u64>,
    /// `None` until the seed is revealed.
    pub verified: Option<bool>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Exclusions {
    pub pcsi_runs: Vec<ExcludedRun>,
    pub dcsi_below_floor: Vec<String>,
    pub dcsi_above_ceiling: Vec<String>,
    pub dcsi_no_delays: Vec<String>,
    pub dcsi_missing_delays: Vec<MissingDelay>,
    pub ecsi_low_initial_error: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: String,
    pub system_id: String,
    pub created_at: DateTime<Utc>,
    pub scores: Scores,
    pub pcsi: Section<PcsiResult>,
    pub dcsi: Section<DcsiResult>,
    pub ecsi: Section<EcsiResult>,
    pub csi: Section<CsiResult>,
    pub scaffolds: Vec<Section<ScaffoldOutcome>>,
    pub tier: Section<TierAssignment>,
    pub lottery: Section<LotteryReport>,
    pub exclusions: Exclusions,
}

fn empty_or<T>(empty: bool, what: &'static str, f: impl FnOnce() -> Result<T>) -> Section<T> {
    if empty {
        Section::unavailable(format!("no {what} in the record"))
    } else {
        Section::from_result(f())
    }
}

/// Scores an already validated bundle. Fails only on configuration errors;
/// an index whose inputs are missing or unusable becomes an unavailable
/// section with the reason.
pub fn build_report(bundle: &EvaluationBundle, cfg: &ReportConfig) -> Result<EvaluationReport> {
    cfg.guards.validate()?;
    cfg.tiers.validate()?;
    let weights = cfg.weights.resolve()?;
    let base = &bundle.baseline;
    let scores = Scores {
        s_equal: weighted_score(base, &WeightVector::equal())?,
        s_prior: weighted_score(base, &weights.headline)?,
        headline_mix: weights.headline_mix,
        headline_weights: weights.headline.clone(),
        sensitivity: sensitivity_sweep(base, &weights.g, &weights.s, &weights.lambda_grid)?,
    };

    let g = &cfg.guards;
    let pcsi = empty_or(bundle.perturbations.is_empty(), "perturbation runs", || {
        stability::pcsi(base, &bundle.perturbations, &weights.headline, g, cfg.bootstrap_n, cfg.seed)
    });
    let dcsi = empty_or(bundle.retention.is_empty(), "retention records", || {
        stability::dcsi(&bundle.retention, &bundle.registered_delays, g)
    });
    let ecsi =
        empty_or(bundle.trajectories.is_empty(), "error trajectories", || stability::ecsi(&bundle.trajectories, g));

    let csi = match (pcsi.available(), dcsi.available(), ecsi.available()) {
        (Some(p), Some(d), Some(e)) => Section::Available(stability::csi(p.pcsi, d.dcsi, e.ecsi, g)),
        _ => {
            let missing: Vec<&str> = [
                ("pCSI", pcsi.available().is_none()),
                ("dCSI", dcsi.available().is_none()),
                ("eCSI", ecsi.available().is_none()),
            ]
            .iter()
            .filter(|(_, m)| *m)
            .map(|(n, _)| *n)
            .collect();
            Section::unavailable(format!("needs every component; missing {}", missing.join(", ")))
        }
    };

    let tier = match csi.available() {
        Some(c) => Section::Available(assign_tier(
            scores.s_prior,
            c,
            dcsi.available().and_then(|d| d.at_delay(TIER_GATE_DELAY_HOURS)),
            cfg.component_floors.as_ref(),
            &cfg.tiers,
        )),
        None => Section::unavailable("CSI unavailable"),
    };

    let scaffolds = bundle
        .scaffold_trials
        .iter()
        .map(|t| match ScaffoldTriplet::from_trial(t, g) {
            Ok(triplet) => {
                let verdict = classify_scaffold(&triplet, &cfg.scaffold);
                Section::Available(ScaffoldOutcome { triplet, verdict })
            }
            Err(e) => Section::unavailable(format!("scaffold `{}`: {e}", t.scaffold)),
        })
        .collect();

    let lottery = match &bundle.lottery {
        Some(a) => Section::Available(LotteryReport {
            scheme_id: a.commitment.scheme_id.clone(),
            commitment: a.commitment.clone(),
            registry: a.registry.clone(),
            draws: a.draws.clone(),
            revealed_seed: a.revealed_seed,
            verified: a.verified(),
            violations: audit_violations(a),
        }),
        None => Section::unavailable("no lottery audit block in the record"),
    };

    let mut exclusions = Exclusions::default();
    if let Some(p) = pcsi.available() {
        exclusions.pcsi_runs = p.excluded.clone();
    }
    if let Some(d) = dcsi.available() {
        exclusions.dcsi_below_floor = d.excluded_floor.clone();
        exclusions.dcsi_above_ceiling = d.excluded_ceiling.clone();
        exclusions.dcsi_no_delays = d.excluded_no_delays.clone();
        exclusions.dcsi_missing_delays = d.missing_delays.clone();
    }
    if let Some(e) = ecsi.available() {
        exclusions.ecsi_low_initial_error = e.excluded_low_initial_error.clone();
    }

    Ok(EvaluationReport {
        format_version: FORMAT_VERSION.into(),
        system_id: bundle.system_id.clone(),
        created_at: bundle.created_at,
        scores,
        pcsi,
        dcsi,
        ecsi,
        csi,
        scaffolds,
        tier,
        lottery,
        exclusions,
    })
}

/// `S_equal=0.580 S_prior[0.60..0.90]=0.601..0.640`
pub fn score_line(s_equal: f64, band: &SensitivityBand) -> String {
    let first = band.lambda_grid.first().copied().unwrap_or(f64::NAN);
    let last = band.lambda_grid.last().copied().unwrap_or(f64::NAN);
    format!("S_equal={s_equal:.3} S_prior[{first:.2}..{last:.2}]={:.3}..{:.3}", band.min_score, band.max_score)
}

fn row(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key:<16}{value}");
}

fn section_row<T>(out: &mut String, key: &str, s: &Section<T>, f: impl FnOnce(&T) -> String) {
    match s {
        Section::Available(v) => row(out, key, f(v)),
        Section::Unavailable { reason } => row(out, key, format!("unavailable ({reason})")),
    }
}

/// Human-readable table, three decimals throughout.
pub fn render_table(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let s = &r.scores;
    row(&mut out, "system", &r.system_id);
    row(&mut out, "scores", score_line(s.s_equal, &s.sensitivity));
    let mix = match s.headline_mix {
        MixParams::Prior { lambda, .. } => format!("prior, lambda {lambda:.2}"),
        MixParams::Posterior { alpha, beta, gamma } => format!("posterior {alpha:.2}/{beta:.2}/{gamma:.2}"),
    };
    row(&mut out, "S_prior", format!("{:.3} ({mix})", s.s_prior));
    section_row(&mut out, "pCSI", &r.pcsi, |p| {
        let mut v = format!(
            "{:.3} CI95 param [{:.3}, {:.3}] boot [{:.3}, {:.3}]",
            p.pcsi, p.ci_parametric.lo, p.ci_parametric.hi, p.ci_bootstrap.lo, p.ci_bootstrap.hi
        );
        if p.low_confidence {
            v.push_str(" low-confidence");
        }
        v
    });
    if let Some(p) = r.pcsi.available() {
        row(&mut out, "  spearman", format!("{:.3}", p.alt_spearman));
        row(&mut out, "  cosine", format!("{:.3}", p.alt_cosine));
        row(&mut out, "  level shift", format!("{:.3} weighted {:.3}", p.level_shift, p.level_shift_weighted));
    }
    section_row(&mut out, "dCSI", &r.dcsi, |d| {
        let per: Vec<String> = d.per_delay_means.iter().map(|(h, v)| format!("{h}h {v:.3}")).collect();
        format!("{:.3} ({})", d.dcsi, per.join(", "))
    });
    section_row(&mut out, "eCSI", &r.ecsi, |e| format!("{:.3} over {} tasks", e.ecsi, e.per_task.len()));
    section_row(&mut out, "CSI", &r.csi, |c| {
        let mut v = format!("{:.3} (pCSI {:.3}, dCSI {:.3}, eCSI {:.3})", c.csi, c.pcsi, c.dcsi, c.ecsi);
        if !c.floored_components.is_empty() {
            let f: Vec<String> = c.floored_components.iter().map(|c| format!("{c:?}")).collect();
            let _ = write!(v, " floored: {}", f.join(", "));
        }
        v
    });
    for s in &r.scaffolds {
        section_row(&mut out, "scaffold", s, |o| {
            let t = &o.triplet;
            format!(
                "{} {:?} {:.1} -> {:.1} -> {:.1} pCSI {:.3}",
                t.scaffold, o.verdict.verdict, t.full_pp, t.degraded_pp, t.none_pp, t.pcsi_across_conditions
            )
        });
    }
    section_row(&mut out, "tier", &r.tier, |t| {
        let next: Vec<String> = t
            .failed_gates
            .iter()
            .filter(|g| g.tier > t.tier)
            .map(|g| match (g.value, g.threshold) {
                (Some(v), Some(th)) => format!("{}.{} {v:.3} <= {th:.3}", g.tier, g.gate),
                _ => format!("{}.{} missing", g.tier, g.gate),
            })
            .collect();
        if next.is_empty() {
            t.tier.to_string()
        } else {
            format!("{} (failed: {})", t.tier, next.join("; "))
        }
    });
    section_row(&mut out, "lottery", &r.lottery, |l| match l.verified {
        None => format!("{} committed, not revealed", l.scheme_id),
        Some(true) => format!("{} revealed and verified", l.scheme_id),
        Some(false) => format!("{} FAILED verification ({} issues)", l.scheme_id, l.violations.len()),
    });
    out
}

fn tier_label(r: &EvaluationReport) -> String {
    r.tier.available().map(|t| t.tier).unwrap_or(Tier::None).to_string()
}

/// Plot-data files as `(file name, contents)`. Values keep full precision.
pub fn plot_csvs(reports: &[EvaluationReport]) -> Vec<(&'static str, String)> {
    let mut sens = String::from("system_id,lambda,s_prior,s_equal\n");
    let mut scaf = String::from("system_id,scaffold,condition,mean_pct,pcsi_across_conditions,verdict\n");
    let mut gov = String::from("system_id,s_prior_pct,csi,tier\n");
    for r in reports {
        let s = &r.scores;
        for (l, v) in s.sensitivity.lambda_grid.iter().zip(&s.sensitivity.scores) {
            let _ = writeln!(sens, "{},{l},{v},{}", r.system_id, s.s_equal);
        }
        for o in r.scaffolds.iter().filter_map(Section::available) {
            let t = &o.triplet;
            for (cond, v) in [("full", t.full_pp), ("degraded", t.degraded_pp), ("none", t.none_pp)] {
                let _ = writeln!(
                    scaf,
                    "{},{},{cond},{v},{},{:?}",
                    r.system_id, t.scaffold, t.pcsi_across_conditions, o.verdict.verdict
                );
            }
        }
        if let Some(c) = r.csi.available() {
            let _ = writeln!(gov, "{},{},{},{}", r.system_id, 100.0 * s.s_prior, c.csi, tier_label(r));
        }
    }
    vec![("sensitivity.csv", sens), ("scaffold.csv", scaf), ("governance.csv", gov)]
}

/// Concatenated reports for `report --compare`; system ids must be distinct.
pub fn compare(bundles: &[EvaluationBundle], cfg: &ReportConfig) -> Result<Vec<EvaluationReport>> {
    let mut seen = std::collections::BTreeSet::new();
    for b in bundles {
        if !seen.insert(b.system_id.as_str()) {
            return Err(Error::InvalidParams(format!("system `{}` appears twice", b.system_id)));
        }
    }
    bundles.iter().map(|b| build_report(b, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::sample_bundle;
    use crate::model::DomainId;
    use std::collections::BTreeMap;

    fn weights() -> WeightsConfig {
        let pct = crate::weighting::CHC_PRIOR_PERCENT;
        WeightsConfig {
            format_version: "1".into(),
            g_loadings: DomainId::ALL.iter().map(|d| (*d, pct[d.index()] as f64)).collect(),
            structural: [DomainId::MS, DomainId::MR, DomainId::R, DomainId::WM].into_iter().map(|d| (d, 1.0)).collect(),
            stabilizing: None,
            lambda_grid: None,
            headline_lambda: None,
            posterior: None,
        }
    }

    fn cfg() -> ReportConfig {
        ReportConfig { bootstrap_n: 200, ..ReportConfig::new(weights(), 7) }
    }

    #[test]
    fn complete_bundle_has_every_metric() {
        let r = build_report(&sample_bundle(), &cfg()).unwrap();
        assert!(r.pcsi.available().is_some());
        assert!(r.dcsi.available().is_some());
        assert!(r.ecsi.available().is_some());
        assert!(r.csi.available().is_some());
        assert!(r.tier.available().is_some());
        assert_eq!(r.scores.sensitivity.lambda_grid.len(), 7);
        let json = crate::io::to_json(&r);
        for key in [
            "s_equal",
            "s_prior",
            "sensitivity",
            "ci_parametric",
            "ci_bootstrap",
            "per_delay_means",
            "floored_components",
        ] {
            assert!(json.contains(key), "{key}");
        }
    }

    #[test]
    fn missing_trajectories_propagate() {
        let mut b = sample_bundle();
        b.trajectories.clear();
        let r = build_report(&b, &cfg()).unwrap();
        assert!(matches!(&r.ecsi, Section::Unavailable { reason } if reason.contains("trajectories")));
        assert!(matches!(&r.csi, Section::Unavailable { reason } if reason.contains("eCSI")));
        assert!(r.tier.available().is_none());
        assert!(render_table(&r).contains("eCSI            unavailable"));
    }

    #[test]
    fn deterministic() {
        let a = crate::io::to_json(&build_report(&sample_bundle(), &cfg()).unwrap());
        let b = crate::io::to_json(&build_report(&sample_bundle(), &cfg()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn score_line_format() {
        let band = SensitivityBand {
            lambda_grid: vec![0.6, 0.9],
            scores: vec![0.61, 0.64],
            min_score: 0.61,
            max_score: 0.64,
            equal_weight_score: 0.58,
            non_recommended: vec![],
        };
        assert_eq!(score_line(0.58, &band), "S_equal=0.580 S_prior[0.60..0.90]=0.610..0.640");
    }

    #[test]
    fn csv_headers_and_compare() {
        let a = sample_bundle();
        let mut b = sample_bundle();
        b.system_id = "other".into();
        let reports = compare(&[a.clone(), b], &cfg()).unwrap();
        let csvs: BTreeMap<_, _> = plot_csvs(&reports).into_iter().collect();
        assert!(csvs["sensitivity.csv"].starts_with("system_id,lambda"));
        assert_eq!(csvs["governance.csv"].lines().count(), 3);
        assert!(compare(&[a.clone(), a], &cfg()).is_err());
    }
}
