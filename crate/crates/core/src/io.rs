//! Record and config file formats, scale normalization at ingestion, and
//! atomic output.
//!
//! Every file is JSON carrying a `format_version`. Parsing is strict:
//! unknown fields and unknown domain codes are schema errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classification::{ComponentFloors, ScaffoldThresholds, TierThresholds};
use crate::error::{Error, Result};
use crate::lottery::{LotteryAudit, PerturbationFamily};
use crate::model::{
    validate_bundle, DomainProfile, ErrorTrajectory, EvaluationBundle, PerturbationRun, ScaffoldTrial,
    TeachRetestRecord,
};
use crate::synthetic::AgentParams;
use crate::weighting::WeightsConfig;

pub const FORMAT_VERSION: &str = "1";

/// Overrides the default output directory when set.
pub const OUTPUT_DIR_ENV: &str = "CSI_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NativeScale {
    #[serde(rename = "unit-interval")]
    UnitInterval,
    #[serde(rename = "percent-0-100")]
    Percent,
}

/// On-disk form of an [`EvaluationBundle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecordFile {
    pub format_version: String,
    pub system_id: String,
    pub native_scale: NativeScale,
    pub created_at: DateTime<Utc>,
    pub registered_delays: Vec<u32>,
    pub baseline: DomainProfile,
    pub perturbations: Vec<PerturbationRun>,
    pub retention: Vec<TeachRetestRecord>,
    pub trajectories: Vec<ErrorTrajectory>,
    #[serde(default)]
    pub scaffold_trials: Vec<ScaffoldTrial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lottery: Option<LotteryAudit>,
}

fn rescale_profile(p: &mut DomainProfile, f: f64) {
    for v in p.scores.values_mut() {
        *v *= f;
    }
}

impl RunRecordFile {
    /// Converts to a bundle, dividing percent-scale scores by 100. Ratios
    /// and externally measured pCSI values are dimensionless and untouched.
    pub fn into_bundle(self) -> EvaluationBundle {
        let mut b = EvaluationBundle {
            system_id: self.system_id,
            created_at: self.created_at,
            registered_delays: self.registered_delays,
            baseline: self.baseline,
            perturbations: self.perturbations,
            retention: self.retention,
            trajectories: self.trajectories,
            scaffold_trials: self.scaffold_trials,
            lottery: self.lottery,
        };
        if self.native_scale == NativeScale::Percent {
            let f = 0.01;
            rescale_profile(&mut b.baseline, f);
            for run in &mut b.perturbations {
                rescale_profile(&mut run.profile, f);
            }
            for rec in &mut b.retention {
                rec.baseline_score *= f;
                for v in rec.delayed_scores.values_mut() {
                    *v *= f;
                }
            }
            for t in &mut b.trajectories {
                for e in &mut t.error_rates {
                    *e *= f;
                }
            }
            for s in &mut b.scaffold_trials {
                rescale_profile(&mut s.full, f);
                rescale_profile(&mut s.degraded, f);
                rescale_profile(&mut s.none, f);
                if let Some(d) = &mut s.dcsi_degraded {
                    *d *= f;
                }
            }
        }
        b
    }

    /// Emitted files are always on the unit interval.
    pub fn from_bundle(b: &EvaluationBundle) -> Self {
        RunRecordFile {
            format_version: FORMAT_VERSION.into(),
            system_id: b.system_id.clone(),
            native_scale: NativeScale::UnitInterval,
            created_at: b.created_at,
            registered_delays: b.registered_delays.clone(),
            baseline: b.baseline.clone(),
            perturbations: b.perturbations.clone(),
            retention: b.retention.clone(),
            trajectories: b.trajectories.clone(),
            scaffold_trials: b.scaffold_trials.clone(),
            lottery: b.lottery.clone(),
        }
    }
}

fn classify_json_error(what: &str, e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => Error::Schema(format!("{what}: {e}")),
        Category::Io | Category::Syntax | Category::Eof => Error::Parse(format!("{what}: {e}")),
    }
}

fn check_version(what: &str, version: &str) -> Result<()> {
    if version == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::Schema(format!("{what}: unsupported format_version `{version}`, expected `{FORMAT_VERSION}`")))
    }
}

/// Parses JSON text into `T`, mapping syntax errors to `Parse` and shape
/// errors to `Schema`.
pub fn parse_json<T: DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| classify_json_error(what, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Parses and validates a run record.
pub fn ingest_str(what: &str, text: &str) -> Result<EvaluationBundle> {
    let file: RunRecordFile = parse_json(what, text)?;
    check_version(what, &file.format_version)?;
    let bundle = file.into_bundle();
    let violations = validate_bundle(&bundle);
    if violations.is_empty() {
        Ok(bundle)
    } else {
        Err(Error::Validation(violations))
    }
}

pub fn ingest(path: &Path) -> Result<EvaluationBundle> {
    ingest_str(&path.display().to_string(), &read_text(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn emit(bundle: &EvaluationBundle) -> String {
    to_json(&RunRecordFile::from_bundle(bundle))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfigFile {
    pub format_version: String,
    pub agent: AgentParams,
}

/// Lottery registry plus the pre-registered retest delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamiliesConfig {
    pub format_version: String,
    pub delays: Vec<u32>,
    pub families: Vec<PerturbationFamily>,
}

/// Classification thresholds. Absent sections fall back to the templates;
/// component floors have no template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsConfig {
    pub format_version: String,
    #[serde(default)]
    pub tiers: Option<TierThresholds>,
    #[serde(default)]
    pub scaffold: Option<ScaffoldThresholds>,
    #[serde(default)]
    pub component_floors: Option<ComponentFloors>,
}

fn load<T: DeserializeOwned>(path: &Path, version: impl Fn(&T) -> &str) -> Result<T> {
    let what = path.display().to_string();
    let value: T = parse_json(&what, &read_text(path)?)?;
    check_version(&what, version(&value))?;
    Ok(value)
}

pub fn load_weights(path: &Path) -> Result<WeightsConfig> {
    load(path, |c: &WeightsConfig| &c.format_version)
}

pub fn load_agent(path: &Path) -> Result<AgentParams> {
    let file = load(path, |c: &AgentConfigFile| &c.format_version)?;
    file.agent.validate()?;
    Ok(file.agent)
}

pub fn load_families(path: &Path) -> Result<FamiliesConfig> {
    let cfg = load(path, |c: &FamiliesConfig| &c.format_version)?;
    for f in &cfg.families {
        f.validate()?;
    }
    Ok(cfg)
}

pub fn load_thresholds(path: &Path) -> Result<ThresholdsConfig> {
    let cfg = load(path, |c: &ThresholdsConfig| &c.format_version)?;
    if let Some(t) = &cfg.tiers {
        t.validate()?;
    }
    Ok(cfg)
}

/// `flag`, else `$CSI_OUTPUT_DIR`, else the working directory.
pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io { path: path.display().to_string(), message: e.to_string() };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents.as_bytes()).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}
