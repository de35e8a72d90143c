//! Command-line surface. Exit status: 0 success, 1 validation or
//! verification failure, 2 any other error.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::classification::{assign_tier, classify_scaffold, ScaffoldThresholds, ScaffoldTriplet};
use crate::error::{Error, Result};
use crate::io::{self, to_json, write_atomic, ThresholdsConfig};
use crate::lottery::{
    self, build_schedule, commit_seed, draw, verify_reveal, Draws, LotteryAudit, Reveal, SeedCommitment,
    SessionSchedule,
};
use crate::model::{EvaluationBundle, LotteryDrawRef, NumericGuards};
use crate::report::{self, build_report, plot_csvs, render_table, score_line, ReportConfig, Section};
use crate::stability::{CsiResult, DEFAULT_BOOTSTRAP_N};
use crate::synthetic::{expected_indices, simulate_bundle};
use crate::weighting::{sensitivity_sweep, weighted_score, WeightVector};

#[derive(Debug, Parser)]
#[command(name = "csi", version, about = "Centrality-weighted scores and cluster stability indices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Output directory; defaults to $CSI_OUTPUT_DIR, then the working directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl OutDir {
    fn path(&self, name: &str) -> PathBuf {
        io::output_dir(self.out_dir.as_deref()).join(name)
    }
}

#[derive(Debug, Args)]
pub struct Scoring {
    /// Weights config (g-loadings, structural prior, optional posterior).
    #[arg(long)]
    pub weights: PathBuf,
    /// Bootstrap seed.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_N)]
    pub bootstrap_n: usize,
    /// Tier, scaffold and component-floor thresholds.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
}

impl Scoring {
    fn config(&self) -> Result<ReportConfig> {
        let mut cfg = ReportConfig::new(io::load_weights(&self.weights)?, self.seed);
        cfg.bootstrap_n = self.bootstrap_n;
        if let Some(t) = load_thresholds(self.thresholds.as_deref())? {
            cfg.tiers = t.tiers.unwrap_or_default();
            cfg.scaffold = t.scaffold.unwrap_or_default();
            cfg.component_floors = t.component_floors;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the equal-weight score and the prior-score sensitivity range.
    Score {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        weights: PathBuf,
    },
    /// Compute pCSI, dCSI, eCSI and CSI; writes stability.json.
    Stability {
        #[arg(long)]
        record: PathBuf,
        /// Weights for the weighted level shift; equal weights when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_N)]
        bootstrap_n: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Commit to a lottery seed; writes commitment.txt and reveal.txt.
    LotteryCommit {
        #[arg(long)]
        seed: u64,
        /// 16-byte salt as 32 hex characters.
        #[arg(long)]
        salt: String,
        /// Commitment timestamp (RFC 3339).
        #[arg(long)]
        committed_at: DateTime<Utc>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Check a reveal against its commitment and, optionally, recorded draws.
    LotteryRevealVerify {
        #[arg(long)]
        commitment: PathBuf,
        #[arg(long)]
        reveal: PathBuf,
        /// Families config used for the draw; requires --draws.
        #[arg(long, requires = "draws")]
        families: Option<PathBuf>,
        /// draws.json written by lottery-draw.
        #[arg(long, requires = "families")]
        draws: Option<PathBuf>,
    },
    /// Draw instances per family and lay out the session schedule; writes draws.json.
    LotteryDraw {
        #[arg(long)]
        families: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Classify every scaffold trial in a record; writes scaffold.json.
    ClassifyScaffold {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Assign a governance tier, from a record or from explicit values.
    Tier {
        #[arg(long, conflicts_with_all = ["s_prior", "csi"], requires_all = ["weights", "seed"])]
        record: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, required_unless_present = "record", requires = "csi")]
        s_prior: Option<f64>,
        #[arg(long, required_unless_present = "record")]
        csi: Option<f64>,
        #[arg(long)]
        dcsi_72h: Option<f64>,
        /// Component values for the top-tier floors (explicit mode).
        #[arg(long, num_args = 3, value_names = ["PCSI", "DCSI", "ECSI"])]
        components: Option<Vec<f64>>,
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Full report: report.json, report.txt and plot-data CSVs.
    Report {
        /// One record, or several with --compare.
        #[arg(long, required = true, num_args = 1..)]
        record: Vec<PathBuf>,
        #[arg(long)]
        compare: bool,
        #[command(flatten)]
        scoring: Scoring,
        #[command(flatten)]
        out: OutDir,
    },
    /// Simulate a synthetic agent; writes <system>.record.json and <system>.expected.json.
    Simulate {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        families: PathBuf,
        /// Seed for both the lottery draw and the simulation.
        #[arg(long)]
        seed: u64,
        /// Attach a revealed commit-reveal audit block using this salt.
        #[arg(long, requires = "committed_at")]
        salt: Option<String>,
        #[arg(long, requires = "salt")]
        committed_at: Option<DateTime<Utc>>,
        #[command(flatten)]
        out: OutDir,
    },
}

/// Failure that maps to exit status 1.
fn is_validation(e: &Error) -> bool {
    matches!(e, Error::Validation(_))
}

enum Outcome {
    Ok,
    /// Ran to completion but the checked property does not hold.
    Failed,
}

fn load_thresholds(path: Option<&Path>) -> Result<Option<ThresholdsConfig>> {
    path.map(io::load_thresholds).transpose()
}

fn write_json<T: Serialize>(out: &OutDir, name: &str, value: &T) -> Result<PathBuf> {
    let path = out.path(name);
    write_atomic(&path, &to_json(value))?;
    Ok(path)
}

#[derive(Serialize)]
struct StabilityFile {
    system_id: String,
    pcsi: Section<crate::stability::PcsiResult>,
    dcsi: Section<crate::stability::DcsiResult>,
    ecsi: Section<crate::stability::EcsiResult>,
    csi: Section<CsiResult>,
}

#[derive(Serialize)]
struct DrawsFile {
    seed: u64,
    draws: Draws,
    schedule: SessionSchedule,
}

#[derive(serde::Deserialize)]
struct DrawsFileIn {
    draws: Draws,
}

fn run_command(cmd: &Command, stdout: &mut dyn Write) -> Result<Outcome> {
    let say = |stdout: &mut dyn Write, line: String| {
        let _ = writeln!(stdout, "{line}");
    };
    match cmd {
        Command::Score { record, weights } => {
            let b = io::ingest(record)?;
            let w = io::load_weights(weights)?.resolve()?;
            let band = sensitivity_sweep(&b.baseline, &w.g, &w.s, &w.lambda_grid)?;
            let s_equal = weighted_score(&b.baseline, &WeightVector::equal())?;
            say(stdout, score_line(s_equal, &band));
            if !band.non_recommended.is_empty() {
                say(stdout, format!("note: lambda outside [0.60, 0.90]: {:?}", band.non_recommended));
            }
        }
        Command::Stability { record, weights, seed, bootstrap_n, out } => {
            let b = io::ingest(record)?;
            let wcfg = match weights {
                Some(p) => io::load_weights(p)?,
                None => equal_weights_config(),
            };
            let cfg = ReportConfig { bootstrap_n: *bootstrap_n, ..ReportConfig::new(wcfg, *seed) };
            let r = build_report(&b, &cfg)?;
            let file =
                StabilityFile { system_id: r.system_id.clone(), pcsi: r.pcsi, dcsi: r.dcsi, ecsi: r.ecsi, csi: r.csi };
            let fmt = |s: Option<f64>| s.map_or("unavailable".to_string(), |v| format!("{v:.3}"));
            say(
                stdout,
                format!(
                    "pCSI={} dCSI={} eCSI={} CSI={}",
                    fmt(file.pcsi.available().map(|p| p.pcsi)),
                    fmt(file.dcsi.available().map(|d| d.dcsi)),
                    fmt(file.ecsi.available().map(|e| e.ecsi)),
                    fmt(file.csi.available().map(|c| c.csi)),
                ),
            );
            write_json(out, "stability.json", &file)?;
        }
        Command::LotteryCommit { seed, salt, committed_at, out } => {
            let salt = lottery::parse_salt(salt)?;
            let c = commit_seed(*seed, salt, *committed_at);
            write_atomic(&out.path("commitment.txt"), &c.to_file_string())?;
            write_atomic(&out.path("reveal.txt"), &Reveal { seed: *seed, salt }.to_file_string())?;
            say(stdout, format!("commitment {} ({})", c.commitment, c.scheme_id));
        }
        Command::LotteryRevealVerify { commitment, reveal, families, draws } => {
            let c = SeedCommitment::parse_file(&io::read_text(commitment)?)?;
            let r = Reveal::parse_file(&io::read_text(reveal)?)?;
            if !verify_reveal(&c, r.seed, r.salt) {
                say(stdout, format!("FAILED: reveal does not open commitment {}", c.commitment));
                return Ok(Outcome::Failed);
            }
            if let (Some(f), Some(d)) = (families, draws) {
                let fams = io::load_families(f)?;
                let recorded: DrawsFileIn = io::parse_json(&d.display().to_string(), &io::read_text(d)?)?;
                if draw(&fams.families, r.seed)? != recorded.draws {
                    say(stdout, "FAILED: recorded draws differ from the revealed seed's draws".into());
                    return Ok(Outcome::Failed);
                }
            }
            say(stdout, format!("verified {} seed {}", c.scheme_id, r.seed));
        }
        Command::LotteryDraw { families, seed, out } => {
            let fams = io::load_families(families)?;
            let draws = draw(&fams.families, *seed)?;
            let schedule = build_schedule(&draws, &fams.delays)?;
            for (f, inst) in &draws {
                say(stdout, format!("{}: {}", f.name(), inst.join(", ")));
            }
            write_json(out, "draws.json", &DrawsFile { seed: *seed, draws, schedule })?;
        }
        Command::ClassifyScaffold { record, thresholds, out } => {
            let b = io::ingest(record)?;
            let th = load_thresholds(thresholds.as_deref())?.and_then(|t| t.scaffold).unwrap_or_default();
            if b.scaffold_trials.is_empty() {
                return Err(Error::EmptyInput("record has no scaffold trials"));
            }
            let verdicts = classify_all(&b, &th)?;
            for v in &verdicts {
                say(stdout, format!("{}: {:?}", v.scaffold, v.verdict));
            }
            write_json(out, "scaffold.json", &verdicts)?;
        }
        Command::Tier { record, weights, seed, s_prior, csi, dcsi_72h, components, thresholds } => {
            let th = load_thresholds(thresholds.as_deref())?;
            let tiers = th.as_ref().and_then(|t| t.tiers).unwrap_or_default();
            tiers.validate()?;
            let floors = th.as_ref().and_then(|t| t.component_floors);
            let assignment = match record {
                Some(rec) => {
                    let b = io::ingest(rec)?;
                    let weights = weights.as_ref().expect("clap requires --weights with --record");
                    let mut cfg = ReportConfig::new(io::load_weights(weights)?, seed.expect("clap requires --seed"));
                    cfg.tiers = tiers;
                    cfg.component_floors = floors;
                    match build_report(&b, &cfg)?.tier {
                        Section::Available(t) => t,
                        Section::Unavailable { reason } => return Err(Error::Unavailable(format!("tier: {reason}"))),
                    }
                }
                None => {
                    let c = csi.expect("clap requires --csi");
                    // Without component values the floors cannot be checked, which caps the tier at B.
                    let (result, floors) = match components.as_deref() {
                        Some(&[p, d, e]) => {
                            (CsiResult { csi: c, pcsi: p, dcsi: d, ecsi: e, floored_components: vec![] }, floors)
                        }
                        _ => (CsiResult { csi: c, pcsi: c, dcsi: c, ecsi: c, floored_components: vec![] }, None),
                    };
                    assign_tier(s_prior.expect("clap requires --s-prior"), &result, *dcsi_72h, floors.as_ref(), &tiers)
                }
            };
            say(stdout, format!("tier {}", assignment.tier));
            for g in &assignment.failed_gates {
                let v = g.value.map_or("missing".to_string(), |v| format!("{v:.3}"));
                let t = g.threshold.map_or("-".to_string(), |t| format!("{t:.3}"));
                say(stdout, format!("  failed {}.{}: {v} (needs > {t})", g.tier, g.gate));
            }
        }
        Command::Report { record, compare, scoring, out } => {
            if record.len() > 1 && !compare {
                return Err(Error::InvalidParams("several records need --compare".into()));
            }
            let cfg = scoring.config()?;
            let bundles = record.iter().map(|p| io::ingest(p)).collect::<Result<Vec<_>>>()?;
            let reports = report::compare(&bundles, &cfg)?;
            let table = reports.iter().map(render_table).collect::<Vec<_>>().join("\n");
            if *compare {
                write_json(out, "report.json", &reports)?;
            } else {
                write_json(out, "report.json", &reports[0])?;
            }
            write_atomic(&out.path("report.txt"), &table)?;
            for (name, csv) in plot_csvs(&reports) {
                write_atomic(&out.path(name), &csv)?;
            }
            let _ = write!(stdout, "{table}");
        }
        Command::Simulate { agent, families, seed, salt, committed_at, out } => {
            let params = io::load_agent(agent)?;
            let fams = io::load_families(families)?;
            let draws = draw(&fams.families, *seed)?;
            let schedule = build_schedule(&draws, &fams.delays)?;
            let mut bundle = simulate_bundle(&params, &schedule, *seed)?;
            if let (Some(salt), Some(at)) = (salt, committed_at) {
                attach_audit(&mut bundle, &fams.families, draws, *seed, lottery::parse_salt(salt)?, *at);
            }
            let expected = expected_indices(&params, &schedule, &NumericGuards::default())?;
            write_atomic(&out.path(&format!("{}.record.json", params.system_id)), &io::emit(&bundle))?;
            write_json(out, &format!("{}.expected.json", params.system_id), &expected)?;
            say(
                stdout,
                format!("simulated {} with {} perturbation runs", params.system_id, bundle.perturbations.len()),
            );
        }
    }
    Ok(Outcome::Ok)
}

fn equal_weights_config() -> crate::weighting::WeightsConfig {
    let uniform: std::collections::BTreeMap<_, _> = crate::model::DomainId::ALL.iter().map(|d| (*d, 1.0)).collect();
    crate::weighting::WeightsConfig {
        format_version: io::FORMAT_VERSION.into(),
        g_loadings: uniform.clone(),
        structural: uniform,
        stabilizing: None,
        lambda_grid: None,
        headline_lambda: None,
        posterior: None,
    }
}

fn classify_all(b: &EvaluationBundle, th: &ScaffoldThresholds) -> Result<Vec<crate::classification::ScaffoldVerdict>> {
    let g = NumericGuards::default();
    b.scaffold_trials.iter().map(|t| Ok(classify_scaffold(&ScaffoldTriplet::from_trial(t, &g)?, th))).collect()
}

fn attach_audit(
    bundle: &mut EvaluationBundle,
    registry: &[lottery::PerturbationFamily],
    draws: Draws,
    seed: u64,
    salt: [u8; 16],
    at: DateTime<Utc>,
) {
    let commitment = commit_seed(seed, salt, at);
    for run in &mut bundle.perturbations {
        run.drawn_by = Some(LotteryDrawRef { family: run.family, commitment: commitment.commitment.clone() });
    }
    bundle.lottery = Some(LotteryAudit {
        commitment,
        registry: registry.to_vec(),
        revealed_seed: Some(seed),
        revealed_salt: Some(hex::encode(salt)),
        draws,
    });
}

/// Runs one parsed invocation and returns the process exit status.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match run_command(&cli.command, stdout) {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::Failed) => 1,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if is_validation(&e) {
                1
            } else {
                2
            }
        }
    }
}
