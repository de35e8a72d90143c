//! Profile stability: Fisher-aggregated baseline/perturbed correlation,
//! its confidence intervals, alternate similarity measures and the
//! level-shift companions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fisher::{fisher_z, mean};
use super::similarity::{profile_similarity, SimilarityMeasure};
use crate::error::{Error, Result};
use crate::lottery::splitmix;
use crate::model::{DomainProfile, NumericGuards, PerturbationKind, PerturbationRun, N_DOMAINS};
use crate::weighting::WeightVector;

pub const DEFAULT_BOOTSTRAP_N: usize = 2000;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Below this many usable runs the intervals are flagged as low confidence.
pub const MIN_CONFIDENT_RUNS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRun {
    pub index: usize,
    pub family: PerturbationKind,
    pub instance: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcsiResult {
    pub pcsi: f64,
    pub mean_r: f64,
    pub mean_z: f64,
    /// Pearson r for each run that entered the average, in input order.
    pub per_perturbation_r: Vec<f64>,
    pub ci_parametric: Interval,
    pub ci_bootstrap: Interval,
    pub bootstrap_n: usize,
    pub alt_spearman: f64,
    pub alt_cosine: f64,
    /// Computed over every run, including those excluded from the correlation.
    pub level_shift: f64,
    pub level_shift_weighted: f64,
    pub excluded: Vec<ExcludedRun>,
    pub low_confidence: bool,
}

fn to_unit(r: f64) -> f64 {
    (1.0 + r) / 2.0
}

/// Percentile with linear interpolation between order statistics.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Percentile bootstrap over runs: each resample draws `zs.len()` runs with
/// replacement. Resample `b` uses its own generator seeded from
/// `splitmix(seed, b)`, so the result does not depend on scheduling.
pub fn bootstrap_interval(zs: &[f64], n_resamples: usize, seed: u64) -> Interval {
    let m = zs.len();
    let mut stats: Vec<f64> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed, b));
            let sum: f64 = (0..m).map(|_| zs[rng.random_range(0..m)]).sum();
            to_unit((sum / m as f64).tanh())
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    Interval { lo: percentile(&stats, 0.025), hi: percentile(&stats, 0.975) }
}

fn level_ratio(num: f64, den: f64) -> f64 {
    (num / den).min(1.0)
}

pub fn pcsi(
    base: &DomainProfile,
    runs: &[PerturbationRun],
    weights: &WeightVector,
    guards: &NumericGuards,
    bootstrap_n: usize,
    seed: u64,
) -> Result<PcsiResult> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("no perturbation runs"));
    }
    if bootstrap_n == 0 {
        return Err(Error::EmptyInput("bootstrap_n must be at least 1"));
    }
    let a0 = base.to_array()?;
    if a0.iter().all(|v| *v == a0[0]) {
        return Err(Error::DegenerateProfile(base.label.clone()));
    }
    let base_mean = mean(&a0);
    let w = weights.values();
    let base_weighted: f64 = a0.iter().zip(w).map(|(a, w)| a * w).sum();
    if base_weighted <= 0.0 {
        return Err(Error::DegenerateProfile(format!("{} (weighted)", base.label)));
    }

    let mut rs = Vec::new();
    let mut spearman = Vec::new();
    let mut cosine = Vec::new();
    let mut excluded = Vec::new();
    let mut levels = Vec::with_capacity(runs.len());
    let mut levels_w = Vec::with_capacity(runs.len());

    for (index, run) in runs.iter().enumerate() {
        let aj = run.profile.to_array()?;
        levels.push(level_ratio(mean(&aj), base_mean));
        let wj: f64 = aj.iter().zip(w).map(|(a, w)| a * w).sum();
        levels_w.push(level_ratio(wj, base_weighted));

        match profile_similarity(base, &run.profile, SimilarityMeasure::Pearson) {
            Ok(r) => {
                rs.push(r);
                spearman.push(profile_similarity(base, &run.profile, SimilarityMeasure::Spearman)?);
                cosine.push(profile_similarity(base, &run.profile, SimilarityMeasure::Cosine)?);
            }
            Err(Error::DegenerateProfile(_)) => {
                excluded.push(ExcludedRun {
                    index,
                    family: run.family,
                    instance: run.instance.clone(),
                    reason: "zero-variance profile; correlation undefined".into(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    if rs.is_empty() {
        return Err(Error::EmptyAfterExclusion("every perturbed profile is degenerate"));
    }

    let zs: Vec<f64> = rs.iter().map(|&r| fisher_z(r, guards.corr_clamp)).collect();
    let mean_z = mean(&zs);
    let mean_r = mean_z.tanh();
    let se = 1.0 / (((N_DOMAINS - 3) * zs.len()) as f64).sqrt();
    let ci_parametric = Interval { lo: to_unit((mean_z - Z_95 * se).tanh()), hi: to_unit((mean_z + Z_95 * se).tanh()) };

    Ok(PcsiResult {
        pcsi: to_unit(mean_r),
        mean_r,
        mean_z,
        ci_parametric,
        ci_bootstrap: bootstrap_interval(&zs, bootstrap_n, seed),
        bootstrap_n,
        alt_spearman: mean(&spearman.iter().map(|&m| to_unit(m)).collect::<Vec<_>>()),
        alt_cosine: mean(&cosine.iter().map(|&m| to_unit(m)).collect::<Vec<_>>()),
        level_shift: mean(&levels),
        level_shift_weighted: mean(&levels_w),
        low_confidence: rs.len() < MIN_CONFIDENT_RUNS,
        per_perturbation_r: rs,
        excluded,
    })
}
