//! Domain weight vectors, equal/prior/posterior scores and the lambda
//! sensitivity sweep.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DomainId, DomainProfile, N_DOMAINS};

/// Tolerance for simplex and mixing-parameter sums.
pub const SUM_TOL: f64 = 1e-9;

pub const RECOMMENDED_LAMBDA: (f64, f64) = (0.6, 0.9);

pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90];

/// Illustrative CHC-informed prior in whole percent, canonical order
/// (K, RW, M, R, WM, MS, MR, V, A, S).
pub const CHC_PRIOR_PERCENT: [u32; N_DOMAINS] = [13, 12, 13, 14, 12, 7, 7, 8, 8, 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    GLoadings,
    Structural,
    Stabilizing,
    Prior,
    Posterior,
    Equal,
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WeightKind::GLoadings => "g_loadings",
            WeightKind::Structural => "structural",
            WeightKind::Stabilizing => "stabilizing",
            WeightKind::Prior => "prior",
            WeightKind::Posterior => "posterior",
            WeightKind::Equal => "equal",
        };
        f.write_str(s)
    }
}

/// A nonnegative weight per domain summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightVectorRepr", into = "WeightVectorRepr")]
pub struct WeightVector {
    kind: WeightKind,
    values: [f64; N_DOMAINS],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightVectorRepr {
    kind: WeightKind,
    weights: BTreeMap<DomainId, f64>,
}

impl TryFrom<WeightVectorRepr> for WeightVector {
    type Error = Error;

    fn try_from(r: WeightVectorRepr) -> Result<Self> {
        let mut values = [0.0; N_DOMAINS];
        for (d, v) in r.weights {
            values[d.index()] = v;
        }
        WeightVector::from_values(r.kind, values)
    }
}

impl From<WeightVector> for WeightVectorRepr {
    fn from(w: WeightVector) -> Self {
        WeightVectorRepr { kind: w.kind, weights: DomainId::ALL.iter().map(|d| (*d, w.values[d.index()])).collect() }
    }
}

impl WeightVector {
    /// Accepts values that already lie on the simplex.
    pub fn from_values(kind: WeightKind, values: [f64; N_DOMAINS]) -> Result<Self> {
        for d in DomainId::ALL {
            let v = values[d.index()];
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidWeight { domain: d, value: v });
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Schema(format!("{kind} weights sum to {sum}, expected 1")));
        }
        Ok(WeightVector { kind, values })
    }

    pub fn equal() -> Self {
        WeightVector { kind: WeightKind::Equal, values: [0.1; N_DOMAINS] }
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn values(&self) -> &[f64; N_DOMAINS] {
        &self.values
    }

    pub fn get(&self, d: DomainId) -> f64 {
        self.values[d.index()]
    }

    /// Same weights under a different role, e.g. using the CHC prior as the
    /// g-loading input of a sweep.
    pub fn with_kind(mut self, kind: WeightKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    fn expect_kind(&self, expected: WeightKind) -> Result<()> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(Error::KindMismatch { expected: expected.to_string(), found: self.kind.to_string() })
        }
    }
}

/// Divides each raw entry by the total. Domains absent from `raw` count as 0.
pub fn normalize(raw: &BTreeMap<DomainId, f64>, kind: WeightKind) -> Result<WeightVector> {
    let mut values = [0.0; N_DOMAINS];
    for (&d, &v) in raw {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidWeight { domain: d, value: v });
        }
        values[d.index()] = v;
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    for v in &mut values {
        *v /= total;
    }
    Ok(WeightVector { kind, values })
}

/// The illustrative CHC prior: R 14%, K 13%, M 13%, WM 12%, RW 12%, V 8%,
/// A 8%, MS 7%, MR 7%, S 6%.
pub fn chc_default_prior() -> WeightVector {
    let values = CHC_PRIOR_PERCENT.map(|p| p as f64 / 100.0);
    WeightVector { kind: WeightKind::Prior, values }
}

/// Non-normative structural prior: uniform over the upstream domains MS, MR,
/// R and WM. Shipped as an example input only.
pub fn example_structural_prior() -> WeightVector {
    let mut values = [0.0; N_DOMAINS];
    for d in [DomainId::MS, DomainId::MR, DomainId::R, DomainId::WM] {
        values[d.index()] = 0.25;
    }
    WeightVector { kind: WeightKind::Structural, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixParams {
    Prior { lambda: f64, mu: f64 },
    Posterior { alpha: f64, beta: f64, gamma: f64 },
}

impl MixParams {
    pub fn prior(lambda: f64) -> Self {
        MixParams::Prior { lambda, mu: 1.0 - lambda }
    }

    pub fn posterior(alpha: f64, beta: f64, gamma: f64) -> Self {
        MixParams::Posterior { alpha, beta, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        let parts: &[f64] = match self {
            MixParams::Prior { lambda, mu } => &[*lambda, *mu],
            MixParams::Posterior { alpha, beta, gamma } => &[*alpha, *beta, *gamma],
        };
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidMix(format!("coefficients {parts:?} must lie in [0, 1]")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidMix(format!("coefficients {parts:?} sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Whether lambda lies in the recommended `[0.6, 0.9]` band. Posterior
    /// mixes carry no such recommendation.
    pub fn is_recommended(&self) -> bool {
        match self {
            MixParams::Prior { lambda, .. } => (RECOMMENDED_LAMBDA.0..=RECOMMENDED_LAMBDA.1).contains(lambda),
            MixParams::Posterior { .. } => true,
        }
    }
}

fn combine(kind: WeightKind, parts: &[(f64, &WeightVector)]) -> WeightVector {
    let mut values = [0.0; N_DOMAINS];
    for (coef, w) in parts {
        for (out, v) in values.iter_mut().zip(w.values.iter()) {
            *out += coef * v;
        }
    }
    WeightVector { kind, values }
}

/// `w_i = lambda * g_i + mu * s_i`.
pub fn prior_weights(g: &WeightVector, s: &WeightVector, mix: MixParams) -> Result<WeightVector> {
    g.expect_kind(WeightKind::GLoadings)?;
    s.expect_kind(WeightKind::Structural)?;
    mix.validate()?;
    let MixParams::Prior { lambda, mu } = mix else {
        return Err(Error::InvalidMix("prior weights need a prior-mode mix".into()));
    };
    Ok(combine(WeightKind::Prior, &[(lambda, g), (mu, s)]))
}

/// `w_i = alpha * g_i + beta * s_i + gamma * h_i`.
pub fn posterior_weights(g: &WeightVector, s: &WeightVector, h: &WeightVector, mix: MixParams) -> Result<WeightVector> {
    g.expect_kind(WeightKind::GLoadings)?;
    s.expect_kind(WeightKind::Structural)?;
    h.expect_kind(WeightKind::Stabilizing)?;
    mix.validate()?;
    let MixParams::Posterior { alpha, beta, gamma } = mix else {
        return Err(Error::InvalidMix("posterior weights need a posterior-mode mix".into()));
    };
    Ok(combine(WeightKind::Posterior, &[(alpha, g), (beta, s), (gamma, h)]))
}

pub fn weighted_score(profile: &DomainProfile, w: &WeightVector) -> Result<f64> {
    let a = profile.to_array()?;
    let s: f64 = a.iter().zip(w.values.iter()).map(|(a, w)| a * w).sum();
    Ok(s.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityBand {
    pub lambda_grid: Vec<f64>,
    pub scores: Vec<f64>,
    pub min_score: f64,
    pub max_score: f64,
    pub equal_weight_score: f64,
    /// Grid points outside the recommended lambda range.
    pub non_recommended: Vec<f64>,
}

pub fn sensitivity_sweep(
    profile: &DomainProfile,
    g: &WeightVector,
    s: &WeightVector,
    grid: &[f64],
) -> Result<SensitivityBand> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::InvalidGrid("every lambda must lie in [0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    let mut non_recommended = Vec::new();
    for &lambda in grid {
        let mix = MixParams::prior(lambda);
        if !mix.is_recommended() {
            non_recommended.push(lambda);
        }
        scores.push(weighted_score(profile, &prior_weights(g, s, mix)?)?);
    }
    let min_score = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max_score = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SensitivityBand {
        lambda_grid: grid.to_vec(),
        scores,
        min_score,
        max_score,
        equal_weight_score: weighted_score(profile, &WeightVector::equal())?,
        non_recommended,
    })
}

/// Headline lambda used for the single `S_prior` figure when a config does
/// not name one.
pub const DEFAULT_HEADLINE_LAMBDA: f64 = 0.75;

/// Raw weight inputs as supplied by an operator. Vectors are normalized on
/// [`WeightsConfig::resolve`], so any nonnegative scale works.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub format_version: String,
    pub g_loadings: BTreeMap<DomainId, f64>,
    pub structural: BTreeMap<DomainId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stabilizing: Option<BTreeMap<DomainId, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub headline_lambda: Option<f64>,
    /// When present, the headline score uses posterior weights instead of
    /// the prior at `headline_lambda`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<MixParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedWeights {
    pub g: WeightVector,
    pub s: WeightVector,
    pub h: Option<WeightVector>,
    pub lambda_grid: Vec<f64>,
    pub headline_mix: MixParams,
    pub headline: WeightVector,
}

impl WeightsConfig {
    pub fn resolve(&self) -> Result<ResolvedWeights> {
        let g = normalize(&self.g_loadings, WeightKind::GLoadings)?;
        let s = normalize(&self.structural, WeightKind::Structural)?;
        let h = match &self.stabilizing {
            Some(raw) => Some(normalize(raw, WeightKind::Stabilizing)?),
            None => None,
        };
        let lambda_grid = self.lambda_grid.clone().unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
        let (headline_mix, headline) = match (self.posterior, &h) {
            (Some(mix), Some(h)) => (mix, posterior_weights(&g, &s, h, mix)?),
            (Some(_), None) => return Err(Error::InvalidMix("a posterior mix needs a stabilizing vector".into())),
            (None, _) => {
                let mix = MixParams::prior(self.headline_lambda.unwrap_or(DEFAULT_HEADLINE_LAMBDA));
                (mix, prior_weights(&g, &s, mix)?)
            }
        };
        Ok(ResolvedWeights { g, s, h, lambda_grid, headline_mix, headline })
    }
}
