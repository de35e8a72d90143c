use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DomainProfile, N_DOMAINS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMeasure {
    Pearson,
    Spearman,
    Cosine,
}

/// Similarity of two complete profiles in canonical domain order, in `[-1, 1]`.
pub fn profile_similarity(base: &DomainProfile, pert: &DomainProfile, measure: SimilarityMeasure) -> Result<f64> {
    let x = base.to_array()?;
    let y = pert.to_array()?;
    let degenerate = |p: &DomainProfile| Error::DegenerateProfile(p.label.clone());
    match measure {
        SimilarityMeasure::Pearson => pearson(&x, &y).map_err(|which| degenerate(if which == 0 { base } else { pert })),
        SimilarityMeasure::Spearman => pearson(&average_ranks(&x), &average_ranks(&y))
            .map_err(|which| degenerate(if which == 0 { base } else { pert })),
        SimilarityMeasure::Cosine => {
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nx == 0.0 {
                return Err(degenerate(base));
            }
            if ny == 0.0 {
                return Err(degenerate(pert));
            }
            let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            Ok((dot / (nx * ny)).clamp(-1.0, 1.0))
        }
    }
}

/// Pearson correlation; `Err(0)` or `Err(1)` names the zero-variance input.
fn pearson(x: &[f64; N_DOMAINS], y: &[f64; N_DOMAINS]) -> std::result::Result<f64, usize> {
    // Constant vectors are caught exactly; the centred sums below can be a
    // rounding residue away from zero for them.
    if x.iter().all(|v| *v == x[0]) {
        return Err(0);
    }
    if y.iter().all(|v| *v == y[0]) {
        return Err(1);
    }
    let n = N_DOMAINS as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub(crate) fn average_ranks(v: &[f64; N_DOMAINS]) -> [f64; N_DOMAINS] {
    let mut order: Vec<usize> = (0..N_DOMAINS).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(Ordering::Equal));
    let mut ranks = [0.0; N_DOMAINS];
    let mut i = 0;
    while i < N_DOMAINS {
        let mut j = i;
        while j + 1 < N_DOMAINS && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}
