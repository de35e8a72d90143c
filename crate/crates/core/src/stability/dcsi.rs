use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NumericGuards, TeachRetestRecord};

pub struct Screening<'a> {
    pub included: Vec<&'a TeachRetestRecord>,
    pub excluded_floor: Vec<String>,
    pub excluded_ceiling: Vec<String>,
}

/// Drops items whose baseline is below the floor (or zero) or above the
/// ceiling; both bounds are inclusive for the kept set.
pub fn screen_items<'a>(records: &'a [TeachRetestRecord], guards: &NumericGuards) -> Screening<'a> {
    let mut s = Screening { included: vec![], excluded_floor: vec![], excluded_ceiling: vec![] };
    for rec in records {
        if rec.baseline_score < guards.screening_floor || rec.baseline_score <= 0.0 {
            s.excluded_floor.push(rec.item_id.clone());
        } else if rec.baseline_score > guards.screening_ceiling {
            s.excluded_ceiling.push(rec.item_id.clone());
        } else {
            s.included.push(rec);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingDelay {
    pub item_id: String,
    pub delay_hours: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcsiResult {
    pub dcsi: f64,
    pub per_item: BTreeMap<String, f64>,
    pub excluded_floor: Vec<String>,
    pub excluded_ceiling: Vec<String>,
    /// Screened-in items with no delayed score at all.
    pub excluded_no_delays: Vec<String>,
    pub per_delay_means: BTreeMap<u32, f64>,
    /// Registered delays an included item has no score for. These are
    /// skipped, never imputed.
    pub missing_delays: Vec<MissingDelay>,
}

impl DcsiResult {
    pub fn at_delay(&self, hours: u32) -> Option<f64> {
        self.per_delay_means.get(&hours).copied()
    }
}

fn retained(score: f64, baseline: f64) -> f64 {
    (score / baseline).min(1.0)
}

/// Mean capped retention ratio over items, each item averaged over the
/// delays it actually has.
pub fn dcsi(records: &[TeachRetestRecord], registered_delays: &[u32], guards: &NumericGuards) -> Result<DcsiResult> {
    let screening = screen_items(records, guards);
    let registered: BTreeSet<u32> = registered_delays.iter().copied().collect();

    let mut per_item = BTreeMap::new();
    let mut item_values = Vec::new();
    let mut by_delay: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut excluded_no_delays = Vec::new();
    let mut missing_delays = Vec::new();

    for rec in &screening.included {
        if rec.delayed_scores.is_empty() {
            excluded_no_delays.push(rec.item_id.clone());
            continue;
        }
        for &d in &registered {
            if !rec.delayed_scores.contains_key(&d) {
                missing_delays.push(MissingDelay { item_id: rec.item_id.clone(), delay_hours: d });
            }
        }
        let ratios: Vec<f64> = rec
            .delayed_scores
            .iter()
            .map(|(&d, &s)| {
                let r = retained(s, rec.baseline_score);
                by_delay.entry(d).or_default().push(r);
                r
            })
            .collect();
        let v = ratios.iter().sum::<f64>() / ratios.len() as f64;
        per_item.insert(rec.item_id.clone(), v);
        item_values.push(v);
    }

    if item_values.is_empty() {
        return Err(Error::EmptyAfterExclusion("no retention items survive screening"));
    }
    Ok(DcsiResult {
        dcsi: item_values.iter().sum::<f64>() / item_values.len() as f64,
        per_item,
        excluded_floor: screening.excluded_floor,
        excluded_ceiling: screening.excluded_ceiling,
        excluded_no_delays,
        per_delay_means: by_delay.into_iter().map(|(d, v)| (d, v.iter().sum::<f64>() / v.len() as f64)).collect(),
        missing_delays,
    })
}
