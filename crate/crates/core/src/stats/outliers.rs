use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::trajectory::TrialMetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutlierRule {
    /// Drop movement times outside `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]` per condition.
    #[default]
    Iqr,
    None,
}

const MIN_GROUP_FOR_FILTERING: usize = 4;

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Splits trials into kept and removed; order within each list is preserved.
/// Trials without a movement time are never removed.
pub fn remove_outliers(
    trials: &[TrialMetric],
    rule: OutlierRule,
) -> (Vec<TrialMetric>, Vec<TrialMetric>) {
    if rule == OutlierRule::None {
        return (trials.to_vec(), Vec::new());
    }
    let mut groups: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
    for t in trials {
        if let Some(mt) = t.movement_time_s {
            groups
                .entry((t.distance_m.to_bits(), t.width_m.to_bits()))
                .or_default()
                .push(mt);
        }
    }
    let fences: BTreeMap<(u64, u64), (f64, f64)> = groups
        .into_iter()
        .filter(|(_, v)| v.len() >= MIN_GROUP_FOR_FILTERING)
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            let q1 = quantile(&v, 0.25);
            let q3 = quantile(&v, 0.75);
            let iqr = q3 - q1;
            (k, (q1 - 1.5 * iqr, q3 + 1.5 * iqr))
        })
        .collect();

    trials.iter().cloned().partition(|t| {
        let key = (t.distance_m.to_bits(), t.width_m.to_bits());
        match (t.movement_time_s, fences.get(&key)) {
            (Some(mt), Some(&(lo, hi))) => mt >= lo && mt <= hi,
            _ => true,
        }
    })
}
