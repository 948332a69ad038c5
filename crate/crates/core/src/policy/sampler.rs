//! Sampling with replacement that balances distance conditions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};

/// Draws sample indices with probability inversely proportional to the size
/// of each sample's condition, so every condition is expected equally often.
#[derive(Debug, Clone)]
pub struct ConditionSampler {
    dist: WeightedIndex<f64>,
}

impl ConditionSampler {
    /// `conditions[i]` is the condition label of sample `i`; labels must be
    /// dense in `0..n_conditions`.
    pub fn new(conditions: &[usize], n_conditions: usize) -> Result<Self> {
        let mut counts = vec![0usize; n_conditions];
        for &c in conditions {
            if c >= n_conditions {
                return Err(Error::Contract(format!("condition {c} out of range")));
            }
            counts[c] += 1;
        }
        if let Some(empty) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Contract(format!("condition {empty} has no samples")));
        }
        let weights: Vec<f64> = conditions.iter().map(|&c| 1.0 / counts[c] as f64).collect();
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| Error::Contract(format!("sampler weights: {e}")))?;
        Ok(Self { dist })
    }

    pub fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| self.dist.sample(rng)).collect()
    }
}
