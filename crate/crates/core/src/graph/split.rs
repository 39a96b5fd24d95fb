use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.15, 0.15];

/// Random disjoint partition of time steps into train, validation and test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn n_steps(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    /// Drops the given steps from every part.
    pub fn without(mut self, steps: &[usize]) -> Self {
        for part in [&mut self.train, &mut self.valid, &mut self.test] {
            part.retain(|t| !steps.contains(t));
        }
        self
    }

    /// Every step in the test set, in order; used for evaluation-only data.
    pub fn all_test(n_steps: usize) -> Self {
        Self {
            ratios: [0.0, 0.0, 1.0],
            seed: 0,
            train: Vec::new(),
            valid: Vec::new(),
            test: (0..n_steps).collect(),
        }
    }
}

/// Shuffle `0..n_steps` with `seed` and cut it by `ratios`. Train and
/// validation sizes are rounded; the test set takes the remainder. Each
/// part is returned sorted.
pub fn split_timesteps(n_steps: usize, ratios: [f64; 3], seed: u64) -> Result<SplitSpec> {
    if n_steps < 10 {
        return Err(Error::config(format!("need at least 10 steps to split, got {n_steps}")));
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let n_train = (ratios[0] * n_steps as f64).round() as usize;
    let n_valid = ((ratios[1] * n_steps as f64).round() as usize).min(n_steps - n_train);
    let mut order: Vec<usize> = (0..n_steps).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut valid = order[n_train..n_train + n_valid].to_vec();
    let mut test = order[n_train + n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec {
        ratios,
        seed,
        train,
        valid,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_coverage() {
        let s = split_timesteps(10_000, DEFAULT_RATIOS, 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (7000, 1500, 1500));
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10_000).collect::<Vec<_>>());
        assert_eq!(s, split_timesteps(10_000, DEFAULT_RATIOS, 1).unwrap());
        assert_ne!(s.train, split_timesteps(10_000, DEFAULT_RATIOS, 2).unwrap().train);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(split_timesteps(9, DEFAULT_RATIOS, 0), Err(Error::Config(_))));
        assert!(matches!(split_timesteps(100, [0.5, 0.2, 0.2], 0), Err(Error::Config(_))));
    }

    #[test]
    fn sizes_within_one_of_ratio() {
        for t in 10..200 {
            let s = split_timesteps(t, DEFAULT_RATIOS, t as u64).unwrap();
            for (part, r) in [(&s.train, 0.7), (&s.valid, 0.15), (&s.test, 0.15)] {
                assert!((part.len() as f64 - r * t as f64).abs() <= 1.0 + 1e-9, "T={t}");
            }
        }
    }
}
