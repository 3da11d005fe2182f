use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.1,
            test_frac: 0.2,
            seed: 0,
        }
    }
}

pub const MIN_SPLIT_SIZE: usize = 10;

/// Shuffles the ids and cuts them into train, validation and test sets.
/// Validation and test sizes are rounded down; the remainder goes to train.
pub fn split_dataset(ids: &[String], spec: &SplitSpec) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
    let f = [spec.train_frac, spec.val_frac, spec.test_frac];
    if f.iter().any(|v| !v.is_finite() || *v < 0.0) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {f:?} must be non-negative and sum to 1")));
    }
    if ids.len() < MIN_SPLIT_SIZE {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SPLIT_SIZE} ids to split, got {}", ids.len())));
    }
    let n = ids.len();
    let count = |frac: f64| ((n as f64) * frac + 1e-9).floor() as usize;
    let (n_val, n_test) = (count(spec.val_frac), count(spec.test_frac));
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut rng(spec.seed));
    let test = shuffled.split_off(n - n_test);
    let val = shuffled.split_off(n - n_test - n_val);
    Ok((shuffled, val, test))
}
