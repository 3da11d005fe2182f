use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::train::{evaluate, train, TrainConfig, TrainEnv};
use crate::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::model::Variant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub srcc: f64,
    pub plcc: f64,
    pub rmse: f64,
}

/// Trains each variant with the same seed and data, keeps its best
/// validation epoch and scores it on the test set.
pub fn run_ablation(
    env: &TrainEnv<'_>,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    test_set: &Dataset,
    variants: &[Variant],
    mut on_row: impl FnMut(&AblationRow) -> Result<()>,
) -> Result<Vec<AblationRow>> {
    if variants.is_empty() {
        return Err(Error::Config("no variants requested".into()));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let outcome = train(env, arch, variant, cfg, train_set, Some(val_set), |_, _| Ok(()))?;
        let best = outcome.best.ok_or_else(|| Error::Numerical(format!("variant {variant} produced no checkpoint")))?;
        let eval = evaluate(&best.model, env.generator, test_set, cfg.batch_size)?;
        let row = AblationRow {
            variant,
            srcc: eval.scores.srcc,
            plcc: eval.scores.plcc,
            rmse: eval.scores.rmse,
        };
        on_row(&row)?;
        rows.push(row);
    }
    Ok(rows)
}
