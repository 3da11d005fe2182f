use gfiqa_tensor::optim::{Adam, AdamConfig};
use gfiqa_tensor::StatsPool;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::ModelCheckpoint;
use super::dataset::Dataset;
use crate::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::generative::GeneratorHandle;
use crate::metrics::{score, Scores};
use crate::model::{Extractors, ObjectiveConfig, QualityModel, Variant};
use crate::objectives::LossBreakdown;
use crate::util::{derive_seed, rng, sha256_hex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsMode {
    Batch,
    Instance,
}

impl From<StatsMode> for StatsPool {
    fn from(m: StatsMode) -> Self {
        match m {
            StatsMode::Batch => StatsPool::Batch,
            StatsMode::Instance => StatsPool::Instance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub decay_every: usize,
    pub total_epochs: usize,
    /// Stop after this many optimizer steps, if set.
    pub max_steps: Option<usize>,
    /// Number of leading style codes kept for the reference features.
    pub k: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Statistics pooling for feature modulation while training.
    pub train_stats: StatsMode,
    #[serde(rename = "loss")]
    pub objective: ObjectiveConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            base_lr: 5e-5,
            lr_decay_factor: 0.1,
            decay_every: 10,
            total_epochs: 25,
            max_steps: None,
            k: 12,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            train_stats: StatsMode::Batch,
            objective: ObjectiveConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, num_codes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.decay_every == 0 || self.total_epochs == 0 {
            return bad("batch_size, decay_every and total_epochs must be positive".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) || !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad(format!("base_lr {} must be positive and lr_decay_factor {} in (0, 1]", self.base_lr, self.lr_decay_factor));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        if self.k == 0 || self.k > num_codes {
            return bad(format!("K = {} must lie in 1..={num_codes}", self.k));
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive when set".into());
        }
        self.objective.weights.validate()
    }

    /// Digest of the canonical JSON form, recorded in checkpoints.
    pub fn hash(&self, arch: &ArchConfig, variant: Variant) -> String {
        let v = serde_json::json!({ "arch": arch, "train": self, "variant": variant });
        sha256_hex(v.to_string().as_bytes())
    }
}

/// Step-decayed learning rate for a zero-based epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.base_lr * cfg.lr_decay_factor.powi((epoch / cfg.decay_every) as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    /// Means over the epoch's steps.
    pub losses: LossBreakdown,
    pub val_srcc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: QualityModel,
    pub epochs: Vec<EpochRecord>,
    pub step_losses: Vec<LossBreakdown>,
    pub best: Option<ModelCheckpoint>,
}

/// Keeps the checkpoint with the highest validation SRCC seen so far.
/// Undefined SRCC ranks below every value; ties keep the earlier epoch.
#[derive(Clone, Debug, Default)]
pub struct BestTracker {
    best: Option<ModelCheckpoint>,
}

impl BestTracker {
    pub fn offer(&mut self, ckpt: &ModelCheckpoint) {
        let key = |c: &ModelCheckpoint| c.val_srcc.unwrap_or(f64::NEG_INFINITY);
        if self.best.as_ref().is_none_or(|b| key(ckpt) > key(b)) {
            self.best = Some(ckpt.clone());
        }
    }

    pub fn best(&self) -> Option<&ModelCheckpoint> {
        self.best.as_ref()
    }

    pub fn into_best(self) -> Option<ModelCheckpoint> {
        self.best
    }
}

pub fn select_best(stream: impl IntoIterator<Item = ModelCheckpoint>) -> Option<ModelCheckpoint> {
    let mut t = BestTracker::default();
    for c in stream {
        t.offer(&c);
    }
    t.into_best()
}

pub struct TrainEnv<'a> {
    pub generator: Option<&'a GeneratorHandle>,
    pub extractors: &'a Extractors,
}

fn mean_breakdown(steps: &[LossBreakdown]) -> LossBreakdown {
    if steps.is_empty() {
        return LossBreakdown::default();
    }
    let n = steps.len() as f64;
    let mut acc = [0.0; 6];
    for s in steps {
        for (a, v) in acc.iter_mut().zip([s.l2, s.percep, s.id, s.reg, s.quality, s.total]) {
            *a += v;
        }
    }
    let [l2, percep, id, reg, quality, total] = acc.map(|a| a / n);
    LossBreakdown { l2, percep, id, reg, quality, total }
}

/// Trains a fresh model, calling `on_epoch` with each epoch's record and
/// checkpoint. Batches follow a per-epoch shuffle derived from the seed.
pub fn train(
    env: &TrainEnv<'_>,
    arch: &ArchConfig,
    variant: Variant,
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochRecord, &ModelCheckpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate(arch.num_codes())?;
    if train_set.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if train_set.resolution != arch.resolution {
        return Err(Error::Config(format!("dataset resolution {} differs from model resolution {}", train_set.resolution, arch.resolution)));
    }
    let mut model = QualityModel::new(arch, variant, cfg.k, cfg.seed)?;
    let generator = if variant.uses_generator() { env.generator } else { None };
    let generator_hash = generator.map(|g| g.checksum().to_string()).unwrap_or_default();
    let config_hash = cfg.hash(arch, variant);
    let mut adam = Adam::new(
        &model.params,
        AdamConfig {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        },
    );
    let pool: StatsPool = cfg.train_stats.into();
    let mut epochs = Vec::new();
    let mut step_losses = Vec::new();
    let mut tracker = BestTracker::default();
    let mut steps_done = 0;

    for epoch in 0..cfg.total_epochs {
        let lr = lr_at(epoch, cfg);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng(derive_seed(cfg.seed, 1000 + epoch as u64)));
        let mut epoch_losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| steps_done >= m) {
                break;
            }
            let (x, q) = train_set.batch(chunk);
            let (loss, breakdown) = model.loss(generator, env.extractors, &x, &q, &cfg.objective, pool)?;
            if !loss.item().is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}, step {steps_done}: {breakdown:?}")));
            }
            let grads = loss.backward();
            adam.step(&mut model.params, &grads, lr);
            steps_done += 1;
            epoch_losses.push(breakdown);
        }
        if epoch_losses.is_empty() {
            break;
        }
        let val_srcc = match val_set {
            Some(v) if !v.is_empty() => {
                let s = evaluate(&model, generator, v, cfg.batch_size)?.scores.srcc;
                s.is_finite().then_some(s)
            }
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            lr,
            steps: epoch_losses.len(),
            losses: mean_breakdown(&epoch_losses),
            val_srcc,
        };
        let ckpt = ModelCheckpoint {
            model: model.clone(),
            generator_hash: generator_hash.clone(),
            config_hash: config_hash.clone(),
            epoch,
            val_srcc,
        };
        on_epoch(&record, &ckpt)?;
        tracker.offer(&ckpt);
        step_losses.extend(epoch_losses);
        epochs.push(record);
    }
    Ok(TrainOutcome {
        model,
        epochs,
        step_losses,
        best: tracker.into_best(),
    })
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub predictions: Vec<(String, f64)>,
    pub scores: Scores,
}

/// Predicts every sample and scores the predictions against the labels.
pub fn evaluate(model: &QualityModel, generator: Option<&GeneratorHandle>, data: &Dataset, batch_size: usize) -> Result<Evaluation> {
    let predictions = predict_dataset(model, generator, data, batch_size)?;
    let preds: Vec<f64> = predictions.iter().map(|p| p.1).collect();
    let scores = if data.len() >= 2 {
        score(&preds, &data.labels())?
    } else {
        Scores {
            srcc: f64::NAN,
            plcc: f64::NAN,
            rmse: crate::metrics::rmse(&preds, &data.labels())?,
        }
    };
    Ok(Evaluation { predictions, scores })
}

pub fn predict_dataset(model: &QualityModel, generator: Option<&GeneratorHandle>, data: &Dataset, batch_size: usize) -> Result<Vec<(String, f64)>> {
    if data.is_empty() {
        return Err(Error::Input("nothing to evaluate".into()));
    }
    let generator = if model.variant.uses_generator() { generator } else { None };
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, _) = data.batch(chunk);
        let q = model.predict(generator, &x)?;
        out.extend(chunk.iter().zip(q).map(|(&i, v)| (data.samples[i].image_id.clone(), v)));
    }
    Ok(out)
}
