use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::ArchConfig;
use crate::container;
use crate::error::{Error, Result};
use crate::model::{QualityModel, Variant};

const CHECKPOINT_KIND: &str = "gfiqa-checkpoint";

/// Trained encoder and predictor parameters with the provenance needed to
/// reuse them.
#[derive(Clone, Debug)]
pub struct ModelCheckpoint {
    pub model: QualityModel,
    /// Checksum of the generator the model was trained against; empty when
    /// the variant does not use one.
    pub generator_hash: String,
    pub config_hash: String,
    pub epoch: usize,
    pub val_srcc: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    kind: String,
    arch: ArchConfig,
    variant: Variant,
    k: usize,
    epoch: usize,
    val_srcc: Option<f64>,
    generator_hash: String,
    config_hash: String,
}

impl ModelCheckpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = Meta {
            kind: CHECKPOINT_KIND.into(),
            arch: self.model.arch.clone(),
            variant: self.model.variant,
            k: self.model.k,
            epoch: self.epoch,
            val_srcc: self.val_srcc,
            generator_hash: self.generator_hash.clone(),
            config_hash: self.config_hash.clone(),
        };
        let meta = serde_json::to_value(meta).map_err(|e| Error::Input(e.to_string()))?;
        container::encode(&meta, self.model.params.entries().iter().map(|e| (e.name.as_str(), &e.shape[..], e.data())))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let c = container::decode(bytes)?;
        let meta: Meta = serde_json::from_value(c.meta.clone()).map_err(|e| Error::Input(format!("checkpoint manifest: {e}")))?;
        if meta.kind != CHECKPOINT_KIND {
            return Err(Error::Input(format!("not a checkpoint: kind {:?}", meta.kind)));
        }
        let mut model = QualityModel::new(&meta.arch, meta.variant, meta.k, 0)?;
        let mut loaded = gfiqa_tensor::ParamStore::new(true);
        for e in model.params.entries() {
            let (entry, data) = c.get(&e.name).ok_or_else(|| Error::Input(format!("checkpoint lacks {}", e.name)))?;
            if entry.shape != e.shape {
                return Err(Error::Input(format!("checkpoint tensor {} has shape {:?}, expected {:?}", e.name, entry.shape, e.shape)));
            }
            loaded.add(e.name.clone(), &e.shape, data.clone());
        }
        if c.tensors.len() != model.params.len() {
            return Err(Error::Input(format!("checkpoint holds {} tensors, model has {}", c.tensors.len(), model.params.len())));
        }
        model.params.copy_values_from(&loaded).map_err(Error::Input)?;
        Ok(Self {
            model,
            generator_hash: meta.generator_hash,
            config_hash: meta.config_hash,
            epoch: meta.epoch,
            val_srcc: meta.val_srcc,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::atomic_write(path, &self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Input(m) => Error::Input(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
