//! The full quality model: encoder, frozen generator and predictor, with
//! the ablation variants.

use std::fmt;
use std::str::FromStr;

use gfiqa_tensor::{no_grad, ParamStore, StatsPool, Tensor};
use serde::{Deserialize, Serialize};

use crate::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::generative::{synthesize_full, Encoder, GeneratorHandle};
use crate::objectives::{face_mask, loss_id, loss_l2, loss_percep, loss_quality, loss_reg, total_loss, FeatureExtractor, LossBreakdown, LossTerms, LossWeights, RegMode};
use crate::predictor::{Fusion, Predictor, PredictorOptions};
use crate::util::derive_seed;

/// Model configurations compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "without_reference")]
    WithoutReference,
    K4,
    K8,
    K12,
    K16,
    #[serde(rename = "without_map2quality")]
    WithoutMap2Quality,
    #[serde(rename = "without_modulation")]
    WithoutModulation,
    #[serde(rename = "baseline_encoder")]
    BaselineEncoder,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Full,
        Variant::WithoutReference,
        Variant::K4,
        Variant::K8,
        Variant::K12,
        Variant::K16,
        Variant::WithoutMap2Quality,
        Variant::WithoutModulation,
        Variant::BaselineEncoder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WithoutReference => "without_reference",
            Variant::K4 => "K4",
            Variant::K8 => "K8",
            Variant::K12 => "K12",
            Variant::K16 => "K16",
            Variant::WithoutMap2Quality => "without_map2quality",
            Variant::WithoutModulation => "without_modulation",
            Variant::BaselineEncoder => "baseline_encoder",
        }
    }

    /// Truncation index on the 16-code scale, for the K variants.
    pub fn k_on_16(self) -> Option<usize> {
        match self {
            Variant::K4 => Some(4),
            Variant::K8 => Some(8),
            Variant::K12 => Some(12),
            Variant::K16 => Some(16),
            _ => None,
        }
    }

    pub fn predictor_options(self) -> PredictorOptions {
        match self {
            Variant::WithoutReference | Variant::BaselineEncoder => PredictorOptions {
                fusion: Fusion::None,
                attention: false,
            },
            Variant::WithoutMap2Quality => PredictorOptions {
                fusion: Fusion::Modulate,
                attention: false,
            },
            Variant::WithoutModulation => PredictorOptions {
                fusion: Fusion::Concat,
                attention: true,
            },
            _ => PredictorOptions::default(),
        }
    }

    /// Whether the style codes are trained through reconstruction losses.
    pub fn uses_generator(self) -> bool {
        self != Variant::BaselineEncoder
    }

    /// Truncation index actually used for `n` codes, given the configured `k`.
    pub fn effective_k(self, k: usize, n: usize) -> usize {
        match self.k_on_16() {
            Some(k16) => scale_k(k16, n),
            None => k,
        }
    }
}

/// Maps a truncation index on the 16-code scale to `n` codes, rounding half
/// up and clamping to `1..=n`.
pub fn scale_k(k16: usize, n: usize) -> usize {
    ((2 * k16 * n + 16) / 32).clamp(1, n)
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// Loss settings that do not change the architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub weights: LossWeights,
    pub reg_mode: RegMode,
    /// Restrict pixel and perceptual terms to a central box of this fraction.
    pub face_mask: Option<f64>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            reg_mode: RegMode::Offset,
            face_mask: None,
        }
    }
}

pub struct Extractors {
    pub perceptual: Box<dyn FeatureExtractor>,
    pub identity: Box<dyn FeatureExtractor>,
}

/// Forward-pass results for one batch.
#[derive(Clone, Debug)]
pub struct ModelOutput {
    pub quality: Tensor,
    pub reconstruction: Option<Tensor>,
    pub codes: Option<crate::generative::StyleCodeSet>,
    pub f_e: Tensor,
    pub f_g: Option<Tensor>,
}

#[derive(Clone, Debug)]
pub struct QualityModel {
    pub arch: ArchConfig,
    pub variant: Variant,
    /// Truncation index in effect.
    pub k: usize,
    pub encoder: Encoder,
    pub predictor: Predictor,
    pub params: ParamStore,
}

impl QualityModel {
    /// `k` is the configured truncation index; K variants override it.
    pub fn new(arch: &ArchConfig, variant: Variant, k: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        let n = arch.num_codes();
        if k == 0 || k > n {
            return Err(Error::Config(format!("K = {k} must lie in 1..={n}")));
        }
        let mut params = ParamStore::new(true);
        let encoder = Encoder::new(&mut params, arch, derive_seed(seed, 1))?;
        let predictor = Predictor::new(&mut params, arch, variant.predictor_options(), derive_seed(seed, 2))?;
        Ok(Self {
            arch: arch.clone(),
            variant,
            k: variant.effective_k(k, n),
            encoder,
            predictor,
            params,
        })
    }

    fn check_generator<'g>(&self, generator: Option<&'g GeneratorHandle>) -> Result<&'g GeneratorHandle> {
        let g = generator.ok_or_else(|| Error::Config(format!("variant {} needs a generator", self.variant)))?;
        if g.num_codes() != self.arch.num_codes() || g.code_dim() != self.arch.code_dim || g.spec().resolution != self.arch.resolution {
            return Err(Error::Config("generator does not match the model architecture".into()));
        }
        Ok(g)
    }

    /// Runs the model on a `[B, 3, R, R]` batch.
    pub fn forward(&self, generator: Option<&GeneratorHandle>, x: &Tensor, pool: StatsPool) -> Result<ModelOutput> {
        let needs_codes = self.variant.uses_generator();
        let (avg, g) = if needs_codes {
            let g = self.check_generator(generator)?;
            (g.average_code().to_vec(), Some(g))
        } else {
            (vec![0.0; self.arch.code_dim], None)
        };
        let enc = self.encoder.encode(&self.params, x, &avg)?;
        let f_e = enc.f_e.data.clone();
        let Some(g) = g else {
            let quality = self.predictor.predict_quality(&self.params, &f_e, None, pool)?;
            return Ok(ModelOutput {
                quality,
                reconstruction: None,
                codes: None,
                f_e,
                f_g: None,
            });
        };
        let n = enc.codes.num_codes();
        let uses_reference = self.predictor.options().fusion != Fusion::None;
        let (reconstruction, f_g) = if uses_reference && self.k == n {
            let s = g.synthesize(&enc.codes.injected(n))?;
            (s.image, Some(s.features.data))
        } else if uses_reference {
            let full = synthesize_full(&enc.codes, g)?;
            let s = g.synthesize(&enc.codes.injected(self.k))?;
            (full, Some(s.features.data))
        } else {
            (synthesize_full(&enc.codes, g)?, None)
        };
        let quality = self.predictor.predict_quality(&self.params, &f_e, f_g.as_ref(), pool)?;
        Ok(ModelOutput {
            quality,
            reconstruction: Some(reconstruction),
            codes: Some(enc.codes),
            f_e,
            f_g,
        })
    }

    /// Differentiable objective for a batch with labels `q` (`[B]`).
    pub fn loss(
        &self,
        generator: Option<&GeneratorHandle>,
        extractors: &Extractors,
        x: &Tensor,
        q: &Tensor,
        objective: &ObjectiveConfig,
        pool: StatsPool,
    ) -> Result<(Tensor, LossBreakdown)> {
        let out = self.forward(generator, x, pool)?;
        let mut terms = LossTerms {
            quality: Some(loss_quality(q, &out.quality)?),
            ..Default::default()
        };
        if let (Some(x_hat), Some(codes)) = (&out.reconstruction, &out.codes) {
            let mask = objective.face_mask.map(|f| face_mask(self.arch.resolution, f)).transpose()?;
            terms.l2 = Some(loss_l2(x, x_hat, mask.as_ref())?);
            terms.percep = Some(loss_percep(x, x_hat, extractors.perceptual.as_ref(), mask.as_ref())?);
            terms.id = Some(loss_id(x, x_hat, extractors.identity.as_ref())?);
            terms.reg = Some(loss_reg(codes, objective.reg_mode));
        }
        Ok(total_loss(&terms, &objective.weights))
    }

    /// Scores without recording gradients, using per-sample statistics.
    pub fn predict(&self, generator: Option<&GeneratorHandle>, x: &Tensor) -> Result<Vec<f64>> {
        let _guard = no_grad();
        let out = self.forward(generator, x, StatsPool::Instance)?;
        if !out.quality.all_finite() {
            return Err(Error::Numerical("non-finite quality prediction".into()));
        }
        Ok(out.quality.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_scaling() {
        assert_eq!([4, 8, 12, 16].map(|k| scale_k(k, 16)), [4, 8, 12, 16]);
        assert_eq!([4, 8, 12, 16].map(|k| scale_k(k, 10)), [3, 5, 8, 10]);
        assert_eq!(scale_k(1, 2), 1);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.as_str()));
        }
        assert!("K5".parse::<Variant>().is_err());
    }
}
