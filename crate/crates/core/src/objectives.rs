//! Training objectives: reconstruction, perceptual, identity, code
//! regularisation and quality terms, and their weighted sum.

use gfiqa_tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generative::StyleCodeSet;
use crate::nn::normal;
use crate::util::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub l2: f64,
    pub percep: f64,
    pub id: f64,
    pub reg: f64,
    pub quality: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l2: 1.0,
            percep: 0.8,
            id: 0.1,
            reg: 0.005,
            quality: 1.0,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.l2, self.percep, self.id, self.reg, self.quality]
    }

    pub fn scaled(&self, s: f64) -> Self {
        let [l2, percep, id, reg, quality] = self.as_array().map(|w| w * s);
        Self { l2, percep, id, reg, quality }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative, got {w:?}")));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Scalar values of each term and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l2: f64,
    pub percep: f64,
    pub id: f64,
    pub reg: f64,
    pub quality: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_components(c: [f64; 5], w: &LossWeights) -> Self {
        let total = c.iter().zip(w.as_array()).map(|(c, w)| c * w).sum();
        Self {
            l2: c[0],
            percep: c[1],
            id: c[2],
            reg: c[3],
            quality: c[4],
            total,
        }
    }

    pub fn components(&self) -> [f64; 5] {
        [self.l2, self.percep, self.id, self.reg, self.quality]
    }
}

/// Differentiable loss terms for one batch. Terms that a configuration
/// leaves out are `None` and count as zero.
#[derive(Clone, Debug, Default)]
pub struct LossTerms {
    pub l2: Option<Tensor>,
    pub percep: Option<Tensor>,
    pub id: Option<Tensor>,
    pub reg: Option<Tensor>,
    pub quality: Option<Tensor>,
}

/// Weighted sum of the terms. Zero-weight terms are not added to the graph.
pub fn total_loss(terms: &LossTerms, weights: &LossWeights) -> (Tensor, LossBreakdown) {
    let list = [&terms.l2, &terms.percep, &terms.id, &terms.reg, &terms.quality];
    let mut total: Option<Tensor> = None;
    let mut values = [0.0; 5];
    for ((t, w), v) in list.iter().zip(weights.as_array()).zip(values.iter_mut()) {
        let Some(t) = t else { continue };
        *v = t.item();
        if w == 0.0 {
            continue;
        }
        let term = t.mul_scalar(w);
        total = Some(match total {
            Some(acc) => acc.add(&term),
            None => term,
        });
    }
    let breakdown = LossBreakdown::from_components(values, weights);
    (total.unwrap_or_else(|| Tensor::scalar(0.0)), breakdown)
}

fn check_same(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() || a.rank() < 1 {
        return Err(Error::shape(a.shape(), b.shape()));
    }
    Ok(())
}

/// Per-sample Euclidean norm of a `[B, ...]` tensor, averaged over the batch.
fn mean_norm(d: &Tensor) -> Tensor {
    d.square().sum_dims(1, d.rank()).sqrt().mean_all()
}

/// Central square covering `fraction` of the image side, as a `[1, 1, H, W]` mask.
pub fn face_mask(side: usize, fraction: f64) -> Result<Tensor> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("face mask fraction {fraction} must lie in (0, 1]")));
    }
    let inner = ((side as f64) * fraction).round() as usize;
    let lo = (side - inner) / 2;
    let hi = lo + inner;
    let data = (0..side * side)
        .map(|i| {
            let (y, x) = (i / side, i % side);
            f64::from(u8::from((lo..hi).contains(&y) && (lo..hi).contains(&x)))
        })
        .collect();
    Ok(Tensor::from_vec(data, &[1, 1, side, side]))
}

fn apply_mask(x: &Tensor, mask: Option<&Tensor>) -> Tensor {
    match mask {
        Some(m) => x.mul(m),
        None => x.clone(),
    }
}

/// Pixel reconstruction: `‖x − x̂‖₂` per sample.
pub fn loss_l2(x: &Tensor, x_hat: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
    check_same(x, x_hat)?;
    Ok(mean_norm(&apply_mask(&x.sub(x_hat), mask)))
}

/// Distance between feature vectors of the two images.
pub fn loss_percep(x: &Tensor, x_hat: &Tensor, extractor: &dyn FeatureExtractor, mask: Option<&Tensor>) -> Result<Tensor> {
    check_same(x, x_hat)?;
    let fx = extractor.extract(&apply_mask(x, mask))?;
    let fy = extractor.extract(&apply_mask(x_hat, mask))?;
    check_same(&fx, &fy)?;
    Ok(mean_norm(&fx.sub(&fy)))
}

/// `1 − ⟨R(x), R(x̂)⟩` for unit-norm identity embeddings.
pub fn loss_id(x: &Tensor, x_hat: &Tensor, extractor: &dyn FeatureExtractor) -> Result<Tensor> {
    check_same(x, x_hat)?;
    let a = extractor.extract(x)?;
    let b = extractor.extract(x_hat)?;
    check_same(&a, &b)?;
    Ok(a.mul(&b).sum_dims(1, 2).mean_all().neg().add_scalar(1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegMode {
    /// Norm of the offsets, i.e. of the injected codes' deviation from w̄.
    #[default]
    Offset,
    /// Norm of `offsets − w̄`.
    SubtractAverage,
}

pub fn loss_reg(codes: &StyleCodeSet, mode: RegMode) -> Tensor {
    match mode {
        RegMode::Offset => mean_norm(&codes.offsets),
        RegMode::SubtractAverage => {
            let d = codes.average_code.len();
            let avg = Tensor::from_vec(codes.average_code.clone(), &[1, 1, d]);
            mean_norm(&codes.offsets.sub(&avg))
        }
    }
}

/// Mean absolute error between labels and predictions.
pub fn loss_quality(q: &Tensor, q_hat: &Tensor) -> Result<Tensor> {
    check_same(q, q_hat)?;
    Ok(q.sub(q_hat).abs().mean_all())
}

/// Maps a `[B, 3, H, W]` image batch to `[B, F]` feature vectors.
pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, images: &Tensor) -> Result<Tensor>;
}

/// Flattens the image.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlattenExtractor;

impl FeatureExtractor for FlattenExtractor {
    fn extract(&self, images: &Tensor) -> Result<Tensor> {
        let b = images.shape()[0];
        Ok(images.reshape(&[b, images.numel() / b]))
    }
}

/// Fixed random linear map of the flattened image.
#[derive(Clone, Debug)]
pub struct RandomLinearExtractor {
    weight: Tensor,
}

impl RandomLinearExtractor {
    pub fn new(input_len: usize, features: usize, seed: u64) -> Self {
        let data = normal(&mut rng(seed), features * input_len, (1.0 / input_len as f64).sqrt());
        Self {
            weight: Tensor::from_vec(data, &[features, input_len]),
        }
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }
}

impl FeatureExtractor for RandomLinearExtractor {
    fn extract(&self, images: &Tensor) -> Result<Tensor> {
        let b = images.shape()[0];
        let len = self.weight.shape()[1];
        if images.numel() != b * len {
            return Err(Error::shape([b, len], images.shape()));
        }
        Ok(images.reshape(&[b, len]).linear(&self.weight, None))
    }
}

fn pool_to(images: &Tensor, side: usize) -> Result<Tensor> {
    let (_, c, h, w) = images.dims4();
    if c != 3 || h != w || h < side || h % side != 0 {
        return Err(Error::shape(["B", "3", "H", "H"], images.shape()));
    }
    Ok(if h == side { images.clone() } else { images.avg_pool2d(h / side) })
}

/// Deterministic stand-in for a pretrained perceptual network: block average
/// to 64×64, one fixed random 3×3 stride-2 convolution and a leaky rectifier.
#[derive(Clone, Debug)]
pub struct StubPerceptual {
    weight: Tensor,
}

impl StubPerceptual {
    pub const SIDE: usize = 64;
    pub const CHANNELS: usize = 16;

    pub fn new(seed: u64) -> Self {
        let data = normal(&mut rng(seed), Self::CHANNELS * 27, (1.0 / 27.0f64).sqrt());
        Self {
            weight: Tensor::from_vec(data, &[Self::CHANNELS, 3, 3, 3]),
        }
    }
}

impl FeatureExtractor for StubPerceptual {
    fn extract(&self, images: &Tensor) -> Result<Tensor> {
        let x = pool_to(images, Self::SIDE)?;
        let f = x.conv2d(&self.weight, None, 2, 1).leaky_relu(0.2);
        let b = f.shape()[0];
        Ok(f.reshape(&[b, f.numel() / b]))
    }
}

/// Deterministic stand-in for a face-identity network: block average to
/// 8×8, a fixed random projection to 64 values and L2 normalisation.
#[derive(Clone, Debug)]
pub struct StubIdentity {
    weight: Tensor,
}

impl StubIdentity {
    pub const SIDE: usize = 8;
    pub const DIM: usize = 64;

    pub fn new(seed: u64) -> Self {
        let fin = 3 * Self::SIDE * Self::SIDE;
        let data = normal(&mut rng(seed), Self::DIM * fin, (1.0 / fin as f64).sqrt());
        Self {
            weight: Tensor::from_vec(data, &[Self::DIM, fin]),
        }
    }
}

impl FeatureExtractor for StubIdentity {
    fn extract(&self, images: &Tensor) -> Result<Tensor> {
        let x = pool_to(images, Self::SIDE)?;
        let b = x.shape()[0];
        let v = x.reshape(&[b, 3 * Self::SIDE * Self::SIDE]).linear(&self.weight, None);
        let norm = v.square().sum_dims(1, 2).add_scalar(1e-12).sqrt();
        Ok(v.div(&norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_validate() {
        LossWeights::default().validate().unwrap();
        assert!(LossWeights::default().scaled(0.0).validate().is_err());
        let mut w = LossWeights::default();
        w.reg = -1.0;
        assert!(w.validate().is_err());
    }

    #[test]
    fn linear_total() {
        let w = LossWeights {
            l2: 1.0,
            percep: 1.0,
            id: 1.0,
            reg: 1.0,
            quality: 1.0,
        };
        let b = LossBreakdown::from_components([1.0, 2.0, 3.0, 4.0, 5.0], &w);
        assert_eq!(b.total, 15.0);
        let q = LossWeights {
            l2: 0.0,
            percep: 0.0,
            id: 0.0,
            reg: 0.0,
            quality: 1.0,
        };
        assert_eq!(LossBreakdown::from_components([1.0, 2.0, 3.0, 4.0, 5.0], &q).total, 5.0);
    }

    #[test]
    fn mask_is_central() {
        let m = face_mask(8, 0.5).unwrap();
        assert_eq!(m.data().iter().sum::<f64>(), 16.0);
        assert_eq!(m.data()[2 * 8 + 2], 1.0);
        assert_eq!(m.data()[0], 0.0);
    }

    #[test]
    fn identity_stub_unit_norm() {
        let x = Tensor::from_vec((0..2 * 3 * 16 * 16).map(|i| (i as f64 * 0.37).sin()).collect(), &[2, 3, 16, 16]);
        let v = StubIdentity::new(3).extract(&x).unwrap();
        for row in v.data().chunks(StubIdentity::DIM) {
            assert!((row.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
