//! Image inversion into per-stage style codes and synthesis from a frozen
//! style-based generator.

mod encoder;
mod generator;

use gfiqa_tensor::Tensor;

pub use encoder::{code_groups, Encoder, EncoderOutput};
pub use generator::{GeneratorHandle, GeneratorSpec, Synthesis, GENERATOR_FORMAT_VERSION};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureRole {
    /// Final encoder stage (distortion features).
    Fe,
    /// Generator's last feature scale (generative reference).
    Fg,
    /// Reference-modulated distortion features.
    Fmod,
    Intermediate,
}

/// Role-tagged `[B, C, H, W]` activation block.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    pub role: FeatureRole,
    pub data: Tensor,
}

impl FeatureMap {
    pub fn new(role: FeatureRole, data: Tensor) -> Self {
        Self { role, data }
    }

    /// Shape of one sample, `[C, H, W]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.data.shape()[1..]
    }
}

/// Encoder offsets `[B, N, D]` plus the generator's average code. The code
/// injected at position i is `offsets[i] + w̄`.
#[derive(Clone, Debug)]
pub struct StyleCodeSet {
    pub offsets: Tensor,
    pub average_code: Vec<f64>,
}

impl StyleCodeSet {
    pub fn new(offsets: Tensor, average_code: Vec<f64>) -> Result<Self> {
        if offsets.rank() != 3 || offsets.shape()[2] != average_code.len() {
            return Err(Error::shape(["B", "N", &average_code.len().to_string()], offsets.shape()));
        }
        Ok(Self { offsets, average_code })
    }

    pub fn num_codes(&self) -> usize {
        self.offsets.shape()[1]
    }

    pub fn batch(&self) -> usize {
        self.offsets.shape()[0]
    }

    /// Codes for every position: `offsets[i] + w̄` for `i < k`, and exactly
    /// `w̄` (no dependence on the offsets) for the rest.
    pub fn injected(&self, k: usize) -> Vec<Tensor> {
        let (b, n, d) = (self.batch(), self.num_codes(), self.average_code.len());
        let avg = Tensor::from_vec(self.average_code.clone(), &[1, d]);
        let filler = Tensor::from_vec(self.average_code.repeat(b), &[b, d]);
        (0..n)
            .map(|i| {
                if i < k {
                    self.offsets.narrow(1, i, 1).reshape(&[b, d]).add(&avg)
                } else {
                    filler.clone()
                }
            })
            .collect()
    }
}

fn check_codes(codes: &StyleCodeSet, generator: &GeneratorHandle) -> Result<()> {
    if codes.num_codes() != generator.num_codes() {
        return Err(Error::Config(format!(
            "code set has {} codes, generator has {} injection points",
            codes.num_codes(),
            generator.num_codes()
        )));
    }
    if codes.average_code.len() != generator.code_dim() {
        return Err(Error::Config(format!(
            "code dimension {} does not match generator's {}",
            codes.average_code.len(),
            generator.code_dim()
        )));
    }
    Ok(())
}

/// Reconstruction with every code injected.
pub fn synthesize_full(codes: &StyleCodeSet, generator: &GeneratorHandle) -> Result<Tensor> {
    check_codes(codes, generator)?;
    Ok(generator.synthesize(&codes.injected(codes.num_codes()))?.image)
}

/// Reconstruction from the first `k` codes, the rest replaced by the
/// average code. Returns the image and the generator's last feature scale.
pub fn synthesize_truncated(codes: &StyleCodeSet, generator: &GeneratorHandle, k: usize) -> Result<(Tensor, FeatureMap)> {
    check_codes(codes, generator)?;
    if k == 0 || k > codes.num_codes() {
        return Err(Error::InvalidArgument(format!("K = {k} must lie in 1..={}", codes.num_codes())));
    }
    let s = generator.synthesize(&codes.injected(k))?;
    Ok((s.image, s.features))
}
