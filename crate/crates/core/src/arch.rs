//! Network dimensions shared by the encoder, generator and predictor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    /// Side length of the square input and of the generator output.
    pub resolution: usize,
    pub code_dim: usize,
    /// Generator channels at resolution r are `min(channel_max, channel_base / r)`.
    pub channel_base: usize,
    pub channel_max: usize,
    /// Residual blocks per encoder stage.
    pub encoder_blocks: [usize; 4],
    /// Bottleneck width of the first encoder stage.
    pub encoder_width: usize,
}

impl ArchConfig {
    /// 512×512 inputs, 512-d codes, 50-layer residual encoder.
    pub fn full() -> Self {
        Self {
            resolution: 512,
            code_dim: 512,
            channel_base: 16384,
            channel_max: 512,
            encoder_blocks: [3, 4, 6, 3],
            encoder_width: 64,
        }
    }

    /// 64×64 inputs and narrow layers for single-CPU experiments.
    pub fn toy() -> Self {
        Self {
            resolution: 64,
            code_dim: 64,
            channel_base: 256,
            channel_max: 32,
            encoder_blocks: [1, 1, 1, 1],
            encoder_width: 8,
        }
    }

    pub fn log2_resolution(&self) -> usize {
        self.resolution.trailing_zeros() as usize
    }

    /// Style-code injection points: two per resolution level from 4×4 up.
    pub fn num_codes(&self) -> usize {
        2 * self.log2_resolution() - 2
    }

    pub fn generator_channels(&self, res: usize) -> usize {
        (self.channel_base / res).min(self.channel_max)
    }

    /// Channels of the generator's last feature scale.
    pub fn fg_channels(&self) -> usize {
        self.generator_channels(self.resolution)
    }

    /// Channels of the final encoder stage.
    pub fn fe_channels(&self) -> usize {
        self.encoder_width * 8 * 4
    }

    /// Spatial side of the final encoder stage.
    pub fn fe_side(&self) -> usize {
        self.resolution / 32
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !self.resolution.is_power_of_two() || self.resolution < 32 {
            return bad(format!("resolution {} must be a power of two ≥ 32", self.resolution));
        }
        if self.code_dim == 0 || self.encoder_width == 0 || self.encoder_blocks.contains(&0) {
            return bad("code_dim, encoder_width and every stage block count must be positive".into());
        }
        if self.fg_channels() == 0 || self.generator_channels(4) == 0 {
            return bad("generator channel_base is too small for the resolution".into());
        }
        if self.fe_channels() / 2 != self.fg_channels() * 32 {
            return bad(format!(
                "half the encoder output channels ({}) must equal 32× the generator feature channels ({})",
                self.fe_channels() / 2,
                self.fg_channels() * 32
            ));
        }
        Ok(())
    }
}
