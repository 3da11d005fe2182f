//! Quality regression from distortion features fused with generative
//! reference features.

use gfiqa_tensor::{ParamStore, StatsPool, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Linear};
use crate::util::rng;

/// Stabiliser added to the channel deviation before dividing.
pub const SPADE_EPS: f64 = 1e-5;
pub const CBAM_REDUCTION: usize = 16;
pub const CBAM_SPATIAL_KERNEL: usize = 7;
pub const MAP2QUALITY_BLOCKS: usize = 5;
const HEAD_SLOPE: f64 = 0.2;

/// How the reference features reach the regression head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Spatially-adaptive denormalisation of the reduced distortion features.
    Modulate,
    /// Plain concatenation of reduced distortion and refined reference features.
    Concat,
    /// No reference: the head sees pooled distortion features only.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorOptions {
    pub fusion: Fusion,
    /// Attention inside each map2quality block.
    pub attention: bool,
}

impl Default for PredictorOptions {
    fn default() -> Self {
        Self {
            fusion: Fusion::Modulate,
            attention: true,
        }
    }
}

/// Channel attention followed by spatial attention.
#[derive(Clone, Debug)]
pub struct Cbam {
    pub fc1: Linear,
    pub fc2: Linear,
    pub spatial: Conv2d,
    channels: usize,
}

impl Cbam {
    pub fn new<R: Rng>(store: &mut ParamStore, r: &mut R, name: &str, channels: usize) -> Self {
        let hidden = (channels / CBAM_REDUCTION).max(1);
        let k = CBAM_SPATIAL_KERNEL;
        Self {
            fc1: Linear::new(store, r, &format!("{name}.fc1"), channels, hidden, true, (2.0 / channels as f64).sqrt()),
            fc2: Linear::new(store, r, &format!("{name}.fc2"), hidden, channels, true, (1.0 / hidden as f64).sqrt()),
            spatial: Conv2d::new(store, r, &format!("{name}.spatial"), 2, 1, k, 1, false, (1.0 / (2 * k * k) as f64).sqrt()),
            channels,
        }
    }

    /// Attention-weighted features, without the residual.
    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Tensor {
        let (b, c) = (x.shape()[0], self.channels);
        let mlp = |v: &Tensor| self.fc2.forward(ps, &self.fc1.forward(ps, &v.reshape(&[b, c])).relu());
        let ca = mlp(&x.mean_dims(2, 4)).add(&mlp(&x.max_dims(2, 4))).sigmoid();
        let x1 = x.mul(&ca.reshape(&[b, c, 1, 1]));
        let desc = Tensor::cat(&[&x1.mean_dims(1, 2), &x1.max_dims(1, 2)], 1);
        let sa = self.spatial.forward(ps, &desc).sigmoid();
        x1.mul(&sa)
    }
}

/// Optional attention with a residual skip, then a stride-2 3×3 convolution
/// that doubles the channels.
#[derive(Clone, Debug)]
pub struct Map2QualityBlock {
    pub attention: Option<Cbam>,
    pub conv: Conv2d,
}

impl Map2QualityBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, r: &mut R, name: &str, channels: usize, attention: bool) -> Self {
        Self {
            attention: attention.then(|| Cbam::new(store, r, &format!("{name}.cbam"), channels)),
            conv: Conv2d::new(store, r, &format!("{name}.conv"), channels, 2 * channels, 3, 2, true, (1.0 / (9 * channels) as f64).sqrt()),
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Tensor {
        let h = match &self.attention {
            Some(a) => x.add(&a.forward(ps, x)),
            None => x.clone(),
        };
        self.conv.forward(ps, &h)
    }
}

/// `γ ⊙ (x − μ_c) / (σ_c + ε) + β` with population channel statistics of `x`.
pub fn spade_modulate(x: &Tensor, gamma: &Tensor, beta: &Tensor, pool: StatsPool) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::shape(["B", "C", "H", "W"], x.shape()));
    }
    if gamma.shape() != x.shape() || beta.shape() != x.shape() {
        return Err(Error::shape(x.shape(), if gamma.shape() != x.shape() { gamma.shape() } else { beta.shape() }));
    }
    Ok(gamma.mul(&x.channel_standardize(pool, SPADE_EPS)).add(beta))
}

/// Every intermediate of one prediction pass.
#[derive(Clone, Debug)]
pub struct PredictorTrace {
    pub reduced: Option<Tensor>,
    pub refined: Option<Tensor>,
    pub modulated: Option<Tensor>,
    pub concat: Tensor,
    pub pooled: Tensor,
    pub fc1: Tensor,
    pub fc2: Tensor,
    /// Scores, `[B]`.
    pub quality: Tensor,
}

#[derive(Clone, Debug)]
pub struct Predictor {
    options: PredictorOptions,
    fe: usize,
    fe_side: usize,
    fg: usize,
    resolution: usize,
    reduce: Option<Conv2d>,
    blocks: Vec<Map2QualityBlock>,
    gamma: Option<Conv2d>,
    beta: Option<Conv2d>,
    fc: [Linear; 3],
}

impl Predictor {
    pub fn new(store: &mut ParamStore, arch: &ArchConfig, options: PredictorOptions, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut r = rng(seed);
        let (fe, fg) = (arch.fe_channels(), arch.fg_channels());
        let half = fe / 2;
        let uses_reference = options.fusion != Fusion::None;
        let reduce = uses_reference
            .then(|| Conv2d::new(store, &mut r, "predictor.reduce", fe, half, 1, 1, true, (1.0 / fe as f64).sqrt()));
        let mut blocks = Vec::new();
        if uses_reference {
            let mut c = fg;
            for i in 0..MAP2QUALITY_BLOCKS {
                blocks.push(Map2QualityBlock::new(store, &mut r, &format!("predictor.map2quality{i}"), c, options.attention));
                c *= 2;
            }
        }
        let (gamma, beta) = if options.fusion == Fusion::Modulate {
            let std = 0.1 * (1.0 / (9 * half) as f64).sqrt();
            let gamma = Conv2d::new(store, &mut r, "predictor.gamma", half, half, 3, 1, true, std);
            store.get_mut(gamma.bias.expect("gamma bias")).fill(1.0);
            let beta = Conv2d::new(store, &mut r, "predictor.beta", half, half, 3, 1, true, std);
            (Some(gamma), Some(beta))
        } else {
            (None, None)
        };
        let fc = [
            Linear::new(store, &mut r, "predictor.fc1", fe, fe / 2, true, (2.0 / fe as f64).sqrt()),
            Linear::new(store, &mut r, "predictor.fc2", fe / 2, fe / 4, true, (4.0 / fe as f64).sqrt()),
            Linear::new(store, &mut r, "predictor.fc3", fe / 4, 1, true, (4.0 / fe as f64).sqrt()),
        ];
        store.get_mut(fc[2].bias.expect("fc3 bias")).fill(0.5);
        Ok(Self {
            options,
            fe,
            fe_side: arch.fe_side(),
            fg,
            resolution: arch.resolution,
            reduce,
            blocks,
            gamma,
            beta,
            fc,
        })
    }

    pub fn options(&self) -> PredictorOptions {
        self.options
    }

    fn check(&self, t: &Tensor, c: usize, side: usize) -> Result<()> {
        if t.rank() != 4 || t.shape()[1..] != [c, side, side] {
            return Err(Error::shape(["B".to_string(), c.to_string(), side.to_string(), side.to_string()], t.shape()));
        }
        Ok(())
    }

    /// 1×1 convolution halving the distortion feature channels.
    pub fn reduce_fe(&self, ps: &ParamStore, f_e: &Tensor) -> Result<Tensor> {
        self.check(f_e, self.fe, self.fe_side)?;
        let conv = self.reduce.as_ref().ok_or_else(|| Error::Config("this predictor has no reduction layer".into()))?;
        Ok(conv.forward(ps, f_e))
    }

    /// Five attention-and-downsample blocks taking the generator features to
    /// the distortion feature resolution.
    pub fn map2quality_chain(&self, ps: &ParamStore, f_g: &Tensor) -> Result<Tensor> {
        self.check(f_g, self.fg, self.resolution)?;
        if self.blocks.is_empty() {
            return Err(Error::Config("this predictor has no map2quality blocks".into()));
        }
        Ok(self.blocks.iter().fold(f_g.clone(), |h, b| b.forward(ps, &h)))
    }

    /// Denormalises the reduced distortion features with scale and shift
    /// maps convolved from the refined reference.
    pub fn modulate(&self, ps: &ParamStore, reduced: &Tensor, refined: &Tensor, pool: StatsPool) -> Result<Tensor> {
        let (Some(g), Some(b)) = (&self.gamma, &self.beta) else {
            return Err(Error::Config("this predictor has no modulation layers".into()));
        };
        if reduced.shape() != refined.shape() {
            return Err(Error::shape(reduced.shape(), refined.shape()));
        }
        spade_modulate(reduced, &g.forward(ps, refined), &b.forward(ps, refined), pool)
    }

    /// Scores a batch. `f_g` is required unless the predictor ignores the
    /// reference.
    pub fn forward(&self, ps: &ParamStore, f_e: &Tensor, f_g: Option<&Tensor>, pool: StatsPool) -> Result<PredictorTrace> {
        self.check(f_e, self.fe, self.fe_side)?;
        let b = f_e.shape()[0];
        let (reduced, refined, modulated, concat) = match self.options.fusion {
            Fusion::None => (None, None, None, f_e.clone()),
            fusion => {
                let f_g = f_g.ok_or_else(|| Error::Config("reference features are required".into()))?;
                if f_g.shape()[0] != b {
                    return Err(Error::shape([b], [f_g.shape()[0]]));
                }
                let reduced = self.reduce_fe(ps, f_e)?;
                let refined = self.map2quality_chain(ps, f_g)?;
                if fusion == Fusion::Modulate {
                    let m = self.modulate(ps, &reduced, &refined, pool)?;
                    let concat = Tensor::cat(&[&reduced, &m], 1);
                    (Some(reduced), Some(refined), Some(m), concat)
                } else {
                    let concat = Tensor::cat(&[&reduced, &refined], 1);
                    (Some(reduced), Some(refined), None, concat)
                }
            }
        };
        let pooled = concat.mean_dims(2, 4).reshape(&[b, self.fe]);
        let fc1 = self.fc[0].forward(ps, &pooled).leaky_relu(HEAD_SLOPE);
        let fc2 = self.fc[1].forward(ps, &fc1).leaky_relu(HEAD_SLOPE);
        let quality = self.fc[2].forward(ps, &fc2).reshape(&[b]);
        Ok(PredictorTrace {
            reduced,
            refined,
            modulated,
            concat,
            pooled,
            fc1,
            fc2,
            quality,
        })
    }

    pub fn predict_quality(&self, ps: &ParamStore, f_e: &Tensor, f_g: Option<&Tensor>, pool: StatsPool) -> Result<Tensor> {
        Ok(self.forward(ps, f_e, f_g, pool)?.quality)
    }
}
