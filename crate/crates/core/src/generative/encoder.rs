use std::ops::Range;

use gfiqa_tensor::{ParamStore, Tensor};

use super::{FeatureMap, FeatureRole, StyleCodeSet};
use crate::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::nn::{ChannelAffine, Conv2d, Linear};
use crate::util::rng;

const EXPANSION: usize = 4;
const HEAD_SLOPE: f64 = 0.2;

#[derive(Clone, Debug)]
struct Bottleneck {
    reduce: (Conv2d, ChannelAffine),
    spatial: (Conv2d, ChannelAffine),
    expand: (Conv2d, ChannelAffine),
    shortcut: Option<(Conv2d, ChannelAffine)>,
}

impl Bottleneck {
    fn forward(&self, ps: &ParamStore, x: &Tensor) -> Tensor {
        let h = self.reduce.1.forward(ps, &self.reduce.0.forward(ps, x)).relu();
        let h = self.spatial.1.forward(ps, &self.spatial.0.forward(ps, &h)).relu();
        let h = self.expand.1.forward(ps, &self.expand.0.forward(ps, &h));
        let skip = match &self.shortcut {
            Some((c, a)) => a.forward(ps, &c.forward(ps, x)),
            None => x.clone(),
        };
        h.add(&skip).relu()
    }
}

/// Splits `n` codes into four contiguous groups, larger groups first.
pub fn code_groups(n: usize) -> Vec<Range<usize>> {
    let mut start = 0;
    (0..4)
        .map(|g| {
            let len = n / 4 + usize::from(g < n % 4);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Residual encoder with one code head per stage. The deepest stage feeds the
/// coarsest codes; the final stage output is the distortion feature map.
#[derive(Clone, Debug)]
pub struct Encoder {
    arch: ArchConfig,
    stem: (Conv2d, ChannelAffine),
    stages: Vec<Vec<Bottleneck>>,
    heads: Vec<Vec<Conv2d>>,
    code_proj: Vec<Linear>,
    groups: Vec<Range<usize>>,
}

#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub codes: StyleCodeSet,
    pub f_e: FeatureMap,
    /// Per-stage head outputs, `[B, code_dim, 1, 1]`, shallowest stage first.
    pub head_outputs: Vec<Tensor>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut r = rng(seed);
        let w = arch.encoder_width;
        let stem = (
            Conv2d::he(store, &mut r, "encoder.stem", 3, w, 7, 2, false),
            ChannelAffine::new(store, "encoder.stem.affine", w, 1.0),
        );
        let mut stages = Vec::new();
        let mut cin = w;
        for (s, &blocks) in arch.encoder_blocks.iter().enumerate() {
            let width = w << s;
            let cout = width * EXPANSION;
            let mut stage = Vec::new();
            for b in 0..blocks {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let name = format!("encoder.stage{}.block{b}", s + 1);
                let conv = |r: &mut _, store: &mut ParamStore, tag: &str, ci, co, k, st| {
                    Conv2d::he(store, r, &format!("{name}.{tag}"), ci, co, k, st, false)
                };
                let reduce = conv(&mut r, store, "reduce", cin, width, 1, 1);
                let spatial = conv(&mut r, store, "spatial", width, width, 3, stride);
                let expand = conv(&mut r, store, "expand", width, cout, 1, 1);
                let shortcut = (stride != 1 || cin != cout).then(|| {
                    (
                        conv(&mut r, store, "shortcut", cin, cout, 1, stride),
                        ChannelAffine::new(store, &format!("{name}.shortcut.affine"), cout, 1.0),
                    )
                });
                stage.push(Bottleneck {
                    reduce: (reduce, ChannelAffine::new(store, &format!("{name}.reduce.affine"), width, 1.0)),
                    spatial: (spatial, ChannelAffine::new(store, &format!("{name}.spatial.affine"), width, 1.0)),
                    // Zero scale makes every block start as the identity.
                    expand: (expand, ChannelAffine::new(store, &format!("{name}.expand.affine"), cout, 0.0)),
                    shortcut,
                });
                cin = cout;
            }
            stages.push(stage);
        }

        let d = arch.code_dim;
        let mut heads = Vec::new();
        for s in 0..4 {
            let channels = w * EXPANSION << s;
            let side = arch.resolution / (4 << s);
            let steps = side.trailing_zeros() as usize;
            let mut convs = Vec::new();
            for i in 0..steps {
                let ci = if i == 0 { channels } else { d };
                convs.push(Conv2d::he(store, &mut r, &format!("encoder.map2style{}.conv{i}", s + 1), ci, d, 3, 2, true));
            }
            heads.push(convs);
        }
        let n = arch.num_codes();
        let proj_std = 0.1 * (1.0 / d as f64).sqrt();
        let code_proj = (0..n)
            .map(|i| Linear::new(store, &mut r, &format!("encoder.code{i}"), d, d, true, proj_std))
            .collect();
        Ok(Self {
            arch: arch.clone(),
            stem,
            stages,
            heads,
            code_proj,
            groups: code_groups(n),
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    /// Encodes a `[B, 3, R, R]` batch.
    pub fn encode(&self, ps: &ParamStore, x: &Tensor, average_code: &[f64]) -> Result<EncoderOutput> {
        let r = self.arch.resolution;
        if x.rank() != 4 || x.shape()[1..] != [3, r, r] {
            return Err(Error::shape(["B", "3", &r.to_string(), &r.to_string()], x.shape()));
        }
        if average_code.len() != self.arch.code_dim {
            return Err(Error::shape([self.arch.code_dim], [average_code.len()]));
        }
        let b = x.shape()[0];
        let mut h = self.stem.1.forward(ps, &self.stem.0.forward(ps, x)).relu().max_pool2d(3, 2, 1);
        let mut taps = Vec::with_capacity(4);
        for stage in &self.stages {
            for block in stage {
                h = block.forward(ps, &h);
            }
            taps.push(h.clone());
        }
        let head_outputs: Vec<Tensor> = self
            .heads
            .iter()
            .zip(&taps)
            .map(|(convs, tap)| convs.iter().fold(tap.clone(), |t, c| c.forward(ps, &t).leaky_relu(HEAD_SLOPE)))
            .collect();

        let d = self.arch.code_dim;
        let mut offsets = Vec::with_capacity(self.code_proj.len());
        for (g, range) in self.groups.iter().enumerate() {
            let style = head_outputs[3 - g].reshape(&[b, d]);
            for i in range.clone() {
                offsets.push(self.code_proj[i].forward(ps, &style).reshape(&[b, 1, d]));
            }
        }
        let offsets = Tensor::cat(&offsets.iter().collect::<Vec<_>>(), 1);
        Ok(EncoderOutput {
            codes: StyleCodeSet::new(offsets, average_code.to_vec())?,
            f_e: FeatureMap::new(FeatureRole::Fe, h),
            head_outputs,
        })
    }
}
