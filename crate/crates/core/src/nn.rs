//! Parameterised layers over a [`ParamStore`].

use gfiqa_tensor::{ParamId, ParamStore, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

pub(crate) fn normal<R: Rng>(rng: &mut R, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    /// Weights drawn from N(0, std²); bias starts at zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
        std: f64,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            &[cout, cin, kernel, kernel],
            normal(rng, cout * cin * kernel * kernel, std),
        );
        let bias = bias.then(|| store.add(format!("{name}.bias"), &[cout], vec![0.0; cout]));
        Self {
            weight,
            bias,
            in_channels: cin,
            out_channels: cout,
            kernel,
            stride,
            pad: kernel / 2,
        }
    }

    /// He initialisation for layers followed by a rectifier.
    #[allow(clippy::too_many_arguments)]
    pub fn he<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
    ) -> Self {
        let std = (2.0 / (cin * kernel * kernel) as f64).sqrt();
        Self::new(store, rng, name, cin, cout, kernel, stride, bias, std)
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Tensor {
        let b = self.bias.map(|id| ps.tensor(id));
        x.conv2d(&ps.tensor(self.weight), b.as_ref(), self.stride, self.pad)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, fin: usize, fout: usize, bias: bool, std: f64) -> Self {
        let weight = store.add(format!("{name}.weight"), &[fout, fin], normal(rng, fout * fin, std));
        let bias = bias.then(|| store.add(format!("{name}.bias"), &[fout], vec![0.0; fout]));
        Self {
            weight,
            bias,
            in_features: fin,
            out_features: fout,
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Tensor {
        let b = self.bias.map(|id| ps.tensor(id));
        x.linear(&ps.tensor(self.weight), b.as_ref())
    }
}

/// Learned per-channel scale and shift on `[B, C, H, W]`.
#[derive(Clone, Debug)]
pub struct ChannelAffine {
    pub scale: ParamId,
    pub shift: ParamId,
}

impl ChannelAffine {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, init_scale: f64) -> Self {
        Self {
            scale: store.add(format!("{name}.scale"), &[1, channels, 1, 1], vec![init_scale; channels]),
            shift: store.add(format!("{name}.shift"), &[1, channels, 1, 1], vec![0.0; channels]),
        }
    }

    pub fn forward(&self, ps: &ParamStore, x: &Tensor) -> Tensor {
        x.mul(&ps.tensor(self.scale)).add(&ps.tensor(self.shift))
    }
}
