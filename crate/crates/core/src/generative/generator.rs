use std::path::Path;

use gfiqa_tensor::{ParamId, ParamStore, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FeatureMap, FeatureRole};
use crate::arch::ArchConfig;
use crate::container;
use crate::error::{Error, Result};
use crate::nn::{normal, Linear};
use crate::util::{derive_seed, rng};

pub const GENERATOR_FORMAT_VERSION: u32 = 1;
const DEMOD_EPS: f64 = 1e-8;

/// Shape parameters recorded in a generator weights file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub resolution: usize,
    pub code_dim: usize,
    pub channel_base: usize,
    pub channel_max: usize,
}

impl GeneratorSpec {
    pub fn from_arch(a: &ArchConfig) -> Self {
        Self {
            resolution: a.resolution,
            code_dim: a.code_dim,
            channel_base: a.channel_base,
            channel_max: a.channel_max,
        }
    }

    pub fn num_codes(&self) -> usize {
        2 * self.resolution.trailing_zeros() as usize - 2
    }

    pub fn channels(&self, res: usize) -> usize {
        (self.channel_base / res).min(self.channel_max)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.resolution.is_power_of_two() || self.resolution < 8 {
            return Err(Error::Config(format!("generator resolution {} must be a power of two ≥ 8", self.resolution)));
        }
        if self.code_dim == 0 || self.channels(self.resolution) == 0 {
            return Err(Error::Config("generator code_dim and channels must be positive".into()));
        }
        Ok(())
    }
}

/// Style-modulated convolution. Weight scaling by the style is applied to
/// the input, and demodulation rescales each output channel.
#[derive(Clone, Debug)]
struct ModConv {
    modulation: Linear,
    weight: ParamId,
    bias: ParamId,
    cin: usize,
    cout: usize,
    kernel: usize,
    upsample: bool,
    demodulate: bool,
    /// `Σ_k W[o, i, k]²` as an `[out, in]` matrix.
    w2: Tensor,
}

impl ModConv {
    #[allow(clippy::too_many_arguments)]
    fn new<R: rand::Rng>(
        store: &mut ParamStore,
        r: &mut R,
        name: &str,
        code_dim: usize,
        cin: usize,
        cout: usize,
        kernel: usize,
        upsample: bool,
        demodulate: bool,
    ) -> Self {
        let modulation = Linear::new(store, r, &format!("{name}.modulation"), code_dim, cin, true, (1.0 / code_dim as f64).sqrt());
        store.get_mut(modulation.bias.expect("modulation bias")).fill(1.0);
        let std = (1.0 / (cin * kernel * kernel) as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), &[cout, cin, kernel, kernel], normal(r, cout * cin * kernel * kernel, std));
        let bias = store.add(format!("{name}.bias"), &[cout], vec![0.0; cout]);
        let mut m = Self {
            modulation,
            weight,
            bias,
            cin,
            cout,
            kernel,
            upsample,
            demodulate,
            w2: Tensor::zeros(&[cout, cin]),
        };
        m.refresh(store);
        m
    }

    fn refresh(&mut self, store: &ParamStore) {
        let w = store.get(self.weight);
        let kk = self.kernel * self.kernel;
        let w2: Vec<f64> = w.chunks(kk).map(|c| c.iter().map(|v| v * v).sum()).collect();
        self.w2 = Tensor::from_vec(w2, &[self.cout, self.cin]);
    }

    fn forward(&self, ps: &ParamStore, x: &Tensor, code: &Tensor) -> Tensor {
        let b = x.shape()[0];
        let s = self.modulation.forward(ps, code);
        let mut h = x.mul(&s.reshape(&[b, self.cin, 1, 1]));
        if self.upsample {
            h = h.upsample_nearest2x();
        }
        let mut y = h.conv2d(&ps.tensor(self.weight), None, 1, self.kernel / 2);
        if self.demodulate {
            let d = s.square().linear(&self.w2, None).add_scalar(DEMOD_EPS).powf(-0.5);
            y = y.mul(&d.reshape(&[b, self.cout, 1, 1]));
        }
        y.add(&ps.tensor(self.bias).reshape(&[1, self.cout, 1, 1]))
    }
}

fn activate(x: &Tensor) -> Tensor {
    x.leaky_relu(0.2).mul_scalar(std::f64::consts::SQRT_2)
}

#[derive(Clone, Debug)]
struct Level {
    up: ModConv,
    conv: ModConv,
    to_rgb: ModConv,
}

/// Output of one synthesis pass.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub image: Tensor,
    /// Last feature scale before the RGB projection.
    pub features: FeatureMap,
}

/// Frozen style-based generator. Parameters never require gradients, and
/// per-layer noise is fixed at zero, so synthesis is deterministic.
#[derive(Clone, Debug)]
pub struct GeneratorHandle {
    spec: GeneratorSpec,
    store: ParamStore,
    average_code: Vec<f64>,
    constant: ParamId,
    conv1: ModConv,
    to_rgb1: ModConv,
    levels: Vec<Level>,
    checksum: String,
}

impl GeneratorHandle {
    /// Randomly initialised generator with the standard staged layout.
    pub fn random(spec: &GeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new(false);
        let mut r = rng(derive_seed(seed, 0));
        let d = spec.code_dim;
        let c4 = spec.channels(4);
        let constant = store.add("constant", &[1, c4, 4, 4], normal(&mut r, c4 * 16, 1.0));
        let conv1 = ModConv::new(&mut store, &mut r, "conv1", d, c4, c4, 3, false, true);
        let to_rgb1 = ModConv::new(&mut store, &mut r, "to_rgb1", d, c4, 3, 1, false, false);
        let mut levels = Vec::new();
        let mut res = 8;
        while res <= spec.resolution {
            let (cin, cout) = (spec.channels(res / 2), spec.channels(res));
            levels.push(Level {
                up: ModConv::new(&mut store, &mut r, &format!("level{res}.up"), d, cin, cout, 3, true, true),
                conv: ModConv::new(&mut store, &mut r, &format!("level{res}.conv"), d, cout, cout, 3, false, true),
                to_rgb: ModConv::new(&mut store, &mut r, &format!("level{res}.to_rgb"), d, cout, 3, 1, false, false),
            });
            res *= 2;
        }
        let average_code = normal(&mut rng(derive_seed(seed, 1)), d, 1.0);
        let mut g = Self {
            spec: spec.clone(),
            store,
            average_code,
            constant,
            conv1,
            to_rgb1,
            levels,
            checksum: String::new(),
        };
        g.checksum = g.compute_checksum();
        Ok(g)
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn num_codes(&self) -> usize {
        self.spec.num_codes()
    }

    pub fn code_dim(&self) -> usize {
        self.spec.code_dim
    }

    pub fn average_code(&self) -> &[f64] {
        &self.average_code
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// SHA-256 over every parameter and the average code, fixed at load.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Recomputes the digest from the current parameter values.
    pub fn compute_checksum(&self) -> String {
        let mut h = Sha256::new();
        for e in self.store.entries() {
            h.update(e.name.as_bytes());
            for v in e.data() {
                h.update(v.to_le_bytes());
            }
        }
        for v in &self.average_code {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Runs synthesis with one `[B, code_dim]` code per injection point.
    pub fn synthesize(&self, codes: &[Tensor]) -> Result<Synthesis> {
        let n = self.num_codes();
        if codes.len() != n {
            return Err(Error::Config(format!("generator takes {n} codes, got {}", codes.len())));
        }
        let b = codes[0].shape()[0];
        for c in codes {
            if c.shape() != [b, self.spec.code_dim] {
                return Err(Error::shape([b, self.spec.code_dim], c.shape()));
            }
        }
        let ps = &self.store;
        let c4 = self.spec.channels(4);
        let constant = ps.tensor(self.constant);
        let x0 = if b == 1 {
            constant
        } else {
            Tensor::cat(&vec![&constant; b], 0)
        };
        let mut x = activate(&self.conv1.forward(ps, &x0, &codes[0]));
        debug_assert_eq!(x.shape()[1], c4);
        let mut rgb = self.to_rgb1.forward(ps, &x, &codes[1]);
        for (l, level) in self.levels.iter().enumerate() {
            let i = 2 * l + 1;
            x = activate(&level.up.forward(ps, &x, &codes[i]));
            x = activate(&level.conv.forward(ps, &x, &codes[i + 1]));
            rgb = level.to_rgb.forward(ps, &x, &codes[i + 2]).add(&rgb.upsample_nearest2x());
        }
        Ok(Synthesis {
            image: rgb,
            features: FeatureMap::new(FeatureRole::Fg, x),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "format_version": GENERATOR_FORMAT_VERSION,
            "resolution": self.spec.resolution,
            "stage_count": self.num_codes(),
            "code_dim": self.spec.code_dim,
            "channel_base": self.spec.channel_base,
            "channel_max": self.spec.channel_max,
        });
        let avg_shape = [self.spec.code_dim];
        let mut blobs: Vec<(&str, &[usize], &[f64])> = vec![("average_code", &avg_shape[..], &self.average_code[..])];
        blobs.extend(self.store.entries().iter().map(|e| (e.name.as_str(), &e.shape[..], e.data())));
        container::write(path, &meta, blobs)
    }

    /// Loads a weights file, validating its manifest and every tensor shape.
    pub fn load(path: &Path) -> Result<Self> {
        let c = container::read(path)?;
        let field = |k: &str| -> Result<usize> {
            c.meta
                .get(k)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| Error::Input(format!("{}: generator manifest lacks {k}", path.display())))
        };
        let version = field("format_version")?;
        if version != GENERATOR_FORMAT_VERSION as usize {
            return Err(Error::Input(format!("{}: unsupported generator format {version}", path.display())));
        }
        let spec = GeneratorSpec {
            resolution: field("resolution")?,
            code_dim: field("code_dim")?,
            channel_base: field("channel_base")?,
            channel_max: field("channel_max")?,
        };
        spec.validate().map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        if field("stage_count")? != spec.num_codes() {
            return Err(Error::Input(format!(
                "{}: stage_count {} does not match resolution {}",
                path.display(),
                field("stage_count")?,
                spec.resolution
            )));
        }
        let mut g = Self::random(&spec, 0)?;
        let mut loaded = ParamStore::new(false);
        for e in g.store.entries() {
            let (entry, data) = c
                .get(&e.name)
                .ok_or_else(|| Error::Input(format!("{}: missing tensor {}", path.display(), e.name)))?;
            if entry.shape != e.shape {
                return Err(Error::Input(format!("{}: tensor {} has shape {:?}, expected {:?}", path.display(), e.name, entry.shape, e.shape)));
            }
            loaded.add(e.name.clone(), &e.shape, data.clone());
        }
        g.store.copy_values_from(&loaded).map_err(Error::Input)?;
        let (entry, avg) = c
            .get("average_code")
            .ok_or_else(|| Error::Input(format!("{}: missing average_code", path.display())))?;
        if entry.shape != [spec.code_dim] {
            return Err(Error::Input(format!("{}: average_code has shape {:?}", path.display(), entry.shape)));
        }
        g.average_code = avg.clone();
        let store = g.store.clone();
        for m in g.mod_convs_mut() {
            m.refresh(&store);
        }
        g.checksum = g.compute_checksum();
        Ok(g)
    }

    fn mod_convs_mut(&mut self) -> impl Iterator<Item = &mut ModConv> {
        [&mut self.conv1, &mut self.to_rgb1]
            .into_iter()
            .chain(self.levels.iter_mut().flat_map(|l| [&mut l.up, &mut l.conv, &mut l.to_rgb]))
    }
}
