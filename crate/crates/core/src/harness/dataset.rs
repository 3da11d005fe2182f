use std::path::Path;
use std::sync::Arc;

use gfiqa_tensor::{no_grad, Tensor};
use image::imageops::FilterType;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generative::{GeneratorHandle, StyleCodeSet};
use crate::model::scale_k;
use crate::nn::normal;
use crate::util::{derive_seed, rng};

/// One labelled image, `[3, R, R]` in channel-major order.
#[derive(Clone, Debug)]
pub struct Sample {
    pub image_id: String,
    pub image: Arc<Vec<f64>>,
    pub mos: f64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub resolution: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.image_id.clone()).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mos).collect()
    }

    /// Samples whose ids are listed, in list order.
    pub fn subset(&self, ids: &[String]) -> Result<Dataset> {
        let index: std::collections::HashMap<&str, &Sample> = self.samples.iter().map(|s| (s.image_id.as_str(), s)).collect();
        let samples = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|s| (*s).clone())
                    .ok_or_else(|| Error::Input(format!("unknown image id {id}")))
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            resolution: self.resolution,
            samples,
        })
    }

    /// Stacks the indexed samples into an image batch and a label vector.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let r = self.resolution;
        let mut data = Vec::with_capacity(indices.len() * 3 * r * r);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.samples[i].image);
            labels.push(self.samples[i].mos);
        }
        (Tensor::from_vec(data, &[indices.len(), 3, r, r]), Tensor::from_vec(labels, &[indices.len()]))
    }
}

/// Converts an RGB image to `[3, R, R]` values in [−1, 1], resizing with a
/// triangle filter when needed.
pub fn image_to_input(img: &image::RgbImage, resolution: usize) -> Vec<f64> {
    let r = resolution as u32;
    let resized;
    let img = if img.dimensions() == (r, r) {
        img
    } else {
        resized = image::imageops::resize(img, r, r, FilterType::Triangle);
        &resized
    };
    let plane = resolution * resolution;
    let mut out = vec![0.0; 3 * plane];
    for (x, y, p) in img.enumerate_pixels() {
        let i = y as usize * resolution + x as usize;
        for c in 0..3 {
            out[c * plane + i] = f64::from(p[c]) / 127.5 - 1.0;
        }
    }
    out
}

/// Reads an `image_id,path,mos` manifest. Relative paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path, resolution: usize) -> Result<Dataset> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| Error::Input(format!("{}: {e}", path.display())))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["image_id", "path", "mos"] {
        return Err(Error::Input(format!("{}: expected header image_id,path,mos", path.display())));
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mos: f64 = rec[2]
            .trim()
            .parse()
            .ok()
            .filter(|m: &f64| m.is_finite())
            .ok_or_else(|| Error::Input(format!("{} line {line}: bad mos {:?}", path.display(), &rec[2])))?;
        let img_path = base.join(&rec[1]);
        let img = crate::face_prep::io::load_image(&img_path)?;
        samples.push(Sample {
            image_id: rec[0].to_string(),
            image: Arc::new(image_to_input(&img, resolution)),
            mos,
        });
    }
    Ok(Dataset { resolution, samples })
}

/// Labelled images rendered by the generator: coarse codes vary the
/// content, and fine codes are pushed away from the average in proportion
/// to a per-image severity that sets the label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub count: usize,
    pub seed: u64,
    /// Standard deviation of the content-code offsets.
    pub content_std: f64,
    /// Offset scale of the fine codes at full severity.
    pub distortion_std: f64,
    /// First fine-code index; `None` uses the 12-of-16 position.
    pub fine_from: Option<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            count: 20,
            seed: 0,
            content_std: 0.6,
            distortion_std: 3.0,
            fine_from: None,
        }
    }
}

pub fn synthetic_dataset(generator: &GeneratorHandle, spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.count == 0 {
        return Err(Error::Config("synthetic dataset needs at least one image".into()));
    }
    let n = generator.num_codes();
    let d = generator.code_dim();
    let fine_from = spec.fine_from.unwrap_or_else(|| scale_k(12, n));
    if fine_from == 0 || fine_from > n {
        return Err(Error::Config(format!("fine_from = {fine_from} must lie in 1..={n}")));
    }
    let r = generator.spec().resolution;
    let _guard = no_grad();
    let mut samples = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut g = rng(derive_seed(spec.seed, i as u64));
        let severity: f64 = g.random();
        let content = normal(&mut g, fine_from * d, spec.content_std);
        let fine = normal(&mut g, (n - fine_from) * d, spec.distortion_std * severity);
        let mut offsets = content;
        offsets.extend(fine);
        let codes = StyleCodeSet::new(Tensor::from_vec(offsets, &[1, n, d]), generator.average_code().to_vec())?;
        let image = generator.synthesize(&codes.injected(n))?.image;
        debug_assert_eq!(image.numel(), 3 * r * r);
        samples.push(Sample {
            image_id: format!("synthetic_{i:05}"),
            image: Arc::new(image.to_vec()),
            mos: 0.01 + 0.99 * (1.0 - severity),
        });
    }
    Ok(Dataset { resolution: r, samples })
}
