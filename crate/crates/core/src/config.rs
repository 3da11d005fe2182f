//! TOML run configuration. A profile supplies every default; the file only
//! needs the keys it changes. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::ArchConfig;
use crate::error::{Error, Result};
use crate::generative::{GeneratorHandle, GeneratorSpec};
use crate::harness::{load_manifest, synthetic_dataset, Dataset, SplitSpec, SyntheticSpec, TrainConfig};
use crate::model::{Extractors, Variant};
use crate::objectives::{StubIdentity, StubPerceptual};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 64×64 networks and a synthetic dataset; runs on one CPU.
    #[default]
    Toy,
    /// 512×512 networks; needs a manifest and generator weights.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// CSV with `image_id,path,mos` rows.
    Manifest(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSource {
    /// Saved generator container.
    Weights(PathBuf),
    /// Randomly initialised test double.
    Seed(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorConfig {
    pub perceptual_seed: u64,
    pub identity_seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            perceptual_seed: 1,
            identity_seed: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write a checkpoint file for every epoch.
    pub keep_epoch_checkpoints: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            keep_epoch_checkpoints: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub profile: Profile,
    pub variant: Variant,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub data: Option<DataSource>,
    pub generator: Option<GeneratorSource>,
    pub extractors: ExtractorConfig,
    pub output: OutputConfig,
}

impl Config {
    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Toy => Self {
                profile,
                variant: Variant::Full,
                arch: ArchConfig::toy(),
                train: TrainConfig {
                    batch_size: 4,
                    base_lr: 1e-3,
                    k: 8,
                    ..TrainConfig::default()
                },
                split: SplitSpec::default(),
                data: Some(DataSource::Synthetic(SyntheticSpec {
                    count: 60,
                    ..SyntheticSpec::default()
                })),
                generator: Some(GeneratorSource::Seed(7)),
                extractors: ExtractorConfig::default(),
                output: OutputConfig::default(),
            },
            Profile::Full => Self {
                profile,
                variant: Variant::Full,
                arch: ArchConfig::full(),
                train: TrainConfig::default(),
                split: SplitSpec::default(),
                data: None,
                generator: None,
                extractors: ExtractorConfig::default(),
                output: OutputConfig::default(),
            },
        }
    }

    /// Parses TOML over the defaults of its `profile` (toy when absent).
    /// Relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let profile = match user.get("profile") {
            Some(v) => Profile::deserialize(v.clone()).map_err(|e| Error::Config(format!("profile: {e}")))?,
            None => Profile::default(),
        };
        let defaults = toml::Table::try_from(Self::for_profile(profile)).map_err(|e| Error::Config(e.to_string()))?;
        let merged = merge(defaults, user);
        let mut cfg: Config = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new("."))).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(DataSource::Manifest(p)) = &mut self.data {
            fix(p);
        }
        if let Some(GeneratorSource::Weights(p)) = &mut self.generator {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.train.validate(self.arch.num_codes())?;
        if self.variant.uses_generator() && self.generator.is_none() {
            return Err(Error::Config(format!("variant {} needs a [generator] source", self.variant)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads or builds the frozen generator and checks it matches `arch`.
    pub fn generator(&self) -> Result<Option<GeneratorHandle>> {
        let g = match &self.generator {
            None => return Ok(None),
            Some(GeneratorSource::Seed(seed)) => GeneratorHandle::random(&GeneratorSpec::from_arch(&self.arch), *seed)?,
            Some(GeneratorSource::Weights(p)) => GeneratorHandle::load(p)?,
        };
        if *g.spec() != GeneratorSpec::from_arch(&self.arch) {
            return Err(Error::Config(format!("generator {:?} does not match the configured architecture", g.spec())));
        }
        Ok(Some(g))
    }

    pub fn extractors(&self) -> Extractors {
        Extractors {
            perceptual: Box::new(StubPerceptual::new(self.extractors.perceptual_seed)),
            identity: Box::new(StubIdentity::new(self.extractors.identity_seed)),
        }
    }

    pub fn dataset(&self, generator: Option<&GeneratorHandle>) -> Result<Dataset> {
        match &self.data {
            None => Err(Error::Config("no [data] source configured".into())),
            Some(DataSource::Manifest(p)) => load_manifest(p, self.arch.resolution),
            Some(DataSource::Synthetic(spec)) => {
                let g = generator.ok_or_else(|| Error::Config("synthetic data needs a [generator] source".into()))?;
                synthetic_dataset(g, spec)
            }
        }
    }
}

/// Overlays `user` on `base` table by table. Source tables are replaced
/// whole since their variants do not mix.
fn merge(mut base: toml::Table, user: toml::Table) -> toml::Table {
    for (k, v) in user {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if k != "data" && k != "generator" => {
                base.insert(k, toml::Value::Table(merge(b, u)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_toy_profile() {
        let c = Config::from_toml("", Path::new("/tmp")).unwrap();
        assert_eq!(c.arch, ArchConfig::toy());
        assert_eq!(c.train.batch_size, 4);
        assert_eq!(c.output.dir, Path::new("/tmp/runs"));
    }

    #[test]
    fn nested_override_keeps_siblings() {
        let c = Config::from_toml("[train]\nseed = 9\n[train.loss.weights]\nquality = 2.0\n", Path::new(".")).unwrap();
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.train.base_lr, 1e-3);
        assert_eq!(c.train.objective.weights.quality, 2.0);
        assert_eq!(c.train.objective.weights.percep, 0.8);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(Config::from_toml("[train]\nbatchsize = 3\n", Path::new(".")), Err(Error::Config(_))));
        assert!(matches!(Config::from_toml("colour = 1\n", Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn full_profile_needs_data() {
        let c = Config::from_toml("profile = \"full\"\ngenerator = { seed = 1 }\n", Path::new(".")).unwrap();
        assert_eq!(c.train.base_lr, 5e-5);
        assert!(c.dataset(None).is_err());
    }

    #[test]
    fn round_trip() {
        let c = Config::for_profile(Profile::Toy);
        let back = Config::from_toml(&c.to_toml().unwrap(), Path::new("/")).unwrap();
        assert_eq!(back.train, c.train);
        assert_eq!(back.data, c.data);
    }
}
