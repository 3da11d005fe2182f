use std::path::{Path, PathBuf};

use clap::ValueEnum;
use gfiqa_core::config::Config;
use gfiqa_core::face_prep::io::load_image;
use gfiqa_core::generative::GeneratorHandle;
use gfiqa_core::harness::io::{predictions_tsv, write_metrics_log, write_results_csv};
use gfiqa_core::harness::{evaluate, image_to_input, run_ablation, split_dataset, train as train_model, Dataset, ModelCheckpoint, Sample, TrainEnv};
use gfiqa_core::model::{QualityModel, Variant};
use gfiqa_core::util::atomic_write;
use gfiqa_core::{Error, Result};

use crate::prep::image_id;
use crate::ConfigArgs;

#[derive(clap::Args)]
pub struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(clap::Args)]
pub struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    split: SplitName,
}

#[derive(clap::Args)]
pub struct PredictArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Write the scores here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

#[derive(clap::Args)]
pub struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Variants to run, repeatable; all nine when omitted.
    #[arg(long)]
    variant: Vec<Variant>,
}

fn load_config(args: &ConfigArgs) -> Result<Config> {
    let mut cfg = match &args.config {
        Some(p) => Config::load(p)?,
        None => Config::from_toml("", Path::new("."))?,
    };
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
        cfg.split.seed = seed;
    }
    if let Some(dir) = &args.out_dir {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

struct Splits {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

fn splits(cfg: &Config, data: &Dataset) -> Result<Splits> {
    let (train, val, test) = split_dataset(&data.ids(), &cfg.split)?;
    Ok(Splits {
        train: data.subset(&train)?,
        val: data.subset(&val)?,
        test: data.subset(&test)?,
    })
}

fn json_line(v: &serde_json::Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("json value");
    bytes.push(b'\n');
    bytes
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    cfg.validate()?;
    let generator = cfg.generator()?;
    let data = cfg.dataset(generator.as_ref())?;
    let s = splits(&cfg, &data)?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out)?;
    atomic_write(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    atomic_write(
        &out.join("split.json"),
        &json_line(&serde_json::json!({ "train": s.train.ids(), "val": s.val.ids(), "test": s.test.ids() })),
    )?;

    let extractors = cfg.extractors();
    let env = TrainEnv {
        generator: generator.as_ref(),
        extractors: &extractors,
    };
    let mut records = Vec::new();
    let keep = cfg.output.keep_epoch_checkpoints;
    let outcome = train_model(&env, &cfg.arch, cfg.variant, &cfg.train, &s.train, Some(&s.val), |rec, ckpt| {
        eprintln!(
            "epoch {:>3}  lr {:.2e}  loss {:.5}  val_srcc {}",
            rec.epoch,
            rec.lr,
            rec.losses.total,
            rec.val_srcc.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
        records.push(rec.clone());
        write_metrics_log(&out.join("metrics.jsonl"), &records)?;
        if keep {
            ckpt.save(&out.join(format!("epoch_{:03}.ckpt", rec.epoch)))?;
        }
        Ok(())
    })?;
    if let Some(last) = outcome.epochs.last() {
        let ckpt = ModelCheckpoint {
            model: outcome.model.clone(),
            generator_hash: generator.as_ref().filter(|_| cfg.variant.uses_generator()).map(|g| g.checksum().to_string()).unwrap_or_default(),
            config_hash: cfg.train.hash(&cfg.arch, cfg.variant),
            epoch: last.epoch,
            val_srcc: last.val_srcc,
        };
        ckpt.save(&out.join("last.ckpt"))?;
    }
    let best = outcome.best.ok_or_else(|| Error::Numerical("training produced no checkpoint".into()))?;
    best.save(&out.join("best.ckpt"))?;
    eprintln!("best epoch {} written to {}", best.epoch, out.join("best.ckpt").display());
    Ok(())
}

/// Loads a checkpoint and the generator it was trained against.
fn load_model(cfg: &Config, path: &Path) -> Result<(QualityModel, Option<GeneratorHandle>)> {
    let ckpt = ModelCheckpoint::load(path)?;
    if ckpt.model.arch != cfg.arch {
        return Err(Error::Config(format!("checkpoint {} was trained with a different architecture", path.display())));
    }
    let generator = if ckpt.model.variant.uses_generator() {
        let g = cfg.generator()?.ok_or_else(|| Error::Config("checkpoint needs a [generator] source".into()))?;
        if g.checksum() != ckpt.generator_hash {
            return Err(Error::Config(format!("generator checksum differs from the one {} was trained with", path.display())));
        }
        Some(g)
    } else {
        None
    };
    Ok((ckpt.model, generator))
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let (model, generator) = load_model(&cfg, &args.checkpoint)?;
    let data_gen = if generator.is_some() { generator.clone() } else { cfg.generator()? };
    let data = cfg.dataset(data_gen.as_ref())?;
    let set = match args.split {
        SplitName::All => data,
        name => {
            let s = splits(&cfg, &data)?;
            match name {
                SplitName::Train => s.train,
                SplitName::Val => s.val,
                _ => s.test,
            }
        }
    };
    let ev = evaluate(&model, generator.as_ref(), &set, cfg.train.batch_size)?;
    let split = format!("{:?}", args.split).to_lowercase();
    let report = serde_json::json!({
        "split": split,
        "count": set.len(),
        "srcc": finite(ev.scores.srcc),
        "plcc": finite(ev.scores.plcc),
        "rmse": finite(ev.scores.rmse),
    });
    std::fs::create_dir_all(&cfg.output.dir)?;
    atomic_write(&cfg.output.dir.join(format!("eval_{split}.json")), &json_line(&report))?;
    atomic_write(&cfg.output.dir.join(format!("predictions_{split}.tsv")), predictions_tsv(&ev.predictions).as_bytes())?;
    println!("srcc {:.6}  plcc {:.6}  rmse {:.6}  n {}", ev.scores.srcc, ev.scores.plcc, ev.scores.rmse, set.len());
    Ok(())
}

fn finite(v: f64) -> serde_json::Value {
    if v.is_finite() {
        v.into()
    } else {
        serde_json::Value::Null
    }
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let (model, generator) = load_model(&cfg, &args.checkpoint)?;
    let r = cfg.arch.resolution;
    let mut samples = Vec::with_capacity(args.images.len());
    for path in &args.images {
        let img = load_image(path)?;
        samples.push(Sample {
            image_id: image_id(path)?,
            image: image_to_input(&img, r).into(),
            mos: 0.0,
        });
    }
    let data = Dataset { resolution: r, samples };
    let preds = gfiqa_core::harness::predict_dataset(&model, generator.as_ref(), &data, cfg.train.batch_size)?;
    let text = predictions_tsv(&preds);
    match &args.out {
        Some(p) => atomic_write(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn ablate(args: AblateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let variants = if args.variant.is_empty() { Variant::ALL.to_vec() } else { args.variant.clone() };
    let generator = cfg.generator()?;
    if generator.is_none() && variants.iter().any(|v| v.uses_generator()) {
        return Err(Error::Config("ablation needs a [generator] source".into()));
    }
    let data = cfg.dataset(generator.as_ref())?;
    let s = splits(&cfg, &data)?;
    let extractors = cfg.extractors();
    let env = TrainEnv {
        generator: generator.as_ref(),
        extractors: &extractors,
    };
    let out = cfg.output.dir.join("results.csv");
    std::fs::create_dir_all(&cfg.output.dir)?;
    let mut done = Vec::new();
    run_ablation(&env, &cfg.arch, &cfg.train, &s.train, &s.val, &s.test, &variants, |row| {
        eprintln!("{:<22} srcc {:.4}  plcc {:.4}  rmse {:.4}", row.variant.to_string(), row.srcc, row.plcc, row.rmse);
        done.push(row.clone());
        write_results_csv(&out, &done)
    })?;
    eprintln!("results written to {}", out.display());
    Ok(())
}
