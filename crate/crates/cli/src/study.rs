use std::path::PathBuf;

use clap::Subcommand;
use gfiqa_core::study::io::{read_rating_log, write_mos_csv, write_reliability_json};
use gfiqa_core::study::{aggregate_mos, build_batches, rater_reports, GoldImage, GoldLabel, ScreeningConfig, StdConvention};
use gfiqa_core::util::atomic_write;
use gfiqa_core::{Error, Result};

#[derive(clap::Args)]
pub struct ScreeningArgs {
    /// Use the n−1 standard deviation when screening.
    #[arg(long)]
    sample_std: bool,
}

impl ScreeningArgs {
    fn config(&self) -> ScreeningConfig {
        ScreeningConfig {
            std: if self.sample_std { StdConvention::Sample } else { StdConvention::Population },
            ..ScreeningConfig::default()
        }
    }
}

#[derive(Subcommand)]
pub enum StudyCommand {
    /// Compose rating batches as JSON.
    BuildBatches {
        /// Study image ids, one per line; the count must be a multiple of 40.
        #[arg(long)]
        study_ids: PathBuf,
        /// CSV `image_id,label` with labels `high` or `low`.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-rater reliability JSON and the MOS table.
    Analyze {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        screening: ScreeningArgs,
    },
    /// Write the screened MOS table.
    Mos {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        screening: ScreeningArgs,
    },
}

pub fn run(cmd: StudyCommand) -> Result<()> {
    match cmd {
        StudyCommand::BuildBatches { study_ids, gold, seed, out } => {
            let ids = read_lines(&study_ids)?;
            let pool = read_gold(&gold)?;
            let plans = build_batches(&ids, &pool, seed)?;
            let mut bytes = serde_json::to_vec_pretty(&plans).map_err(|e| Error::Input(e.to_string()))?;
            bytes.push(b'\n');
            atomic_write(&out, &bytes)?;
            eprintln!("{} batches written", plans.len());
            Ok(())
        }
        StudyCommand::Analyze { ratings, out_dir, screening } => {
            let records = read_rating_log(&ratings)?;
            let mos = aggregate_mos(&records, &screening.config())?;
            let reports = rater_reports(&records, &mos)?;
            std::fs::create_dir_all(&out_dir)?;
            write_mos_csv(&out_dir.join("mos.csv"), &mos)?;
            write_reliability_json(&out_dir.join("reliability.json"), &reports)?;
            eprintln!("{} images, {} raters", mos.len(), reports.len());
            Ok(())
        }
        StudyCommand::Mos { ratings, out, screening } => {
            let records = read_rating_log(&ratings)?;
            write_mos_csv(&out, &aggregate_mos(&records, &screening.config())?)
        }
    }
}

fn read_lines(path: &PathBuf) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn read_gold(path: &PathBuf) -> Result<Vec<GoldImage>> {
    let err = |m: String| Error::Input(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let label = match rec.get(1).map(str::trim) {
            Some("high") => GoldLabel::High,
            Some("low") => GoldLabel::Low,
            other => return Err(err(format!("line {line}: bad gold label {other:?}"))),
        };
        out.push(GoldImage {
            image_id: rec[0].trim().to_string(),
            label,
        });
    }
    Ok(out)
}
