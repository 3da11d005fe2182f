use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Subcommand;
use gfiqa_core::face_prep::io::{load_image, read_embeddings, read_landmarks, save_png};
use gfiqa_core::face_prep::{
    compute_crop, detect_faces, extract_face, select_representatives, Detection, Resample, StubDetector, DEFAULT_MIN_FACE_SIZE, DEFAULT_OUT_SIZE,
    EMBEDDING_DIM,
};
use gfiqa_core::util::atomic_write;
use gfiqa_core::{Error, Result};

#[derive(Subcommand)]
pub enum PrepCommand {
    /// Detect faces and write the kept detections as JSON keyed by image id.
    Detect {
        /// Precomputed detections, `{"<image_id>": [{"box", "landmarks", "confidence"}]}`.
        #[arg(long)]
        detections: PathBuf,
        /// Images to process; the image id is the file stem.
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MIN_FACE_SIZE)]
        min_face_size: u32,
        #[arg(long, default_value_t = 0.0)]
        min_confidence: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one aligned square crop per landmark record.
    Crop {
        /// JSON array of `{image_id, left_eye: [x, y], right_eye: [x, y]}`.
        #[arg(long)]
        landmarks: PathBuf,
        /// Directory holding `<image_id>.png|jpg|jpeg`.
        #[arg(long)]
        images_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_OUT_SIZE)]
        out_size: u32,
        /// Use nearest-neighbour instead of bilinear sampling.
        #[arg(long)]
        nearest: bool,
    },
    /// Cluster embeddings and keep one representative per cluster.
    Select {
        /// CSV (`image_id,v1,...`) or binary embedding file.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = EMBEDDING_DIM)]
        dim: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Selected ids, one per line.
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cmd: PrepCommand) -> Result<()> {
    match cmd {
        PrepCommand::Detect {
            detections,
            images,
            min_face_size,
            min_confidence,
            out,
        } => {
            let detector = StubDetector::from_file(&detections)?;
            let mut found: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
            for path in &images {
                let img = load_image(path)?;
                let id = image_id(path)?;
                found.insert(id.clone(), detect_faces(&detector, &id, &img, min_face_size, min_confidence)?);
            }
            let mut bytes = serde_json::to_vec_pretty(&found).map_err(|e| Error::Input(e.to_string()))?;
            bytes.push(b'\n');
            atomic_write(&out, &bytes)?;
            let n: usize = found.values().map(Vec::len).sum();
            eprintln!("{n} faces kept in {} images", found.len());
            Ok(())
        }
        PrepCommand::Crop {
            landmarks,
            images_dir,
            out_dir,
            out_size,
            nearest,
        } => {
            if out_size == 0 {
                return Err(Error::InvalidArgument("--out-size must be positive".into()));
            }
            let resample = if nearest { Resample::Nearest } else { Resample::Bilinear };
            let records = read_landmarks(&landmarks)?;
            std::fs::create_dir_all(&out_dir)?;
            for (id, lm) in &records {
                let img = load_image(&find_image(&images_dir, id)?)?;
                let crop = compute_crop(lm)?;
                let face = extract_face(&img, &crop, out_size, resample)?;
                save_png(&out_dir.join(format!("{id}.png")), &face)?;
            }
            eprintln!("{} crops written to {}", records.len(), out_dir.display());
            Ok(())
        }
        PrepCommand::Select { embeddings, dim, k, seed, out } => {
            let records = read_embeddings(&embeddings, dim)?;
            let ids = select_representatives(&records, k, seed)?;
            let text: String = ids.iter().map(|id| format!("{id}\n")).collect();
            atomic_write(&out, text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn image_id(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Input(format!("cannot derive an image id from {}", path.display())))
}

fn find_image(dir: &Path, id: &str) -> Result<PathBuf> {
    ["png", "jpg", "jpeg"]
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::Input(format!("no image for {id} in {}", dir.display())))
}
