//! Landmark, embedding and image file boundaries.

use std::path::Path;

use image::RgbImage;
use serde::Deserialize;

use super::{EmbeddingRecord, Landmarks, Point};
use crate::error::{Error, Result};

const EMBEDDING_MAGIC: &[u8; 8] = b"GFEMB1\0\0";

fn input_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Input(format!("{}: {e}", path.display()))
}

pub fn load_image(path: &Path) -> Result<RgbImage> {
    let img = image::ImageReader::open(path)
        .map_err(|e| input_err(path, e))?
        .with_guessed_format()
        .map_err(|e| input_err(path, e))?
        .decode()
        .map_err(|e| input_err(path, e))?;
    Ok(img.to_rgb8())
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbImage> {
    image::load_from_memory(bytes)
        .map(|i| i.to_rgb8())
        .map_err(|e| Error::Input(format!("undecodable image: {e}")))
}

/// Encodes as PNG and writes atomically.
pub fn save_png(path: &Path, image: &RgbImage) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    image
        .write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| input_err(path, e))?;
    crate::util::atomic_write(path, &buf.into_inner())?;
    Ok(())
}

#[derive(Deserialize)]
struct LandmarkRow {
    image_id: String,
    left_eye: [f64; 2],
    right_eye: [f64; 2],
    #[serde(default)]
    confidence: Option<f64>,
}

/// Reads a JSON array of `{image_id, left_eye: [x, y], right_eye: [x, y]}`.
pub fn read_landmarks(path: &Path) -> Result<Vec<(String, Landmarks)>> {
    let text = std::fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    parse_landmarks(&text).map_err(|e| input_err(path, e))
}

pub fn parse_landmarks(text: &str) -> Result<Vec<(String, Landmarks)>> {
    let rows: Vec<LandmarkRow> = serde_json::from_str(text).map_err(|e| Error::Input(format!("landmark file: {e}")))?;
    Ok(rows
        .into_iter()
        .map(|r| {
            let mut lm = Landmarks::from_eyes(Point::from(r.left_eye), Point::from(r.right_eye));
            if let Some(c) = r.confidence {
                lm.confidence = c;
            }
            (r.image_id, lm)
        })
        .collect())
}

fn check_dim(records: &[EmbeddingRecord], dim: usize) -> Result<()> {
    for r in records {
        if r.vector.len() != dim {
            return Err(Error::Input(format!(
                "embedding {} has {} entries, expected {dim}",
                r.image_id,
                r.vector.len()
            )));
        }
        if r.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("embedding {} has a non-finite entry", r.image_id)));
        }
    }
    Ok(())
}

/// CSV rows of `image_id,v1,...,v_dim`. A first row whose second field is
/// not numeric is treated as a header.
pub fn parse_embeddings_csv(text: &str, dim: usize) -> Result<Vec<EmbeddingRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("embedding csv: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        if i == 0 && rec.get(1).is_some_and(|s| s.trim().parse::<f64>().is_err()) {
            continue;
        }
        let vector = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Input(format!("embedding csv line {line}: {e}")))?;
        out.push(EmbeddingRecord {
            image_id: rec[0].to_string(),
            vector,
        });
    }
    check_dim(&out, dim)?;
    Ok(out)
}

/// Binary layout: magic, u32 dimension, then per record a u32 id length,
/// the UTF-8 id and `dim` little-endian f32 values.
pub fn parse_embeddings_bin(bytes: &[u8], dim: usize) -> Result<Vec<EmbeddingRecord>> {
    let bad = |m: &str| Error::Input(format!("embedding file: {m}"));
    if bytes.len() < 12 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(bad("missing magic"));
    }
    let file_dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if file_dim != dim {
        return Err(bad(&format!("dimension {file_dim}, expected {dim}")));
    }
    let mut pos = 12;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            let s = bytes.get(*pos..*pos + n).ok_or_else(|| bad("truncated record"))?;
            *pos += n;
            Ok(s)
        };
        let id_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().expect("4 bytes")) as usize;
        let image_id = std::str::from_utf8(take(&mut pos, id_len)?)
            .map_err(|_| bad("id is not UTF-8"))?
            .to_string();
        let vector = take(&mut pos, 4 * dim)?
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        out.push(EmbeddingRecord { image_id, vector });
    }
    check_dim(&out, dim)?;
    Ok(out)
}

pub fn encode_embeddings_bin(records: &[EmbeddingRecord], dim: usize) -> Result<Vec<u8>> {
    check_dim(records, dim)?;
    let mut out = EMBEDDING_MAGIC.to_vec();
    out.extend((dim as u32).to_le_bytes());
    for r in records {
        out.extend((r.image_id.len() as u32).to_le_bytes());
        out.extend(r.image_id.as_bytes());
        for v in &r.vector {
            out.extend((*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Reads either embedding format, chosen by the leading magic bytes.
pub fn read_embeddings(path: &Path, dim: usize) -> Result<Vec<EmbeddingRecord>> {
    let bytes = std::fs::read(path).map_err(|e| input_err(path, e))?;
    if bytes.starts_with(EMBEDDING_MAGIC) {
        parse_embeddings_bin(&bytes, dim)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| input_err(path, "neither binary embeddings nor UTF-8 CSV"))?;
        parse_embeddings_csv(&text, dim)
    }
    .map_err(|e| input_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_and_without_header() {
        let a = parse_embeddings_csv("id,e0,e1\nx,1,2\ny,3,4\n", 2).unwrap();
        let b = parse_embeddings_csv("x,1,2\ny,3,4\n", 2).unwrap();
        assert_eq!(a, b);
        assert!(parse_embeddings_csv("x,1,2,3\n", 2).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let recs = vec![
            EmbeddingRecord {
                image_id: "a".into(),
                vector: vec![0.5, -1.0, 2.0],
            },
            EmbeddingRecord {
                image_id: "bé".into(),
                vector: vec![0.0, 0.25, 8.0],
            },
        ];
        let bytes = encode_embeddings_bin(&recs, 3).unwrap();
        assert_eq!(parse_embeddings_bin(&bytes, 3).unwrap(), recs);
        assert!(parse_embeddings_bin(&bytes[..bytes.len() - 1], 3).is_err());
        assert!(parse_embeddings_bin(&bytes, 4).is_err());
    }

    #[test]
    fn landmarks_json() {
        let lm = parse_landmarks(r#"[{"image_id":"a","left_eye":[1,2],"right_eye":[3,4]}]"#).unwrap();
        assert_eq!(lm[0].0, "a");
        assert_eq!(lm[0].1.right_eye, Point::new(3.0, 4.0));
    }

    #[test]
    fn garbage_image_is_input_error() {
        assert!(matches!(decode_image(b"not an image"), Err(Error::Input(_))));
    }
}
