use std::collections::HashMap;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::Landmarks;
use crate::error::{Error, Result};

/// Axis-aligned box: top-left corner plus size, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub landmarks: Landmarks,
    pub confidence: f64,
}

pub trait FaceDetector {
    fn detect(&self, image_id: &str, image: &RgbImage) -> Result<Vec<Detection>>;
}

/// Returns preconfigured detections keyed by image id.
#[derive(Clone, Debug, Default)]
pub struct StubDetector {
    faces: HashMap<String, Vec<Detection>>,
}

impl StubDetector {
    pub fn new(faces: HashMap<String, Vec<Detection>>) -> Self {
        Self { faces }
    }

    /// Sidecar format: `{"<image_id>": [{"box": {...}, "landmarks": {...}, "confidence": c}, ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let faces = serde_json::from_str(text).map_err(|e| Error::Input(format!("detector sidecar: {e}")))?;
        Ok(Self { faces })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl FaceDetector for StubDetector {
    fn detect(&self, image_id: &str, _image: &RgbImage) -> Result<Vec<Detection>> {
        Ok(self.faces.get(image_id).cloned().unwrap_or_default())
    }
}

/// Runs the detector and keeps faces whose shorter box side reaches
/// `min_face_size` and whose confidence reaches `min_confidence`.
pub fn detect_faces(
    detector: &dyn FaceDetector,
    image_id: &str,
    image: &RgbImage,
    min_face_size: u32,
    min_confidence: f64,
) -> Result<Vec<Detection>> {
    if min_face_size == 0 {
        return Err(Error::InvalidArgument("min_face_size must be positive".into()));
    }
    if image.width().min(image.height()) < min_face_size {
        return Ok(Vec::new());
    }
    let min = f64::from(min_face_size);
    Ok(detector
        .detect(image_id, image)?
        .into_iter()
        .filter(|d| d.bbox.width.min(d.bbox.height) >= min && d.confidence >= min_confidence)
        .collect())
}
