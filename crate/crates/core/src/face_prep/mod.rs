//! Face crop preparation: detection filtering, eye-based alignment and
//! cropping, and identity-diverse subset selection.

mod cluster;
mod crop;
mod detect;
pub mod io;

use serde::{Deserialize, Serialize};

pub use cluster::{kmeans, select_representatives, KMeansConfig, KMeansResult};
pub use crop::{compute_crop, extract_face, CropSpec, Resample};
pub use detect::{detect_faces, BoundingBox, Detection, FaceDetector, StubDetector};

/// Dimension of the identity embeddings used for diversity selection.
pub const EMBEDDING_DIM: usize = 512;
pub const DEFAULT_MIN_FACE_SIZE: u32 = 400;
pub const DEFAULT_OUT_SIZE: u32 = 512;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub left_eye: Point,
    pub right_eye: Point,
    #[serde(default)]
    pub aux: Vec<Point>,
    #[serde(default = "full_confidence")]
    pub confidence: f64,
}

fn full_confidence() -> f64 {
    1.0
}

impl Landmarks {
    pub fn from_eyes(left_eye: Point, right_eye: Point) -> Self {
        Self {
            left_eye,
            right_eye,
            aux: Vec::new(),
            confidence: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub image_id: String,
    pub vector: Vec<f64>,
}
