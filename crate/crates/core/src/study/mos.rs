use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RatingRecord;
use crate::error::{Error, Result};

/// Absolute tolerance on the screening band. Two-rating images put both
/// ratings exactly on the band edge, where rounding in the mean and the
/// deviation could otherwise drop both.
const BAND_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdConvention {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n − 1.
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub std: StdConvention,
    /// Half-width of the kept band in standard deviations.
    pub width: f64,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self {
            std: StdConvention::Population,
            width: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosRecord {
    pub image_id: String,
    pub mos: f64,
    pub ratings_used: usize,
    pub ratings_removed: usize,
    pub std_all: f64,
}

/// Removes ratings farther than one standard deviation from the mean of all
/// ratings of the image and averages the rest. The band is computed once.
pub fn screen_and_mos(image_id: &str, scores: &[f64], cfg: &ScreeningConfig) -> Result<MosRecord> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument(format!("image {image_id} has no ratings")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("image {image_id} has a non-finite rating")));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let ss: f64 = scores.iter().map(|s| (s - mean) * (s - mean)).sum();
    let denom = match cfg.std {
        StdConvention::Population => n,
        StdConvention::Sample if scores.len() > 1 => n - 1.0,
        StdConvention::Sample => 1.0,
    };
    let std_all = (ss / denom).sqrt();

    let first = scores[0];
    if scores.iter().all(|&s| s == first) {
        return Ok(MosRecord {
            image_id: image_id.to_string(),
            mos: first,
            ratings_used: scores.len(),
            ratings_removed: 0,
            std_all,
        });
    }

    let half = cfg.width * std_all + BAND_SLACK;
    let kept: Vec<f64> = scores.iter().copied().filter(|s| (s - mean).abs() <= half).collect();
    if kept.is_empty() {
        return Err(Error::Numerical(format!("screening removed every rating of {image_id}")));
    }
    let lo = kept.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = kept.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mos = (kept.iter().sum::<f64>() / kept.len() as f64).clamp(lo, hi);
    Ok(MosRecord {
        image_id: image_id.to_string(),
        mos,
        ratings_used: kept.len(),
        ratings_removed: scores.len() - kept.len(),
        std_all,
    })
}

/// Groups non-gold ratings by image and screens each group. Both
/// presentations of a repeated image count as ratings. Output is sorted by
/// image id so the result does not depend on log order.
pub fn aggregate_mos(records: &[RatingRecord], cfg: &ScreeningConfig) -> Result<Vec<MosRecord>> {
    let mut by_image: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.slot_role.is_gold()) {
        by_image.entry(r.image_id.as_str()).or_default().push(r.score);
    }
    by_image
        .into_iter()
        .map(|(id, mut scores)| {
            // Fixed order keeps floating sums independent of log order.
            scores.sort_by(f64::total_cmp);
            screen_and_mos(id, &scores, cfg)
        })
        .collect()
}
