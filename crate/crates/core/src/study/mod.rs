//! Subjective-study analytics: batch composition with reliability probes,
//! slider mapping, rater reliability, outlier screening and MOS aggregation.

mod acr;
mod batch;
pub mod io;
mod mos;
mod reliability;

use serde::{Deserialize, Serialize};

pub use acr::{map_acr, training_gate, GateOutcome};
pub use batch::{build_batch, build_batches, BatchPlan, GoldImage, GoldLabel, Slot, BATCH_SLOTS, GOLD_PER_BATCH, REPEATS_PER_BATCH, STUDY_PER_BATCH};
pub use mos::{aggregate_mos, screen_and_mos, MosRecord, ScreeningConfig, StdConvention};
pub use reliability::{gold_accuracy, is_gold_correct, rater_plcc, rater_reports, self_consistency, RaterReport, GOLD_HIGH_BAND, GOLD_LOW_BAND};

/// Lowest and highest slider positions.
pub const MIN_SCORE: f64 = 0.01;
pub const MAX_SCORE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRole {
    Study,
    GoldHigh,
    GoldLow,
    RepeatFirst,
    RepeatSecond,
}

impl SlotRole {
    pub fn is_gold(self) -> bool {
        matches!(self, SlotRole::GoldHigh | SlotRole::GoldLow)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SlotRole::Study => "study",
            SlotRole::GoldHigh => "gold_high",
            SlotRole::GoldLow => "gold_low",
            SlotRole::RepeatFirst => "repeat_first",
            SlotRole::RepeatSecond => "repeat_second",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "study" => SlotRole::Study,
            "gold_high" => SlotRole::GoldHigh,
            "gold_low" => SlotRole::GoldLow,
            "repeat_first" => SlotRole::RepeatFirst,
            "repeat_second" => SlotRole::RepeatSecond,
            _ => return None,
        })
    }
}

/// One rating from the study log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub batch_id: String,
    pub image_id: String,
    pub slot_index: u32,
    pub slot_role: SlotRole,
    pub score: f64,
    pub timestamp: f64,
}
