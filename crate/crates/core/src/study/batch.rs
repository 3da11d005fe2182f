use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::SlotRole;
use crate::error::{Error, Result};
use crate::util::{derive_seed, rng};

pub const STUDY_PER_BATCH: usize = 40;
pub const GOLD_PER_BATCH: usize = 5;
pub const REPEATS_PER_BATCH: usize = 5;
pub const BATCH_SLOTS: usize = STUDY_PER_BATCH + GOLD_PER_BATCH + REPEATS_PER_BATCH;
const GOLD_POOL_PER_LABEL: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldLabel {
    High,
    Low,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldImage {
    pub image_id: String,
    pub label: GoldLabel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub slot_index: usize,
    pub image_id: String,
    pub role: SlotRole,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_id: String,
    pub study_ids: Vec<String>,
    pub gold_slots: Vec<GoldImage>,
    pub repeat_ids: Vec<String>,
    pub presentation_order: Vec<Slot>,
}

impl BatchPlan {
    /// Checks the 40 + 5 gold + 5 repeat composition.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("batch {}: {msg}", self.batch_id)));
        if self.study_ids.len() != STUDY_PER_BATCH {
            return bad(format!("{} study ids", self.study_ids.len()));
        }
        if self.gold_slots.len() != GOLD_PER_BATCH {
            return bad(format!("{} gold slots", self.gold_slots.len()));
        }
        if self.repeat_ids.len() != REPEATS_PER_BATCH {
            return bad(format!("{} repeat ids", self.repeat_ids.len()));
        }
        if self.presentation_order.len() != BATCH_SLOTS {
            return bad(format!("{} presentation slots", self.presentation_order.len()));
        }
        for (i, slot) in self.presentation_order.iter().enumerate() {
            if slot.slot_index != i {
                return bad(format!("slot {i} carries index {}", slot.slot_index));
            }
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for slot in self.presentation_order.iter().filter(|s| !s.role.is_gold()) {
            *counts.entry(slot.image_id.as_str()).or_default() += 1;
        }
        for id in &self.study_ids {
            let expected = if self.repeat_ids.contains(id) { 2 } else { 1 };
            if counts.get(id.as_str()) != Some(&expected) {
                return bad(format!("study image {id} shown {:?} times", counts.get(id.as_str())));
            }
            if !self.repeat_ids.contains(id) {
                continue;
            }
            let positions: Vec<usize> = self
                .presentation_order
                .iter()
                .filter(|s| &s.image_id == id && !s.role.is_gold())
                .map(|s| s.slot_index)
                .collect();
            if positions[1] - positions[0] < 2 {
                return bad(format!("repeat {id} presented in adjacent slots"));
            }
        }
        let gold_shown = self.presentation_order.iter().filter(|s| s.role.is_gold()).count();
        if gold_shown != GOLD_PER_BATCH {
            return bad(format!("{gold_shown} gold presentations"));
        }
        Ok(())
    }
}

fn check_pool(gold_pool: &[GoldImage]) -> Result<()> {
    let high = gold_pool.iter().filter(|g| g.label == GoldLabel::High).count();
    let low = gold_pool.len() - high;
    if high != GOLD_POOL_PER_LABEL || low != GOLD_POOL_PER_LABEL {
        return Err(Error::InvalidArgument(format!(
            "gold pool must hold {GOLD_POOL_PER_LABEL} high and {GOLD_POOL_PER_LABEL} low images, got {high} high and {low} low"
        )));
    }
    Ok(())
}

/// Composes one 50-slot batch: the 40 study images, 5 gold images sampled
/// with replacement, and 5 of the study images presented a second time.
/// The two presentations of a repeat are never adjacent.
pub fn build_batch(batch_id: &str, study_ids: &[String], gold_pool: &[GoldImage], seed: u64) -> Result<BatchPlan> {
    if study_ids.len() != STUDY_PER_BATCH {
        return Err(Error::InvalidArgument(format!(
            "a batch needs exactly {STUDY_PER_BATCH} study ids, got {}",
            study_ids.len()
        )));
    }
    check_pool(gold_pool)?;
    let mut r = rng(seed);
    let gold_slots: Vec<GoldImage> = (0..GOLD_PER_BATCH)
        .map(|_| gold_pool.choose(&mut r).cloned().expect("non-empty pool"))
        .collect();
    let repeat_ids: Vec<String> = study_ids
        .choose_multiple(&mut r, REPEATS_PER_BATCH)
        .cloned()
        .collect();

    // (image, is_gold_label) entries before ordering.
    let mut items: Vec<(String, Option<GoldLabel>)> = study_ids.iter().map(|id| (id.clone(), None)).collect();
    items.extend(repeat_ids.iter().map(|id| (id.clone(), None)));
    items.extend(gold_slots.iter().map(|g| (g.image_id.clone(), Some(g.label))));

    let order = loop {
        items.shuffle(&mut r);
        if !repeats_adjacent(&items) {
            break items.clone();
        }
    };

    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let presentation_order = order
        .iter()
        .enumerate()
        .map(|(slot_index, (id, gold))| {
            let role = match gold {
                Some(GoldLabel::High) => SlotRole::GoldHigh,
                Some(GoldLabel::Low) => SlotRole::GoldLow,
                None if repeat_ids.contains(id) => {
                    let n = seen.entry(id.as_str()).or_default();
                    *n += 1;
                    if *n == 1 {
                        SlotRole::RepeatFirst
                    } else {
                        SlotRole::RepeatSecond
                    }
                }
                None => SlotRole::Study,
            };
            Slot {
                slot_index,
                image_id: id.clone(),
                role,
            }
        })
        .collect();

    let plan = BatchPlan {
        batch_id: batch_id.to_string(),
        study_ids: study_ids.to_vec(),
        gold_slots,
        repeat_ids,
        presentation_order,
    };
    plan.validate()?;
    Ok(plan)
}

fn repeats_adjacent(items: &[(String, Option<GoldLabel>)]) -> bool {
    items
        .windows(2)
        .any(|w| w[0].1.is_none() && w[1].1.is_none() && w[0].0 == w[1].0)
}

/// Randomly divides the study images into consecutive 40-image batches and
/// composes each one. The id count must be a multiple of 40.
pub fn build_batches(study_ids: &[String], gold_pool: &[GoldImage], seed: u64) -> Result<Vec<BatchPlan>> {
    if study_ids.is_empty() || study_ids.len() % STUDY_PER_BATCH != 0 {
        return Err(Error::InvalidArgument(format!(
            "study id count {} is not a positive multiple of {STUDY_PER_BATCH}",
            study_ids.len()
        )));
    }
    let mut ids = study_ids.to_vec();
    ids.shuffle(&mut rng(derive_seed(seed, 0)));
    ids.chunks(STUDY_PER_BATCH)
        .enumerate()
        .map(|(i, chunk)| build_batch(&format!("batch_{i:04}"), chunk, gold_pool, derive_seed(seed, 1 + i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn pool() -> Vec<GoldImage> {
        (0..200)
            .map(|i| GoldImage {
                image_id: format!("gold{i}"),
                label: if i < 100 { GoldLabel::High } else { GoldLabel::Low },
            })
            .collect()
    }

    fn study() -> Vec<String> {
        (0..40).map(|i| format!("img{i}")).collect()
    }

    #[test]
    fn fifty_slots_with_double_repeats() {
        let plan = build_batch("b", &study(), &pool(), 3).unwrap();
        assert_eq!(plan.presentation_order.len(), 50);
        for id in &plan.repeat_ids {
            let n = plan.presentation_order.iter().filter(|s| &s.image_id == id).count();
            assert_eq!(n, 2);
        }
    }

    #[test]
    fn seeded_determinism() {
        assert_eq!(build_batch("b", &study(), &pool(), 9).unwrap(), build_batch("b", &study(), &pool(), 9).unwrap());
        assert_ne!(build_batch("b", &study(), &pool(), 9).unwrap(), build_batch("b", &study(), &pool(), 10).unwrap());
    }

    #[test]
    fn wrong_sizes_rejected() {
        assert!(matches!(build_batch("b", &study()[..39], &pool(), 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(build_batch("b", &study(), &pool()[..199], 1), Err(Error::InvalidArgument(_))));
        let mut skewed = pool();
        skewed[150].label = GoldLabel::High;
        assert!(matches!(build_batch("b", &study(), &skewed, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn many_batches_partition_ids() {
        let ids: Vec<String> = (0..120).map(|i| format!("i{i}")).collect();
        let plans = build_batches(&ids, &pool(), 4).unwrap();
        assert_eq!(plans.len(), 3);
        let mut all: Vec<String> = plans.iter().flat_map(|p| p.study_ids.clone()).collect();
        all.sort();
        let mut expected = ids.clone();
        expected.sort();
        assert_eq!(all, expected);
    }
}
