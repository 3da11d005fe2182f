use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{MosRecord, RatingRecord, SlotRole};
use crate::error::{Error, Result};
use crate::metrics::{plcc, srcc};

/// Inclusive band a rating must fall in to count as correct on a gold image.
pub const GOLD_LOW_BAND: (f64, f64) = (0.01, 0.35);
pub const GOLD_HIGH_BAND: (f64, f64) = (0.65, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterReport {
    pub rater_id: String,
    pub gold_accuracy: Option<f64>,
    /// `None` when the rater has too few repeat pairs or no rank variance.
    pub self_srcc: Option<f64>,
    pub plcc_vs_mos: Option<f64>,
    pub batches_completed: usize,
}

pub fn is_gold_correct(role: SlotRole, score: f64) -> Result<bool> {
    let (lo, hi) = match role {
        SlotRole::GoldHigh => GOLD_HIGH_BAND,
        SlotRole::GoldLow => GOLD_LOW_BAND,
        other => {
            return Err(Error::InvalidArgument(format!(
                "slot role {} is not a gold slot",
                other.as_str()
            )))
        }
    };
    Ok(lo <= score && score <= hi)
}

/// Fraction of gold ratings inside their label's band. Duplicate gold
/// presentations each count as a trial.
pub fn gold_accuracy(records: &[RatingRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedStatistic("no gold ratings".into()));
    }
    let mut correct = 0usize;
    for r in records {
        if is_gold_correct(r.slot_role, r.score)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len() as f64)
}

/// Spearman correlation between first and second ratings of repeated images.
pub fn self_consistency(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::UndefinedStatistic(format!(
            "self-consistency needs at least 2 repeat pairs, got {}",
            pairs.len()
        )));
    }
    let (first, second): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    srcc(&first, &second)
}

/// Pearson correlation between one rater's scores and the MOS table over the
/// images both contain.
pub fn rater_plcc(rater_scores: &BTreeMap<String, f64>, mos: &BTreeMap<String, f64>) -> Result<f64> {
    let (a, b): (Vec<f64>, Vec<f64>) = rater_scores
        .iter()
        .filter_map(|(id, s)| mos.get(id).map(|m| (*s, *m)))
        .unzip();
    if a.len() < 2 {
        return Err(Error::UndefinedStatistic(format!(
            "rater shares {} images with the MOS table",
            a.len()
        )));
    }
    plcc(&a, &b)
}

fn defined(v: Result<f64>) -> Result<Option<f64>> {
    match v {
        Ok(x) => Ok(Some(x)),
        Err(Error::UndefinedStatistic(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Reliability report per rater, sorted by rater id. The MOS reference is the
/// screened table; a rater's repeated images are averaged before correlating.
pub fn rater_reports(records: &[RatingRecord], mos: &[MosRecord]) -> Result<Vec<RaterReport>> {
    let mos_table: BTreeMap<String, f64> = mos.iter().map(|m| (m.image_id.clone(), m.mos)).collect();
    let mut by_rater: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in records {
        by_rater.entry(r.rater_id.as_str()).or_default().push(r);
    }

    let mut out = Vec::with_capacity(by_rater.len());
    for (rater, recs) in by_rater {
        let gold: Vec<RatingRecord> = recs.iter().filter(|r| r.slot_role.is_gold()).map(|r| (*r).clone()).collect();
        let batches: BTreeSet<&str> = recs.iter().map(|r| r.batch_id.as_str()).collect();

        let mut repeats: BTreeMap<(&str, &str), (Option<f64>, Option<f64>)> = BTreeMap::new();
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in &recs {
            match r.slot_role {
                SlotRole::RepeatFirst => repeats.entry((&r.batch_id, &r.image_id)).or_default().0 = Some(r.score),
                SlotRole::RepeatSecond => repeats.entry((&r.batch_id, &r.image_id)).or_default().1 = Some(r.score),
                _ => {}
            }
            if !r.slot_role.is_gold() {
                let e = sums.entry(r.image_id.clone()).or_insert((0.0, 0));
                e.0 += r.score;
                e.1 += 1;
            }
        }
        let pairs: Vec<(f64, f64)> = repeats
            .values()
            .filter_map(|&(a, b)| Some((a?, b?)))
            .collect();
        let per_image: BTreeMap<String, f64> = sums.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect();

        out.push(RaterReport {
            rater_id: rater.to_string(),
            gold_accuracy: defined(gold_accuracy(&gold))?,
            self_srcc: defined(self_consistency(&pairs))?,
            plcc_vs_mos: defined(rater_plcc(&per_image, &mos_table))?,
            batches_completed: batches.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gold(role: SlotRole, score: f64) -> RatingRecord {
        RatingRecord {
            rater_id: "r".into(),
            batch_id: "b".into(),
            image_id: "g".into(),
            slot_index: 0,
            slot_role: role,
            score,
            timestamp: 0.0,
        }
    }

    #[test]
    fn gold_bands() {
        assert!(is_gold_correct(SlotRole::GoldLow, 0.30).unwrap());
        assert!(!is_gold_correct(SlotRole::GoldHigh, 0.50).unwrap());
        assert!(is_gold_correct(SlotRole::GoldLow, 0.35).unwrap());
        assert!(is_gold_correct(SlotRole::GoldHigh, 0.65).unwrap());
        assert!(is_gold_correct(SlotRole::Study, 0.5).is_err());
    }

    #[test]
    fn accuracy_counts() {
        let recs = vec![gold(SlotRole::GoldLow, 0.3), gold(SlotRole::GoldHigh, 0.5), gold(SlotRole::GoldHigh, 0.9), gold(SlotRole::GoldLow, 0.9)];
        assert_eq!(gold_accuracy(&recs).unwrap(), 0.5);
        assert!(matches!(gold_accuracy(&[]), Err(Error::UndefinedStatistic(_))));
    }

    #[test]
    fn consistency_extremes() {
        let same = [(0.1, 0.1), (0.5, 0.5), (0.9, 0.9)];
        assert!((self_consistency(&same).unwrap() - 1.0).abs() < 1e-15);
        let rev = [(0.1, 0.9), (0.5, 0.5), (0.9, 0.1)];
        assert!((self_consistency(&rev).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(self_consistency(&[(0.1, 0.2)]), Err(Error::UndefinedStatistic(_))));
    }

    #[test]
    fn plcc_affine() {
        let mos: BTreeMap<String, f64> = [("a", 0.2), ("b", 0.5), ("c", 0.9)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let rater: BTreeMap<String, f64> = mos.iter().map(|(k, v)| (k.clone(), 0.5 * v + 0.1)).collect();
        assert!((rater_plcc(&rater, &mos).unwrap() - 1.0).abs() < 1e-12);
    }
}
