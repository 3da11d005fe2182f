//! Rating-log, MOS and reliability file formats.

use std::collections::BTreeSet;
use std::path::Path;

use super::{MosRecord, RaterReport, RatingRecord, SlotRole, MAX_SCORE, MIN_SCORE};
use crate::error::{Error, Result};
use crate::util::atomic_write;

const LOG_HEADER: [&str; 7] = ["rater_id", "batch_id", "image_id", "slot_index", "slot_role", "score", "timestamp"];

fn row_error(line: u64, msg: impl std::fmt::Display) -> Error {
    Error::Input(format!("rating log line {line}: {msg}"))
}

/// Parses a rating log. Any malformed row fails with its 1-based line number.
pub fn parse_rating_log(text: &str) -> Result<Vec<RatingRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| row_error(1, e))?.clone();
    if header.iter().collect::<Vec<_>>() != LOG_HEADER {
        return Err(row_error(1, format!("expected header {}", LOG_HEADER.join(","))));
    }
    let mut out = Vec::new();
    let mut slots = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            row_error(line, e)
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != LOG_HEADER.len() {
            return Err(row_error(line, format!("expected {} fields, got {}", LOG_HEADER.len(), rec.len())));
        }
        let slot_index: u32 = rec[3].parse().map_err(|_| row_error(line, format!("bad slot_index {:?}", &rec[3])))?;
        let slot_role = SlotRole::parse(&rec[4]).ok_or_else(|| row_error(line, format!("unknown slot_role {:?}", &rec[4])))?;
        let score: f64 = rec[5].parse().map_err(|_| row_error(line, format!("bad score {:?}", &rec[5])))?;
        if !(MIN_SCORE..=MAX_SCORE).contains(&score) {
            return Err(row_error(line, format!("score {score} outside [{MIN_SCORE}, {MAX_SCORE}]")));
        }
        let timestamp: f64 = rec[6].parse().map_err(|_| row_error(line, format!("bad timestamp {:?}", &rec[6])))?;
        if !slots.insert((rec[0].to_string(), rec[1].to_string(), slot_index)) {
            return Err(row_error(line, format!("slot {slot_index} rated twice by {} in {}", &rec[0], &rec[1])));
        }
        out.push(RatingRecord {
            rater_id: rec[0].to_string(),
            batch_id: rec[1].to_string(),
            image_id: rec[2].to_string(),
            slot_index,
            slot_role,
            score,
            timestamp,
        });
    }
    Ok(out)
}

pub fn read_rating_log(path: &Path) -> Result<Vec<RatingRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    parse_rating_log(&text)
}

pub fn mos_csv(records: &[MosRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["image_id", "mos", "ratings_used", "ratings_removed", "std_all"])
        .map_err(|e| Error::Input(e.to_string()))?;
    for r in records {
        w.write_record([
            r.image_id.clone(),
            r.mos.to_string(),
            r.ratings_used.to_string(),
            r.ratings_removed.to_string(),
            r.std_all.to_string(),
        ])
        .map_err(|e| Error::Input(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Input(e.to_string()))
}

pub fn write_mos_csv(path: &Path, records: &[MosRecord]) -> Result<()> {
    atomic_write(path, &mos_csv(records)?)?;
    Ok(())
}

/// Reads `image_id,mos[,...]` rows; extra columns are ignored.
pub fn read_mos_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mos = rec
            .get(1)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Input(format!("{} line {line}: bad mos", path.display())))?;
        out.push((rec[0].to_string(), mos));
    }
    Ok(out)
}

pub fn write_reliability_json(path: &Path, reports: &[RaterReport]) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(reports).map_err(|e| Error::Input(e.to_string()))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "rater_id,batch_id,image_id,slot_index,slot_role,score,timestamp\n";

    #[test]
    fn parses_rows() {
        let text = format!("{HEAD}r1,b1,i1,0,study,0.5,12.0\nr1,b1,g1,1,gold_low,0.2,13.5\n");
        let recs = parse_rating_log(&text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].slot_role, SlotRole::GoldLow);
    }

    #[test]
    fn bad_row_names_its_line() {
        let text = format!("{HEAD}r1,b1,i1,0,study,0.5,12.0\nr1,b1,i2,1,study,abc,13.0\n");
        let err = parse_rating_log(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn duplicate_slot_rejected() {
        let text = format!("{HEAD}r1,b1,i1,0,study,0.5,1\nr1,b1,i2,0,study,0.6,2\n");
        assert!(parse_rating_log(&text).is_err());
    }

    #[test]
    fn score_out_of_range() {
        let text = format!("{HEAD}r1,b1,i1,0,study,0.0,1\n");
        assert!(matches!(parse_rating_log(&text), Err(Error::Input(_))));
    }
}
