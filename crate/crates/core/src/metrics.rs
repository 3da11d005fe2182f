//! Evaluation statistics: Spearman rank correlation, Pearson linear
//! correlation and root mean square error.

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64], min_len: usize, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "{what}: length mismatch ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < min_len {
        return Err(Error::UndefinedStatistic(format!(
            "{what} needs at least {min_len} pairs, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what}: non-finite value")));
    }
    Ok(())
}

/// 1-based ranks; tied values share the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson linear correlation coefficient.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2, "PLCC")?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedStatistic("PLCC of a zero-variance vector".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn srcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2, "SRCC")?;
    plcc(&average_ranks(a), &average_ranks(b)).map_err(|_| Error::UndefinedStatistic("SRCC with zero rank variance".into()))
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 1, "RMSE")?;
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sq / a.len() as f64).sqrt())
}

/// The three statistics reported for a prediction set.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scores {
    pub srcc: f64,
    pub plcc: f64,
    pub rmse: f64,
}

/// Scores predictions against labels. Correlations that are undefined
/// (constant predictions) are reported as NaN rather than failing the run.
pub fn score(predictions: &[f64], labels: &[f64]) -> Result<Scores> {
    Ok(Scores {
        srcc: srcc(predictions, labels).or_else(nan_if_undefined)?,
        plcc: plcc(predictions, labels).or_else(nan_if_undefined)?,
        rmse: rmse(predictions, labels)?,
    })
}

fn nan_if_undefined(e: Error) -> Result<f64> {
    match e {
        Error::UndefinedStatistic(_) => Ok(f64::NAN),
        other => Err(other),
    }
}
