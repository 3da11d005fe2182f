use crate::error::{Error, Result};

/// Maps a 5-point absolute category rating onto the slider range:
/// `(category − 1) / 4 × 0.99 + 0.01`.
pub fn map_acr(category: u8) -> Result<f64> {
    if !(1..=5).contains(&category) {
        return Err(Error::InvalidArgument(format!(
            "ACR category must be in 1..=5, got {category}"
        )));
    }
    // Same affine map written over a common denominator so the result is a
    // single correctly rounded division: (99·(c − 1) + 4) / 400.
    Ok(f64::from(99 * u32::from(category - 1) + 4) / 400.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateOutcome {
    pub pass: bool,
    /// The accepted range, shown to the rater when the answer falls outside.
    pub suggestion: Option<(f64, f64)>,
}

/// Training-session check: the answer passes when it lies inside the
/// inclusive range `[lo, hi]`.
pub fn training_gate(answer: f64, lo: f64, hi: f64) -> GateOutcome {
    debug_assert!(lo <= hi, "gate range is inverted");
    let pass = lo <= answer && answer <= hi;
    GateOutcome {
        pass,
        suggestion: (!pass).then_some((lo, hi)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slider_values() {
        let got: Vec<f64> = (1..=5).map(|c| map_acr(c).unwrap()).collect();
        assert_eq!(got, vec![0.01, 0.2575, 0.505, 0.7525, 1.0]);
    }

    #[test]
    fn strictly_increasing() {
        for c in 1..5 {
            assert!(map_acr(c).unwrap() < map_acr(c + 1).unwrap());
        }
    }

    #[test]
    fn out_of_range_category() {
        assert!(matches!(map_acr(0), Err(Error::InvalidArgument(_))));
        assert!(matches!(map_acr(6), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn gate() {
        assert!(training_gate(0.7, 0.6, 0.9).pass);
        let fail = training_gate(0.2, 0.6, 0.9);
        assert!(!fail.pass);
        assert_eq!(fail.suggestion, Some((0.6, 0.9)));
        assert!(training_gate(0.6, 0.6, 0.9).pass);
        assert!(training_gate(0.9, 0.6, 0.9).pass);
    }
}
