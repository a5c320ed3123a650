use super::{check_aligned, SurvivalRecord};
use crate::error::{Error, Result};
use crate::numcore::Scalar;

/// Harrell's concordance index.
///
/// A pair is comparable when the earlier time carries an event. Equal times
/// are comparable only if exactly one of the two has the event; that one is
/// treated as the earlier failure. Equal scores count one half.
pub fn concordance_index<T: Scalar>(scores: &[T], outcomes: &[SurvivalRecord]) -> Result<f64> {
    check_aligned(scores.len(), outcomes.len())?;
    let mut concordant = 0.0f64;
    let mut comparable = 0u64;
    for i in 0..outcomes.len() {
        let oi = &outcomes[i];
        if !oi.event {
            continue;
        }
        for (j, oj) in outcomes.iter().enumerate() {
            if i == j {
                continue;
            }
            let earlier = oi.time < oj.time || (oi.time == oj.time && !oj.event);
            if !earlier {
                continue;
            }
            comparable += 1;
            if scores[i] > scores[j] {
                concordant += 1.0;
            } else if scores[i] == scores[j] {
                concordant += 0.5;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(concordant / comparable as f64)
}
