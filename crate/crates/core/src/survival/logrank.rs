use serde::{Deserialize, Serialize};

use super::special::chi_square_sf;
use super::SurvivalRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRankTest {
    pub statistic: f64,
    pub p_value: f64,
    pub observed_a: f64,
    pub expected_a: f64,
    pub variance: f64,
}

/// Two-group log-rank test with hypergeometric variance, 1 df.
pub fn log_rank(group_a: &[SurvivalRecord], group_b: &[SurvivalRecord]) -> Result<LogRankTest> {
    if !group_a.iter().any(|r| r.event) || !group_b.iter().any(|r| r.event) {
        return Err(Error::NoEvents("log-rank test"));
    }
    let mut pooled: Vec<(f64, bool, bool)> = group_a
        .iter()
        .map(|r| (r.time, r.event, true))
        .chain(group_b.iter().map(|r| (r.time, r.event, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut n_a = group_a.len() as f64;
    let mut n = pooled.len() as f64;
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    let mut k = 0;
    while k < pooled.len() {
        let t = pooled[k].0;
        let (mut d, mut d_a, mut leave, mut leave_a) = (0.0, 0.0, 0.0, 0.0);
        while k < pooled.len() && pooled[k].0 == t {
            let (_, event, in_a) = pooled[k];
            if event {
                d += 1.0;
                if in_a {
                    d_a += 1.0;
                }
            }
            leave += 1.0;
            if in_a {
                leave_a += 1.0;
            }
            k += 1;
        }
        if d > 0.0 {
            observed += d_a;
            expected += d * n_a / n;
            if n > 1.0 {
                variance += d * (n_a / n) * (1.0 - n_a / n) * (n - d) / (n - 1.0);
            }
        }
        n -= leave;
        n_a -= leave_a;
    }
    let statistic = if variance > 0.0 {
        (observed - expected).powi(2) / variance
    } else {
        0.0
    };
    Ok(LogRankTest {
        statistic,
        p_value: chi_square_sf(statistic, 1.0),
        observed_a: observed,
        expected_a: expected,
        variance,
    })
}
