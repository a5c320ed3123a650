//! Paired bootstrap comparisons of global InterSHAP, rank correlation, and
//! survival comparisons of patients grouped by a per-patient score.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::json;
use crate::error::{Error, Result};
use crate::intershap::{aggregate_percent, PatientShare};
use crate::numcore::rng;
use crate::survival::{kaplan_meier, log_rank, KaplanMeier, LogRankTest, SurvivalRecord};

pub const MIN_BOOTSTRAP_ITERATIONS: usize = 100;
pub const DEFAULT_BOOTSTRAP_ITERATIONS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Global InterSHAP of A minus that of B on the full patient set.
    #[serde(serialize_with = "json::serialize")]
    pub estimate: f64,
    #[serde(serialize_with = "json::serialize")]
    pub ci_low: f64,
    #[serde(serialize_with = "json::serialize")]
    pub ci_high: f64,
    pub iterations: usize,
    pub seed: u64,
    #[serde(serialize_with = "json::serialize")]
    pub p_value: f64,
}

impl BootstrapResult {
    pub fn ci_contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

/// Linear interpolation between order statistics of a sorted sample.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn aggregate(shares: &[PatientShare], what: &str) -> Result<f64> {
    aggregate_percent(shares).ok_or_else(|| Error::Degenerate(format!("every patient of {what} has a zero denominator")))
}

/// Paired patient bootstrap of the difference in global InterSHAP, A − B.
///
/// Each replicate draws `n` patients with replacement from its own stream and
/// applies the same draw to both models.
pub fn bootstrap_diff(a: &[PatientShare], b: &[PatientShare], iterations: usize, seed: u64) -> Result<BootstrapResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!(
            "paired bootstrap needs aligned patients: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("bootstrap needs at least one patient"));
    }
    if iterations < MIN_BOOTSTRAP_ITERATIONS {
        return Err(Error::invalid(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_ITERATIONS} iterations, got {iterations}"
        )));
    }
    let n = a.len();
    let estimate = aggregate(a, "A")? - aggregate(b, "B")?;
    let mut diffs: Vec<f64> = (0..iterations)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, &[rng::domain::BOOTSTRAP, r as u64]);
            let mut ra = Vec::with_capacity(n);
            let mut rb = Vec::with_capacity(n);
            for _ in 0..n {
                let i = g.random_range(0..n);
                ra.push(a[i]);
                rb.push(b[i]);
            }
            Ok(aggregate(&ra, "A")? - aggregate(&rb, "B")?)
        })
        .collect::<Result<_>>()?;
    let below = diffs.iter().filter(|&&d| d <= 0.0).count() as f64 / iterations as f64;
    let above = diffs.iter().filter(|&&d| d >= 0.0).count() as f64 / iterations as f64;
    diffs.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        estimate,
        ci_low: percentile(&diffs, 0.025),
        ci_high: percentile(&diffs, 0.975),
        iterations,
        seed,
        p_value: (2.0 * below.min(above)).min(1.0),
    })
}

/// 1-based ranks, ties sharing the average of the positions they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && x[order[end]] == x[order[k]] {
            end += 1;
        }
        let rank = (k + end + 1) as f64 / 2.0;
        for &i in &order[k..end] {
            ranks[i] = rank;
        }
        k = end;
    }
    ranks
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!("spearman over {} and {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::invalid(format!("spearman needs at least 3 pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let mean = (x.len() + 1) as f64 / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("spearman is undefined for a constant input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSurvival {
    pub size: usize,
    pub events: usize,
    pub curve: KaplanMeier,
    pub median: Option<f64>,
}

impl GroupSurvival {
    fn fit(outcomes: Vec<SurvivalRecord>) -> Self {
        let (curve, median) = kaplan_meier(&outcomes);
        GroupSurvival {
            size: outcomes.len(),
            events: outcomes.iter().filter(|r| r.event).count(),
            curve,
            median,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianSplit {
    #[serde(serialize_with = "json::serialize")]
    pub threshold: f64,
    /// Values at or below the threshold.
    pub low: GroupSurvival,
    pub high: GroupSurvival,
    pub log_rank: LogRankTest,
}

fn check_inputs(values: &[f64], outcomes: &[SurvivalRecord], min: usize) -> Result<()> {
    if values.len() != outcomes.len() {
        return Err(Error::LengthMismatch(format!(
            "{} values for {} survival records",
            values.len(),
            outcomes.len()
        )));
    }
    if values.len() < min {
        return Err(Error::invalid(format!("need at least {min} patients, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("per-patient values".into()));
    }
    Ok(())
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Splits patients at the median value (ties go low) and compares the two
/// groups' survival.
pub fn median_split_survival(values: &[f64], outcomes: &[SurvivalRecord]) -> Result<MedianSplit> {
    check_inputs(values, outcomes, 4)?;
    let threshold = percentile(&sorted(values), 0.5);
    let (low, high): (Vec<_>, Vec<_>) = values.iter().zip(outcomes).partition(|(&v, _)| v <= threshold);
    if high.is_empty() {
        return Err(Error::Degenerate(format!("no value lies above the median {threshold}")));
    }
    let low: Vec<SurvivalRecord> = low.into_iter().map(|(_, r)| r.clone()).collect();
    let high: Vec<SurvivalRecord> = high.into_iter().map(|(_, r)| r.clone()).collect();
    let log_rank = log_rank(&high, &low)?;
    Ok(MedianSplit {
        threshold,
        low: GroupSurvival::fit(low),
        high: GroupSurvival::fit(high),
        log_rank,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuartileTrend {
    /// Upper bounds of the first three quartile buckets.
    #[serde(serialize_with = "json::vec::serialize")]
    pub cutpoints: Vec<f64>,
    pub quartiles: Vec<GroupSurvival>,
    /// Medians are non-increasing from the lowest to the highest quartile,
    /// ignoring quartiles whose curve never reaches one half.
    pub monotone_non_increasing: bool,
    pub undefined_medians: usize,
}

/// Kaplan–Meier median survival per value quartile.
pub fn quartile_trend(values: &[f64], outcomes: &[SurvivalRecord]) -> Result<QuartileTrend> {
    check_inputs(values, outcomes, 8)?;
    let s = sorted(values);
    let cutpoints: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|&q| percentile(&s, q)).collect();
    let mut buckets: Vec<Vec<SurvivalRecord>> = vec![Vec::new(); 4];
    for (&v, r) in values.iter().zip(outcomes) {
        buckets[cutpoints.iter().filter(|&&c| v > c).count()].push(r.clone());
    }
    if let Some(q) = buckets.iter().position(Vec::is_empty) {
        return Err(Error::Degenerate(format!("quartile {} is empty; cutpoints {cutpoints:?} coincide", q + 1)));
    }
    let quartiles: Vec<GroupSurvival> = buckets.into_iter().map(GroupSurvival::fit).collect();
    let medians: Vec<f64> = quartiles.iter().filter_map(|q| q.median).collect();
    Ok(QuartileTrend {
        cutpoints,
        monotone_non_increasing: medians.windows(2).all(|w| w[1] <= w[0]),
        undefined_medians: quartiles.len() - medians.len(),
        quartiles,
    })
}
