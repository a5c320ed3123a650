use serde::{Deserialize, Serialize};

use super::SurvivalRecord;

/// Product-limit survival curve. `survival[k]` holds S(t) for
/// `times[k] <= t < times[k+1]`; S(t) = 1 before the first time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeier {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl KaplanMeier {
    /// Fits the curve treating `is_event(record)` as the failure indicator.
    pub(crate) fn fit_with(outcomes: &[SurvivalRecord], is_event: impl Fn(&SurvivalRecord) -> bool) -> Self {
        let mut sorted: Vec<(f64, bool)> = outcomes.iter().map(|r| (r.time, is_event(r))).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut km = KaplanMeier {
            times: Vec::new(),
            survival: Vec::new(),
            at_risk: Vec::new(),
            events: Vec::new(),
        };
        let mut s = 1.0;
        let mut remaining = sorted.len();
        let mut k = 0;
        while k < sorted.len() {
            let t = sorted[k].0;
            let mut d = 0;
            let mut m = 0;
            while k < sorted.len() && sorted[k].0 == t {
                d += usize::from(sorted[k].1);
                m += 1;
                k += 1;
            }
            if d > 0 {
                s *= 1.0 - d as f64 / remaining as f64;
                km.times.push(t);
                km.survival.push(s);
                km.at_risk.push(remaining);
                km.events.push(d);
            }
            remaining -= m;
        }
        km
    }

    pub fn fit(outcomes: &[SurvivalRecord]) -> Self {
        Self::fit_with(outcomes, |r| r.event)
    }

    /// S(t), right-continuous.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// S(t⁻): only jumps strictly before `t` count.
    pub fn survival_before(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x < t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// Earliest time with S(t) ≤ 0.5, if the curve gets there.
    pub fn median(&self) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.survival)
            .find(|(_, &s)| s <= 0.5)
            .map(|(&t, _)| t)
    }
}

/// Product-limit estimate and its median.
pub fn kaplan_meier(outcomes: &[SurvivalRecord]) -> (KaplanMeier, Option<f64>) {
    let km = KaplanMeier::fit(outcomes);
    let median = km.median();
    (km, median)
}
