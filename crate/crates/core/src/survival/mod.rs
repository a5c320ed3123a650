//! Cox partial likelihood, discrimination/calibration metrics and
//! nonparametric estimators. All functions are pure over their inputs.

mod brier;
mod concordance;
mod cox;
mod km;
mod logrank;
pub mod special;

use serde::{Deserialize, Serialize};

pub use brier::{breslow_baseline, brier_score, integrated_brier, trapezoid_mean, BaselineSurvival, BrierScore};
pub use concordance::concordance_index;
pub use cox::{cox_nll, cox_nll_with_grad};
pub use km::{kaplan_meier, KaplanMeier};
pub use logrank::{log_rank, LogRankTest};

use crate::error::{Error, Result};

/// One patient's follow-up: time in months and whether death was observed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub patient_id: String,
    pub time: f64,
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(patient_id: impl Into<String>, time: f64, event: bool) -> Result<Self> {
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::invalid(format!("survival time must be > 0, got {time}")));
        }
        Ok(SurvivalRecord {
            patient_id: patient_id.into(),
            time,
            event,
        })
    }
}

pub(crate) fn check_aligned(scores: usize, outcomes: usize) -> Result<()> {
    if scores != outcomes {
        return Err(Error::LengthMismatch(format!(
            "{scores} risk scores for {outcomes} survival records"
        )));
    }
    Ok(())
}

/// Records named `p0, p1, ...` from `(time, event)` pairs.
#[cfg(test)]
pub(crate) fn records(rows: &[(f64, bool)]) -> Vec<SurvivalRecord> {
    rows.iter()
        .enumerate()
        .map(|(i, &(t, e))| SurvivalRecord::new(format!("p{i}"), t, e).unwrap())
        .collect()
}

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn cohort() -> impl Strategy<Value = (Vec<SurvivalRecord>, Vec<f64>)> {
        (3usize..25).prop_flat_map(|n| {
            (
                proptest::collection::vec((1u32..40, any::<bool>()), n),
                proptest::collection::vec(-3.0f64..3.0, n),
            )
                .prop_map(|(rows, scores)| {
                    let mut recs: Vec<_> = rows
                        .iter()
                        .enumerate()
                        .map(|(i, &(t, e))| SurvivalRecord::new(format!("p{i}"), t as f64, e).unwrap())
                        .collect();
                    recs[0].event = true;
                    (recs, scores)
                })
        })
    }

    proptest! {
        #[test]
        fn cox_loss_is_shift_invariant((recs, scores) in cohort(), c in -5.0f64..5.0) {
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            let a = cox_nll(&scores, &recs).unwrap();
            let b = cox_nll(&shifted, &recs).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn negated_scores_flip_concordance((recs, scores) in cohort()) {
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            if let (Ok(c), Ok(d)) = (concordance_index(&scores, &recs), concordance_index(&neg, &recs)) {
                prop_assert!((c + d - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn km_is_non_increasing_from_one((recs, _) in cohort()) {
            let (km, _) = kaplan_meier(&recs);
            prop_assert_eq!(km.survival_at(0.0), 1.0);
            let mut prev = 1.0;
            for &s in &km.survival {
                prop_assert!(s <= prev);
                prev = s;
            }
        }

        #[test]
        fn metrics_do_not_mutate_inputs((recs, scores) in cohort()) {
            let (r0, s0) = (recs.clone(), scores.clone());
            let _ = cox_nll_with_grad(&scores, &recs);
            let _ = concordance_index(&scores, &recs);
            if let Ok(b) = breslow_baseline(&scores, &recs) {
                let _ = brier_score(&scores, &recs, &b, 10.0);
            }
            prop_assert_eq!(recs, r0);
            prop_assert_eq!(scores, s0);
        }
    }
}
