use serde::{Deserialize, Serialize};

use super::cox::time_groups;
use super::km::KaplanMeier;
use super::{check_aligned, SurvivalRecord};
use crate::error::{Error, Result};
use crate::numcore::Scalar;

/// Breslow estimate of the baseline cumulative hazard on the event-time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSurvival {
    pub times: Vec<f64>,
    pub cumulative_hazard: Vec<f64>,
}

impl BaselineSurvival {
    /// H0(t): step function, zero before the first event time.
    pub fn cumulative_hazard_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative_hazard[k - 1]
        }
    }

    /// S(t | h) = exp(-H0(t) · exp(h)).
    pub fn survival(&self, t: f64, log_risk: f64) -> f64 {
        (-self.cumulative_hazard_at(t) * log_risk.exp()).exp()
    }
}

/// `H0(t) = Σ_{t_k ≤ t} d_k / Σ_{j: t_j ≥ t_k} exp(h_j)`.
pub fn breslow_baseline<T: Scalar>(scores: &[T], outcomes: &[SurvivalRecord]) -> Result<BaselineSurvival> {
    check_aligned(scores.len(), outcomes.len())?;
    if !outcomes.iter().any(|r| r.event) {
        return Err(Error::NoEvents("Breslow baseline hazard"));
    }
    let groups = time_groups(outcomes);
    let mut risk = vec![0.0; groups.len()];
    let mut running = 0.0;
    for (g, (_, members)) in groups.iter().enumerate().rev() {
        for &i in members {
            running += scores[i].as_f64().exp();
        }
        risk[g] = running;
    }
    let mut out = BaselineSurvival {
        times: Vec::new(),
        cumulative_hazard: Vec::new(),
    };
    let mut h0 = 0.0;
    for (g, (t, members)) in groups.iter().enumerate() {
        let d = members.iter().filter(|&&i| outcomes[i].event).count();
        if d > 0 {
            h0 += d as f64 / risk[g];
            out.times.push(*t);
            out.cumulative_hazard.push(h0);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrierScore {
    pub value: f64,
    /// Patients dropped because the censoring survival was zero where needed.
    pub dropped: usize,
}

/// IPCW Brier score at `horizon`, with the censoring distribution estimated
/// by Kaplan–Meier on the same outcomes.
pub fn brier_score<T: Scalar>(
    scores: &[T],
    outcomes: &[SurvivalRecord],
    baseline: &BaselineSurvival,
    horizon: f64,
) -> Result<BrierScore> {
    check_aligned(scores.len(), outcomes.len())?;
    let max_time = outcomes.iter().map(|r| r.time).fold(f64::NEG_INFINITY, f64::max);
    if !(0.0..=max_time).contains(&horizon) {
        return Err(Error::invalid(format!(
            "Brier horizon {horizon} outside follow-up [0, {max_time}]"
        )));
    }
    let censoring = KaplanMeier::fit_with(outcomes, |r| !r.event);
    let g_horizon = censoring.survival_at(horizon);
    let mut total = 0.0;
    let mut used = 0usize;
    let mut dropped = 0usize;
    for (s, r) in scores.iter().zip(outcomes) {
        let surv = baseline.survival(horizon, s.as_f64());
        if r.time <= horizon {
            if r.event {
                let g = censoring.survival_before(r.time);
                if g <= 0.0 {
                    dropped += 1;
                    continue;
                }
                total += surv * surv / g;
            }
        } else {
            if g_horizon <= 0.0 {
                dropped += 1;
                continue;
            }
            total += (1.0 - surv) * (1.0 - surv) / g_horizon;
        }
        used += 1;
    }
    if dropped > 0 {
        log::warn!("brier score at {horizon}: dropped {dropped} patients with zero censoring weight");
    }
    if used == 0 {
        return Err(Error::Degenerate(format!("no usable patients for Brier at {horizon}")));
    }
    Ok(BrierScore {
        value: total / used as f64,
        dropped,
    })
}

/// Trapezoidal mean of `values` over `grid`: ∫ v dt / (last - first).
pub fn trapezoid_mean(grid: &[f64], values: &[f64]) -> Result<f64> {
    if grid.len() != values.len() || grid.len() < 2 {
        return Err(Error::invalid("trapezoid needs ≥ 2 aligned grid points"));
    }
    let mut area = 0.0;
    for k in 1..grid.len() {
        let dt = grid[k] - grid[k - 1];
        if dt < 0.0 {
            return Err(Error::invalid("trapezoid grid must be ascending"));
        }
        area += 0.5 * dt * (values[k] + values[k - 1]);
    }
    Ok(area / (grid[grid.len() - 1] - grid[0]))
}

/// Integrated Brier score over [0, τ] on the grid {0} ∪ event times ∪ {τ}.
pub fn integrated_brier<T: Scalar>(
    scores: &[T],
    outcomes: &[SurvivalRecord],
    baseline: &BaselineSurvival,
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::invalid("integrated Brier needs τ > 0"));
    }
    let mut grid = vec![0.0];
    let mut event_times: Vec<f64> = outcomes
        .iter()
        .filter(|r| r.event && r.time > 0.0 && r.time < tau)
        .map(|r| r.time)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    grid.extend(event_times);
    grid.push(tau);
    let values = grid
        .iter()
        .map(|&t| brier_score(scores, outcomes, baseline, t).map(|b| b.value))
        .collect::<Result<Vec<_>>>()?;
    trapezoid_mean(&grid, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::records;

    fn nelson_aalen(outcomes: &[SurvivalRecord]) -> Vec<(f64, f64)> {
        let mut times: Vec<f64> = outcomes.iter().filter(|r| r.event).map(|r| r.time).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut h = 0.0;
        times
            .into_iter()
            .map(|t| {
                let d = outcomes.iter().filter(|r| r.event && r.time == t).count() as f64;
                let n = outcomes.iter().filter(|r| r.time >= t).count() as f64;
                h += d / n;
                (t, h)
            })
            .collect()
    }

    #[test]
    fn single_event_unit_increment() {
        let out = records(&[(1.0, true), (2.0, false), (3.0, false), (4.0, false)]);
        let b = breslow_baseline(&[0.0; 4], &out).unwrap();
        assert_eq!(b.times, vec![1.0]);
        assert_eq!(b.cumulative_hazard, vec![0.25]);
    }

    #[test]
    fn zero_scores_reduce_to_nelson_aalen() {
        let out = records(&[
            (1.0, true),
            (2.0, false),
            (2.0, true),
            (3.5, true),
            (3.5, true),
            (4.0, false),
            (6.0, true),
        ]);
        let b = breslow_baseline(&[0.0; 7], &out).unwrap();
        let na = nelson_aalen(&out);
        assert_eq!(b.times.len(), na.len());
        for ((t, h), (tn, hn)) in b.times.iter().zip(&b.cumulative_hazard).zip(na) {
            assert_eq!(*t, tn);
            assert!((h - hn).abs() < 1e-15);
        }
    }

    #[test]
    fn shifting_scores_by_log2_halves_increments() {
        let out = records(&[(1.0, true), (2.0, true), (3.0, false), (4.0, true)]);
        let s = [0.1, -0.4, 0.9, 0.0];
        let shifted: Vec<f64> = s.iter().map(|x| x + 2f64.ln()).collect();
        let a = breslow_baseline(&s, &out).unwrap();
        let b = breslow_baseline(&shifted, &out).unwrap();
        for (x, y) in a.cumulative_hazard.iter().zip(&b.cumulative_hazard) {
            assert!((x / 2.0 - y).abs() < 1e-15);
        }
    }

    /// Baseline with a chosen H0 on a single jump so survival can be dialled in.
    fn step_baseline(t: f64, h0: f64) -> BaselineSurvival {
        BaselineSurvival {
            times: vec![t],
            cumulative_hazard: vec![h0],
        }
    }

    #[test]
    fn perfect_predictions_without_censoring_score_zero() {
        let out = records(&[(1.0, true), (2.0, true), (5.0, true), (6.0, true)]);
        // H0(3) large; scores -inf-ish for survivors, +large for early deaths.
        let baseline = step_baseline(1.0, 1.0);
        let scores = [50.0, 50.0, -800.0, -800.0];
        let b = brier_score(&scores, &out, &baseline, 3.0).unwrap();
        assert!(b.value < 1e-300);
        assert_eq!(b.dropped, 0);
    }

    #[test]
    fn coin_flip_predictions_without_censoring_score_quarter() {
        let out = records(&[(1.0, true), (2.0, true), (5.0, true), (6.0, true)]);
        let baseline = step_baseline(1.0, 2f64.ln());
        let b = brier_score(&[0.0; 4], &out, &baseline, 3.0).unwrap();
        assert!((b.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn no_censoring_equals_plain_mean_squared_error() {
        let out = records(&[(1.0, true), (2.5, true), (3.0, true), (7.0, true), (9.0, true)]);
        let scores = [0.5, -0.2, 0.1, -1.0, 0.3];
        let baseline = breslow_baseline(&scores, &out).unwrap();
        let t = 4.0;
        let mse: f64 = scores
            .iter()
            .zip(&out)
            .map(|(&s, r)| {
                let y = if r.time > t { 1.0 } else { 0.0 };
                (y - baseline.survival(t, s)).powi(2)
            })
            .sum::<f64>()
            / 5.0;
        let b = brier_score(&scores, &out, &baseline, t).unwrap();
        assert!((b.value - mse).abs() < 1e-15);
    }

    #[test]
    fn five_patients_one_censored_by_hand() {
        // times 1e 2c 3e 4e 6e, horizon 3.5, S(3.5|x) = 0.6 for everyone.
        // Censoring KM: jump at 2 only: G = 1 before 2, 3/4 after.
        //   p1 (1, event, ≤ t): 0.36 / G(1-) = 0.36
        //   p2 censored before t: 0
        //   p3 (3, event): 0.36 / G(3-) = 0.36 / 0.75 = 0.48
        //   p4, p5 alive at t: 0.16 / G(3.5) = 0.16 / 0.75
        // BS = (0.36 + 0.48 + 2*0.16/0.75) / 5
        let out = records(&[(1.0, true), (2.0, false), (3.0, true), (4.0, true), (6.0, true)]);
        let baseline = step_baseline(0.5, -(0.6f64.ln()));
        let b = brier_score(&[0.0; 5], &out, &baseline, 3.5).unwrap();
        let expected = (0.36 + 0.48 + 2.0 * 0.16 / 0.75) / 5.0;
        assert!((b.value - expected).abs() < 1e-14, "{} vs {expected}", b.value);
    }

    #[test]
    fn horizon_outside_follow_up_is_rejected() {
        let out = records(&[(1.0, true), (2.0, true)]);
        let baseline = step_baseline(1.0, 1.0);
        assert!(brier_score(&[0.0; 2], &out, &baseline, 5.0).is_err());
    }

    #[test]
    fn trapezoid_constant_and_three_point() {
        assert!((trapezoid_mean(&[0.0, 1.0, 4.0], &[0.2, 0.2, 0.2]).unwrap() - 0.2).abs() < 1e-16);
        // (0.5*1*(0+0.2) + 0.5*3*(0.2+0.1)) / 4 = (0.1 + 0.45) / 4
        let v = trapezoid_mean(&[0.0, 1.0, 4.0], &[0.0, 0.2, 0.1]).unwrap();
        assert!((v - 0.55 / 4.0).abs() < 1e-16);
    }

    #[test]
    fn integrated_brier_of_perfect_model_is_zero() {
        // H0 jumps by 100 orders of magnitude per event time; each patient's
        // score puts H0·exp(h) at 1e50 at their own death and 1e-50 before it.
        let out = records(&[(1.0, true), (2.0, true), (5.0, true), (6.0, true)]);
        let baseline = BaselineSurvival {
            times: vec![1.0, 2.0, 5.0, 6.0],
            cumulative_hazard: vec![1e-200, 1e-100, 1.0, 1e100],
        };
        let ln10 = 10f64.ln();
        let scores = [250.0 * ln10, 150.0 * ln10, 50.0 * ln10, -50.0 * ln10];
        let ibs = integrated_brier(&scores, &out, &baseline, 6.0).unwrap();
        assert!(ibs < 1e-90, "{ibs}");
    }
}
