use super::{check_aligned, SurvivalRecord};
use crate::error::{Error, Result};
use crate::numcore::Scalar;

/// Distinct times in ascending order with the indices observed at each.
pub(crate) fn time_groups(outcomes: &[SurvivalRecord]) -> Vec<(f64, Vec<usize>)> {
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| outcomes[a].time.total_cmp(&outcomes[b].time));
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some((t, members)) if *t == outcomes[i].time => members.push(i),
            _ => groups.push((outcomes[i].time, vec![i])),
        }
    }
    groups
}

/// Negative log Cox partial likelihood (Breslow ties).
pub fn cox_nll<T: Scalar>(scores: &[T], outcomes: &[SurvivalRecord]) -> Result<T> {
    cox_nll_with_grad(scores, outcomes).map(|(loss, _)| loss)
}

/// Loss and its gradient with respect to every score.
///
/// `L = -Σ_{i: event} [h_i - log Σ_{j: t_j ≥ t_i} exp(h_j)]`
/// `∂L/∂h_k = -δ_k + exp(h_k) Σ_{i: event, t_i ≤ t_k} 1 / R_i`
pub fn cox_nll_with_grad<T: Scalar>(scores: &[T], outcomes: &[SurvivalRecord]) -> Result<(T, Vec<T>)> {
    check_aligned(scores.len(), outcomes.len())?;
    if !outcomes.iter().any(|r| r.event) {
        return Err(Error::NoEvents("Cox partial likelihood"));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("risk score {i}")));
    }
    let shift = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let groups = time_groups(outcomes);

    // Risk-set sums (shifted) per distinct time, latest first.
    let mut risk = vec![T::zero(); groups.len()];
    let mut running = T::zero();
    for (g, (_, members)) in groups.iter().enumerate().rev() {
        for &i in members {
            running = running + (scores[i] - shift).exp();
        }
        risk[g] = running;
    }

    let mut loss = T::zero();
    let mut grad = vec![T::zero(); scores.len()];
    let mut inv_acc = T::zero();
    for (g, (_, members)) in groups.iter().enumerate() {
        let log_risk = risk[g].ln() + shift;
        for &i in members {
            if outcomes[i].event {
                loss = loss + log_risk - scores[i];
                inv_acc = inv_acc + T::one() / risk[g];
            }
        }
        for &i in members {
            let ev = if outcomes[i].event { T::one() } else { T::zero() };
            grad[i] = (scores[i] - shift).exp() * inv_acc - ev;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::records;

    #[test]
    fn two_patients_expand_by_hand() {
        let out = records(&[(1.0, true), (2.0, true)]);
        let (h1, h2) = (0.3f64, -0.7f64);
        let expected = -(h1 - (h1.exp() + h2.exp()).ln()) - (h2 - h2.exp().ln());
        let got = cox_nll(&[h1, h2], &out).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn equal_scores_sum_log_risk_set_sizes() {
        let n = 7;
        let out = records(&(1..=n).map(|t| (t as f64, true)).collect::<Vec<_>>());
        let expected: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
        let got = cox_nll(&vec![0.4; n], &out).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let out = records(&[
            (2.0, true),
            (1.0, false),
            (3.0, true),
            (2.0, true),
            (5.0, false),
            (4.0, true),
        ]);
        let h: Vec<f64> = vec![0.2, -1.1, 0.7, 0.05, -0.3, 1.4];
        let (_, grad) = cox_nll_with_grad(&h, &out).unwrap();
        let step = 1e-6;
        for k in 0..h.len() {
            let mut up = h.clone();
            let mut dn = h.clone();
            up[k] += step;
            dn[k] -= step;
            let fd = (cox_nll(&up, &out).unwrap() - cox_nll(&dn, &out).unwrap()) / (2.0 * step);
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-12);
            assert!(rel < 1e-6, "k={k} fd={fd} analytic={}", grad[k]);
        }
    }

    #[test]
    fn zero_events_is_an_error() {
        let out = records(&[(1.0, false), (2.0, false)]);
        assert!(matches!(cox_nll(&[0.0, 0.0], &out), Err(Error::NoEvents(_))));
    }
}
