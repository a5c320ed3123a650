use super::decompose::ShapleyDecomposition;
use crate::error::{Error, Result};
use crate::numcore::Scalar;

/// Patients whose `Σ|mains| + Σ|interactions|` falls below this are left out
/// of the aggregate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// One patient's share of the aggregate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatientShare {
    /// `Σ |interaction terms|`.
    pub numerator: f64,
    /// `Σ |mains| + Σ |interaction terms|`.
    pub denominator: f64,
}

impl PatientShare {
    pub fn is_degenerate(&self) -> bool {
        self.denominator < DEGENERATE_DENOMINATOR
    }

    pub fn percent(&self) -> Option<f64> {
        (!self.is_degenerate()).then(|| 100.0 * self.numerator / self.denominator)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalInterShap {
    pub interaction_percent: f64,
    /// One entry per modality, same order as the decomposition.
    pub contribution_percents: Vec<f64>,
    pub included_patients: usize,
    pub degenerate_patients: usize,
    pub shares: Vec<PatientShare>,
}

pub fn patient_shares<T: Scalar>(decomp: &ShapleyDecomposition<T>) -> Vec<PatientShare> {
    decomp
        .mains
        .iter()
        .zip(&decomp.interactions)
        .map(|(mains, inter)| {
            let numerator: f64 = inter.iter().map(|x| x.as_f64().abs()).sum();
            let mains: f64 = mains.iter().map(|x| x.as_f64().abs()).sum();
            PatientShare {
                numerator,
                denominator: mains + numerator,
            }
        })
        .collect()
}

/// Ratio-of-sums interaction percentage over non-degenerate shares.
pub fn aggregate_percent(shares: &[PatientShare]) -> Option<f64> {
    let (num, den) = shares
        .iter()
        .filter(|s| !s.is_degenerate())
        .fold((0.0, 0.0), |(n, d), s| (n + s.numerator, d + s.denominator));
    (den > 0.0).then(|| 100.0 * num / den)
}

/// Global interaction percentage and per-modality contribution percentages.
pub fn global_intershap<T: Scalar>(decomp: &ShapleyDecomposition<T>) -> Result<GlobalInterShap> {
    if decomp.patients() == 0 {
        return Err(Error::invalid("global InterSHAP needs at least one patient"));
    }
    let shares = patient_shares(decomp);
    let m = decomp.modality_names.len();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut mains = vec![0.0; m];
    let mut included = 0;
    for (p, s) in shares.iter().enumerate() {
        if s.is_degenerate() {
            continue;
        }
        included += 1;
        num += s.numerator;
        den += s.denominator;
        for (acc, x) in mains.iter_mut().zip(&decomp.mains[p]) {
            *acc += x.as_f64().abs();
        }
    }
    if included == 0 {
        return Err(Error::Degenerate(format!(
            "all {} patients have a decomposition magnitude below {DEGENERATE_DENOMINATOR:e}",
            shares.len()
        )));
    }
    Ok(GlobalInterShap {
        interaction_percent: 100.0 * num / den,
        contribution_percents: mains.into_iter().map(|x| 100.0 * x / den).collect(),
        included_patients: included,
        degenerate_patients: shares.len() - included,
        shares,
    })
}
