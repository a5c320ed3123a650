use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::table::{check_modality_count, subset_label, CoalitionTable};
use crate::error::{Error, Result};
use crate::numcore::Scalar;

/// How main effects and interaction terms are read off a coalition table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Two-modality Shapley values with the halved interaction term.
    PaperEqs,
    /// Mains `m({i})` and interactions `m(S)`, `|S| ≥ 2`, of the Möbius transform.
    Moebius,
}

impl Convention {
    pub fn as_str(self) -> &'static str {
        match self {
            Convention::PaperEqs => "paper-eqs",
            Convention::Moebius => "moebius",
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-eqs" => Ok(Convention::PaperEqs),
            "moebius" => Ok(Convention::Moebius),
            _ => Err(Error::invalid(format!("unknown convention `{s}` (moebius | paper-eqs)"))),
        }
    }
}

/// Per-patient main effects and interaction terms.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapleyDecomposition<T = f64> {
    pub convention: Convention,
    pub modality_names: Vec<String>,
    pub patient_ids: Vec<String>,
    /// Subset mask of each interaction column.
    pub interaction_subsets: Vec<usize>,
    pub interaction_labels: Vec<String>,
    /// `mains[p][i]`.
    pub mains: Vec<Vec<T>>,
    /// `interactions[p][k]`, columns as in `interaction_subsets`.
    pub interactions: Vec<Vec<T>>,
    /// `v(full) − v(∅)` per patient.
    pub totals: Vec<T>,
    /// What the terms leave unexplained of `totals`: `Σ mains` for
    /// paper-eqs, `Σ mains + Σ interactions` for moebius.
    pub residuals: Vec<T>,
}

impl<T: Scalar> ShapleyDecomposition<T> {
    pub fn patients(&self) -> usize {
        self.patient_ids.len()
    }
}

/// Exact two-modality Shapley values. Per patient:
/// `φ_A = ½[v(A) − v(∅)] + ½[v(AB) − v(B)]`, `φ_B` symmetric and
/// `φ_int = ½[v(AB) − v(A) − v(B) + v(∅)]`.
pub fn shapley_two_modality<T: Scalar>(table: &CoalitionTable<T>) -> Result<ShapleyDecomposition<T>> {
    if table.modality_count() != 2 {
        return Err(Error::invalid(format!(
            "two-modality decomposition needs M = 2, table has {}",
            table.modality_count()
        )));
    }
    let half = T::lit(0.5);
    let n = table.patients();
    let mut mains = Vec::with_capacity(n);
    let mut interactions = Vec::with_capacity(n);
    let mut totals = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for p in 0..n {
        let v = table.patient(p);
        let (e, a, b, ab) = (v[0], v[1], v[2], v[3]);
        let phi_a = half * (a - e) + half * (ab - b);
        let phi_b = half * (b - e) + half * (ab - a);
        let phi_int = half * (ab - a - b + e);
        let total = ab - e;
        mains.push(vec![phi_a, phi_b]);
        interactions.push(vec![phi_int]);
        residuals.push(total - (phi_a + phi_b));
        totals.push(total);
    }
    let subsets = vec![table.full()];
    Ok(ShapleyDecomposition {
        convention: Convention::PaperEqs,
        modality_names: table.modality_names().to_vec(),
        patient_ids: table.patient_ids().to_vec(),
        interaction_labels: subsets.iter().map(|&s| table.subset_label(s)).collect(),
        interaction_subsets: subsets,
        mains,
        interactions,
        totals,
        residuals,
    })
}

/// In-place Möbius transform over subset masks:
/// `m(S) = Σ_{T ⊆ S} (−1)^{|S|−|T|} v(T)`.
pub fn moebius_transform<T: Scalar>(values: &mut [T]) {
    let width = values.len();
    debug_assert!(width.is_power_of_two());
    let mut bit = 1;
    while bit < width {
        for s in 0..width {
            if s & bit != 0 {
                values[s] = values[s] - values[s ^ bit];
            }
        }
        bit <<= 1;
    }
}

pub fn moebius_decomposition<T: Scalar>(table: &CoalitionTable<T>) -> Result<ShapleyDecomposition<T>> {
    let m = table.modality_count();
    check_modality_count(m)?;
    let full = table.full();
    let subsets: Vec<usize> = (1..=full).filter(|s: &usize| s.count_ones() >= 2).collect();
    let n = table.patients();
    let mut mains = Vec::with_capacity(n);
    let mut interactions = Vec::with_capacity(n);
    let mut totals = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut buf = vec![T::zero(); table.subsets()];
    for p in 0..n {
        buf.copy_from_slice(table.patient(p));
        moebius_transform(&mut buf);
        let main: Vec<T> = (0..m).map(|i| buf[1 << i]).collect();
        let inter: Vec<T> = subsets.iter().map(|&s| buf[s]).collect();
        let total = table.value(p, full) - table.value(p, 0);
        let explained = main.iter().copied().sum::<T>() + inter.iter().copied().sum::<T>();
        residuals.push(total - explained);
        totals.push(total);
        mains.push(main);
        interactions.push(inter);
    }
    Ok(ShapleyDecomposition {
        convention: Convention::Moebius,
        modality_names: table.modality_names().to_vec(),
        patient_ids: table.patient_ids().to_vec(),
        interaction_labels: subsets.iter().map(|&s| subset_label(table.modality_names(), s)).collect(),
        interaction_subsets: subsets,
        mains,
        interactions,
        totals,
        residuals,
    })
}

pub fn decompose<T: Scalar>(table: &CoalitionTable<T>, convention: Convention) -> Result<ShapleyDecomposition<T>> {
    match convention {
        Convention::PaperEqs => shapley_two_modality(table),
        Convention::Moebius => moebius_decomposition(table),
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley interaction index of modalities `i` and `j` per patient:
/// `ψ_ij = Σ_{S ⊆ N∖{i,j}} |S|!(M−|S|−2)!/(M−1)! · Δ_ij(S)` with
/// `Δ_ij(S) = v(S∪{i,j}) − v(S∪{i}) − v(S∪{j}) + v(S)`.
pub fn shapley_interaction_index<T: Scalar>(table: &CoalitionTable<T>, i: usize, j: usize) -> Result<Vec<T>> {
    let m = table.modality_count();
    if i == j {
        return Err(Error::invalid(format!("interaction index needs two distinct modalities, got {i} twice")));
    }
    if i >= m || j >= m {
        return Err(Error::invalid(format!("modality index out of range for M = {m}")));
    }
    let (bi, bj) = (1usize << i, 1usize << j);
    let rest: Vec<usize> = (0..table.subsets()).filter(|s| s & (bi | bj) == 0).collect();
    let weights: Vec<T> = rest
        .iter()
        .map(|s| {
            let k = s.count_ones() as usize;
            T::lit(factorial(k) * factorial(m - k - 2) / factorial(m - 1))
        })
        .collect();
    Ok((0..table.patients())
        .map(|p| {
            let v = table.patient(p);
            rest.iter()
                .zip(&weights)
                .map(|(&s, &w)| w * (v[s | bi | bj] - v[s | bi] - v[s | bj] + v[s]))
                .sum()
        })
        .collect())
}
