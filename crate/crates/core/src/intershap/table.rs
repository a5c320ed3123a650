use crate::error::{Error, Result};
use crate::numcore::Scalar;

/// Largest number of modalities for exact coalition enumeration.
pub const MAX_MODALITIES: usize = 10;

/// Coalition values `v(S)` for every patient and every subset `S` of the
/// modalities. Subsets are bitmasks: bit `i` set means modality `i` is
/// present (unmasked).
#[derive(Clone, Debug, PartialEq)]
pub struct CoalitionTable<T = f64> {
    modality_names: Vec<String>,
    patient_ids: Vec<String>,
    values: Vec<T>,
    evaluations: usize,
}

pub(crate) fn check_modality_count(m: usize) -> Result<()> {
    if !(2..=MAX_MODALITIES).contains(&m) {
        return Err(Error::invalid(format!(
            "exact coalition enumeration needs 2 to {MAX_MODALITIES} modalities, got {m}"
        )));
    }
    Ok(())
}

impl<T: Scalar> CoalitionTable<T> {
    /// `values` is patient-major: patient `p`'s `2^M` entries are
    /// `values[p * 2^M .. (p + 1) * 2^M]`, indexed by subset mask.
    pub fn from_values(modality_names: Vec<String>, patient_ids: Vec<String>, values: Vec<T>) -> Result<Self> {
        check_modality_count(modality_names.len())?;
        let width = 1usize << modality_names.len();
        if values.len() != patient_ids.len() * width {
            return Err(Error::LengthMismatch(format!(
                "{} values for {} patients x {width} coalitions",
                values.len(),
                patient_ids.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "coalition value for patient {} subset {:#b}",
                k / width,
                k % width
            )));
        }
        let evaluations = values.len();
        Ok(CoalitionTable {
            modality_names,
            patient_ids,
            values,
            evaluations,
        })
    }

    /// Single-patient table, handy for hand examples.
    pub fn single(modality_names: &[&str], values: &[T]) -> Result<Self> {
        Self::from_values(
            modality_names.iter().map(|s| s.to_string()).collect(),
            vec!["p0".into()],
            values.to_vec(),
        )
    }

    pub(crate) fn with_evaluations(mut self, evaluations: usize) -> Self {
        self.evaluations = evaluations;
        self
    }

    pub fn modality_count(&self) -> usize {
        self.modality_names.len()
    }

    pub fn modality_names(&self) -> &[String] {
        &self.modality_names
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn subsets(&self) -> usize {
        1 << self.modality_names.len()
    }

    pub fn full(&self) -> usize {
        self.subsets() - 1
    }

    /// Patient-level model evaluations that produced this table.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn value(&self, patient: usize, subset: usize) -> T {
        self.values[patient * self.subsets() + subset]
    }

    pub fn patient(&self, patient: usize) -> &[T] {
        let w = self.subsets();
        &self.values[patient * w..(patient + 1) * w]
    }

    /// Human-readable subset label, e.g. `rna:wsi`.
    pub fn subset_label(&self, subset: usize) -> String {
        subset_label(&self.modality_names, subset)
    }
}

pub(crate) fn subset_label(names: &[String], subset: usize) -> String {
    if subset == 0 {
        return "{}".into();
    }
    names
        .iter()
        .enumerate()
        .filter(|(i, _)| subset >> i & 1 == 1)
        .map(|(_, n)| n.as_str())
        .collect::<Vec<_>>()
        .join(":")
}
