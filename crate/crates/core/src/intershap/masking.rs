use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::{check_modality_count, CoalitionTable};
use crate::dataio::MultimodalDataset;
use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::numcore::rng;
use crate::Matrix;

/// Anything that maps per-modality embeddings to one log-risk per row.
pub trait RiskModel: Sync {
    fn modality_dims(&self) -> Vec<usize>;

    /// `inputs[m]` is the `n × d_m` matrix of modality `m`.
    fn predict_modalities(&self, inputs: &[&Matrix]) -> Result<Vec<f64>>;
}

impl RiskModel for TrainedModel {
    fn modality_dims(&self) -> Vec<usize> {
        self.spec.dims.to_vec()
    }

    fn predict_modalities(&self, inputs: &[&Matrix]) -> Result<Vec<f64>> {
        match inputs {
            [a, b] => self.predict(a, b),
            _ => Err(Error::LengthMismatch(format!(
                "{} takes two modalities, got {}",
                self.spec.kind,
                inputs.len()
            ))),
        }
    }
}

/// A risk model given as a per-row function of the modality rows.
pub struct RowFnModel<F> {
    dims: Vec<usize>,
    f: F,
}

impl<F: Fn(&[&[f64]]) -> f64 + Sync> RowFnModel<F> {
    pub fn new(dims: Vec<usize>, f: F) -> Self {
        RowFnModel { dims, f }
    }
}

impl<F: Fn(&[&[f64]]) -> f64 + Sync> RiskModel for RowFnModel<F> {
    fn modality_dims(&self) -> Vec<usize> {
        self.dims.clone()
    }

    fn predict_modalities(&self, inputs: &[&Matrix]) -> Result<Vec<f64>> {
        let n = inputs.first().map_or(0, |m| m.rows());
        Ok((0..n)
            .map(|i| {
                let rows: Vec<&[f64]> = inputs.iter().map(|m| m.row(i)).collect();
                (self.f)(&rows)
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskingKind {
    /// Training-split column means.
    Mean,
    /// Rows of randomly drawn training patients, averaged over replicates.
    Shuffle,
    Zero,
}

impl MaskingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskingKind::Mean => "mean",
            MaskingKind::Shuffle => "shuffle",
            MaskingKind::Zero => "zero",
        }
    }
}

impl fmt::Display for MaskingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "mean-impute" => Ok(MaskingKind::Mean),
            "shuffle" => Ok(MaskingKind::Shuffle),
            "zero" => Ok(MaskingKind::Zero),
            _ => Err(Error::invalid(format!("unknown masking `{s}` (mean | shuffle | zero)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskingStrategy {
    pub kind: MaskingKind,
    /// Replicates averaged under shuffle masking; ignored otherwise.
    pub replicates: usize,
    pub seed: u64,
}

impl MaskingStrategy {
    pub const DEFAULT_REPLICATES: usize = 8;

    pub fn mean() -> Self {
        MaskingStrategy {
            kind: MaskingKind::Mean,
            replicates: 1,
            seed: 0,
        }
    }

    pub fn zero() -> Self {
        MaskingStrategy {
            kind: MaskingKind::Zero,
            replicates: 1,
            seed: 0,
        }
    }

    pub fn shuffle(seed: u64) -> Self {
        MaskingStrategy {
            kind: MaskingKind::Shuffle,
            replicates: Self::DEFAULT_REPLICATES,
            seed,
        }
    }

    fn passes(&self) -> usize {
        match self.kind {
            MaskingKind::Shuffle => self.replicates,
            _ => 1,
        }
    }
}

/// A masking strategy bound to its reference (training) data.
#[derive(Clone, Debug)]
pub struct Masker {
    pub strategy: MaskingStrategy,
    means: Vec<Vec<f64>>,
    donors: Vec<Matrix>,
}

impl Masker {
    /// Computes column means (mean) or keeps the donor pool (shuffle) from
    /// `reference`, which should be the training split.
    pub fn fit(strategy: MaskingStrategy, reference: &MultimodalDataset) -> Result<Self> {
        if strategy.kind == MaskingKind::Shuffle && strategy.replicates == 0 {
            return Err(Error::invalid("shuffle masking needs at least one replicate"));
        }
        if reference.is_empty() && strategy.kind != MaskingKind::Zero {
            return Err(Error::invalid("masking reference set is empty"));
        }
        let emb = reference.embeddings();
        let (means, donors) = match strategy.kind {
            MaskingKind::Mean => (emb.iter().map(|m| m.column_means().into_vec()).collect(), Vec::new()),
            MaskingKind::Shuffle => (Vec::new(), emb.into_iter().cloned().collect()),
            MaskingKind::Zero => (reference.dims().into_iter().map(|d| vec![0.0; d]).collect(), Vec::new()),
        };
        Ok(Masker {
            strategy,
            means,
            donors,
        })
    }

    fn dims(&self) -> Vec<usize> {
        match self.strategy.kind {
            MaskingKind::Shuffle => self.donors.iter().map(|m| m.cols()).collect(),
            _ => self.means.iter().map(|m| m.len()).collect(),
        }
    }

    fn donor_rows(&self, patients: std::ops::Range<usize>, replicate: usize) -> Vec<usize> {
        let pool = self.donors[0].rows();
        patients
            .map(|p| {
                let mut r = rng::stream(self.strategy.seed, &[rng::domain::MASKING, p as u64, replicate as u64]);
                r.random_range(0..pool)
            })
            .collect()
    }

    /// Inputs for patients `rows` with modalities outside `subset` replaced.
    fn masked(&self, inputs: &[&Matrix], rows: std::ops::Range<usize>, subset: usize, replicate: usize) -> Vec<Matrix> {
        let idx: Vec<usize> = rows.clone().collect();
        let donors = (self.strategy.kind == MaskingKind::Shuffle && subset != (1 << inputs.len()) - 1)
            .then(|| self.donor_rows(rows.clone(), replicate));
        inputs
            .iter()
            .enumerate()
            .map(|(m, x)| {
                if subset >> m & 1 == 1 {
                    return x.select_rows(&idx);
                }
                match &donors {
                    Some(d) => self.donors[m].select_rows(d),
                    None => {
                        let mean = &self.means[m];
                        let mut out = Matrix::zeros(idx.len(), mean.len());
                        for i in 0..idx.len() {
                            out.row_mut(i).copy_from_slice(mean);
                        }
                        out
                    }
                }
            })
            .collect()
    }
}

const CHUNK: usize = 256;

/// Model output for every patient under every modality subset.
///
/// Work is split into (subset, patient chunk) jobs and run on the current
/// rayon pool; every job's randomness is keyed by (seed, patient, replicate),
/// so the table does not depend on the schedule.
pub fn evaluate_coalitions<R: RiskModel + ?Sized>(
    model: &R,
    dataset: &MultimodalDataset,
    masker: &Masker,
) -> Result<CoalitionTable> {
    let m = dataset.modalities().len();
    check_modality_count(m)?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot audit an empty dataset"));
    }
    let dims = dataset.dims();
    if model.modality_dims() != dims {
        return Err(Error::LengthMismatch(format!(
            "model expects modality dims {:?}, dataset has {:?}",
            model.modality_dims(),
            dims
        )));
    }
    if masker.dims() != dims {
        return Err(Error::LengthMismatch(format!(
            "masking reference has dims {:?}, dataset has {:?}",
            masker.dims(),
            dims
        )));
    }
    let n = dataset.len();
    let width = 1usize << m;
    let full = width - 1;
    let inputs = dataset.embeddings();
    let passes = masker.strategy.passes();

    let jobs: Vec<(usize, usize)> = (0..width)
        .flat_map(|s| (0..n).step_by(CHUNK).map(move |start| (s, start)))
        .collect();
    let results: Vec<Result<(usize, usize, Vec<f64>)>> = jobs
        .par_iter()
        .map(|&(subset, start)| {
            let rows = start..(start + CHUNK).min(n);
            let reps = if subset == full { 1 } else { passes };
            let mut acc = vec![0.0; rows.len()];
            for r in 0..reps {
                let masked = masker.masked(&inputs, rows.clone(), subset, r);
                let refs: Vec<&Matrix> = masked.iter().collect();
                let out = model.predict_modalities(&refs)?;
                for (a, o) in acc.iter_mut().zip(out) {
                    *a += o;
                }
            }
            if reps > 1 {
                for a in acc.iter_mut() {
                    *a /= reps as f64;
                }
            }
            Ok((subset, start, acc))
        })
        .collect();

    let mut values = vec![0.0; n * width];
    for r in results {
        let (subset, start, acc) = r?;
        for (k, v) in acc.into_iter().enumerate() {
            values[(start + k) * width + subset] = v;
        }
    }
    let evaluations = n * (1 + (width - 1) * passes);
    let ids = dataset.records().iter().map(|r| r.patient_id.clone()).collect();
    Ok(CoalitionTable::from_values(dataset.modality_names(), ids, values)?.with_evaluations(evaluations))
}
