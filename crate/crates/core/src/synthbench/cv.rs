use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{json, make_split, split_indices, Fold, MultimodalDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::intershap::{audit, Convention, Masker, MaskingStrategy, RiskModel};
use crate::models::{train, ArchitectureSpec, Hyperparams, TrainedModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvStability {
    #[serde(serialize_with = "json::vec::serialize")]
    pub fold_percents: Vec<f64>,
    #[serde(serialize_with = "json::serialize")]
    pub mean: f64,
    /// Sample standard deviation across folds.
    #[serde(serialize_with = "json::serialize")]
    pub sd: f64,
    /// `sd / mean`; infinite when the mean is zero and the sd is not.
    #[serde(serialize_with = "json::serialize")]
    pub coefficient_of_variation: f64,
}

impl CvStability {
    fn from_folds(fold_percents: Vec<f64>) -> Self {
        let k = fold_percents.len() as f64;
        let mean = fold_percents.iter().sum::<f64>() / k;
        let sd = (fold_percents.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        let coefficient_of_variation = if sd == 0.0 { 0.0 } else { sd / mean.abs() };
        CvStability {
            fold_percents,
            mean,
            sd,
            coefficient_of_variation,
        }
    }
}

/// Global InterSHAP across stratified folds with a caller-supplied trainer.
///
/// `fit(fold, train_indices)` returns the model for that fold; it is audited
/// on the held-out fold with references from its training folds, moebius
/// convention.
pub fn cv_stability_with<R, F>(dataset: &MultimodalDataset, k: usize, seed: u64, masking: MaskingStrategy, fit: F) -> Result<CvStability>
where
    R: RiskModel + Send,
    F: Fn(usize, &[usize]) -> Result<R> + Sync,
{
    if k < 2 {
        return Err(Error::invalid(format!("cross-validation needs k ≥ 2, got {k}")));
    }
    if dataset.len() < 10 * k {
        return Err(Error::invalid(format!(
            "{k}-fold stability needs at least {} patients, got {}",
            10 * k,
            dataset.len()
        )));
    }
    let folds = make_split(dataset, &SplitSpec::kfold(k, seed))?;
    let has_events = |idx: &[usize]| idx.iter().any(|&i| dataset.records()[i].event);
    if let Some(f) = folds.iter().position(|f| !has_events(&f.train) || !has_events(&f.test)) {
        return Err(Error::NoEvents(if has_events(&folds[f].train) { "held-out fold" } else { "training folds" }));
    }
    let percents: Vec<f64> = folds
        .par_iter()
        .enumerate()
        .map(|(i, Fold { train, test })| {
            let model = fit(i, train)?;
            let masker = Masker::fit(masking, &dataset.subset(train))?;
            let report = audit(&model, &dataset.subset(test), &masker, Convention::Moebius, "fold")?;
            Ok(report.global.interaction_percent)
        })
        .collect::<Result<_>>()?;
    Ok(CvStability::from_folds(percents))
}

/// Trains `spec` on each set of training folds (holding out a fifth of them
/// for early stopping) and audits with mean masking.
pub fn cv_stability(
    dataset: &MultimodalDataset,
    spec: &ArchitectureSpec,
    k: usize,
    hyper: &Hyperparams,
    seed: u64,
) -> Result<CvStability> {
    cv_stability_with(dataset, k, seed, MaskingStrategy::mean(), |fold, idx| -> Result<TrainedModel> {
        let events: Vec<bool> = idx.iter().map(|&i| dataset.records()[i].event).collect();
        let inner = split_indices(&events, &SplitSpec::holdout(0.2, seed.wrapping_add(fold as u64 + 1)))?.remove(0);
        let tr: Vec<usize> = inner.train.iter().map(|&j| idx[j]).collect();
        let val: Vec<usize> = inner.test.iter().map(|&j| idx[j]).collect();
        train(spec, dataset, &tr, &val, hyper, seed)
    })
}
