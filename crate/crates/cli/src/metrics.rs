use serde::{Deserialize, Serialize};

use coxplain::dataio::{json, MultimodalDataset};
use coxplain::models::TrainedModel;
use coxplain::stats::percentile;
use coxplain::survival::{breslow_baseline, brier_score, concordance_index, integrated_brier};
use coxplain::synthbench::ThreeWaySplit;
use coxplain::Result;

pub const METRICS_FILE: &str = "metrics.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub model: String,
    pub parameter_count: usize,
    pub epochs_run: usize,
    #[serde(serialize_with = "json::opt::serialize")]
    pub best_val_cindex: Option<f64>,
    #[serde(serialize_with = "json::serialize")]
    pub train_cindex: f64,
    #[serde(serialize_with = "json::serialize")]
    pub val_cindex: f64,
    #[serde(serialize_with = "json::serialize")]
    pub test_cindex: f64,
    #[serde(serialize_with = "json::serialize")]
    pub brier_months: f64,
    /// Test-split IPCW Brier at `brier_months`; null when the horizon is
    /// beyond follow-up.
    #[serde(serialize_with = "json::opt::serialize")]
    pub brier: Option<f64>,
    /// Upper end of the integrated Brier window: the 90th percentile of
    /// test follow-up.
    #[serde(serialize_with = "json::serialize")]
    pub ibs_months: f64,
    #[serde(serialize_with = "json::opt::serialize")]
    pub ibs: Option<f64>,
}

fn scores(model: &TrainedModel, dataset: &MultimodalDataset) -> Result<Vec<f64>> {
    let emb = dataset.embeddings();
    model.predict(emb[0], emb[1])
}

/// Discrimination on all three splits and calibration on the test split,
/// with the baseline hazard fitted on the training split.
pub fn evaluate(model: &TrainedModel, dataset: &MultimodalDataset, split: &ThreeWaySplit, brier_months: f64) -> Result<Metrics> {
    let part = |idx: &[usize]| -> Result<(Vec<f64>, MultimodalDataset)> {
        let d = dataset.subset(idx);
        Ok((scores(model, &d)?, d))
    };
    let (train_scores, train) = part(&split.train)?;
    let (val_scores, val) = part(&split.val)?;
    let (test_scores, test) = part(&split.test)?;
    let baseline = breslow_baseline(&train_scores, train.records())?;

    let mut times: Vec<f64> = test.records().iter().map(|r| r.time).collect();
    times.sort_by(f64::total_cmp);
    let ibs_months = percentile(&times, 0.9);
    let soft = |what: &str, r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("{what} not reported: {e}");
            None
        }
    };
    Ok(Metrics {
        model: model.spec.kind.to_string(),
        parameter_count: model.parameter_count(),
        epochs_run: model.epochs_run,
        best_val_cindex: model.best_val_cindex,
        train_cindex: concordance_index(&train_scores, train.records())?,
        val_cindex: concordance_index(&val_scores, val.records())?,
        test_cindex: concordance_index(&test_scores, test.records())?,
        brier_months,
        brier: soft("brier", brier_score(&test_scores, test.records(), &baseline, brier_months).map(|b| b.value)),
        ibs_months,
        ibs: soft("integrated brier", integrated_brier(&test_scores, test.records(), &baseline, ibs_months)),
    })
}
