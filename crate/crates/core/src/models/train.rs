use rand::seq::SliceRandom;

use super::arch::{INPUT_A, INPUT_B};
use super::model::{Hyperparams, TrainedModel};
use super::spec::ArchitectureSpec;
use crate::dataio::MultimodalDataset;
use crate::error::{Error, Result};
use crate::numcore::{rng, Mode};
use crate::survival::{concordance_index, cox_nll_with_grad, SurvivalRecord};
use crate::{AdamState, Matrix};

const MAX_PARTITION_ATTEMPTS: u64 = 100;

struct Part {
    a: Matrix,
    b: Matrix,
    records: Vec<SurvivalRecord>,
}

impl Part {
    fn take(dataset: &MultimodalDataset, idx: &[usize]) -> Self {
        let emb = dataset.embeddings();
        Part {
            a: emb[0].select_rows(idx),
            b: emb[1].select_rows(idx),
            records: idx.iter().map(|&i| dataset.records()[i].clone()).collect(),
        }
    }
}

fn partition(part: &Part, batch: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    let n = part.records.len();
    for attempt in 0..MAX_PARTITION_ATTEMPTS {
        let mut order: Vec<usize> = (0..n).collect();
        if batch < n {
            let mut r = rng::stream(seed, &[rng::domain::SHUFFLE, epoch as u64, attempt]);
            order.shuffle(&mut r);
        }
        let batches: Vec<Vec<usize>> = order.chunks(batch).map(|c| c.to_vec()).collect();
        let empty = batches
            .iter()
            .position(|b| !b.iter().any(|&i| part.records[i].event));
        match empty {
            None => return Ok(batches),
            Some(k) => log::warn!("epoch {epoch}: batch {k} has no events, resampling partition (attempt {attempt})"),
        }
        if batch >= n {
            break;
        }
    }
    Err(Error::Degenerate(format!(
        "no partition of {n} training patients into batches of {batch} gives every batch an event"
    )))
}

fn val_cindex(model: &TrainedModel, val: &Part) -> Result<f64> {
    let scores = model.predict(&val.a, &val.b)?;
    concordance_index(&scores, &val.records)
}

/// Trains with Adam on the Cox partial likelihood (averaged over events per
/// batch), keeping the parameters of the epoch with the best validation
/// C-index. Deterministic given `seed`.
pub fn train(
    spec: &ArchitectureSpec,
    dataset: &MultimodalDataset,
    train_idx: &[usize],
    val_idx: &[usize],
    hyper: &Hyperparams,
    seed: u64,
) -> Result<TrainedModel> {
    if dataset.modalities().len() != 2 {
        return Err(Error::invalid(format!(
            "fusion models take two modalities, dataset has {}",
            dataset.modalities().len()
        )));
    }
    if dataset.dims() != spec.dims {
        return Err(Error::LengthMismatch(format!(
            "dataset dims {:?} do not match architecture dims {:?}",
            dataset.dims(),
            spec.dims
        )));
    }
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if !(hyper.lr >= 0.0 && hyper.weight_decay >= 0.0) {
        return Err(Error::invalid("learning rate and weight decay must be non-negative"));
    }

    let mut model = TrainedModel::build(spec, seed)?;
    model.hyperparams = *hyper;
    let tr = Part::take(dataset, train_idx);
    let val = Part::take(dataset, val_idx);
    if !tr.records.iter().any(|r| r.event) {
        return Err(Error::NoEvents("training set"));
    }
    let batch = hyper.effective_batch_size(tr.records.len());
    let names: Vec<String> = model.param_decls().iter().map(|d| d.name.clone()).collect();

    let mut best = val_cindex(&model, &val)?;
    let mut best_params = model.params().to_vec();
    let mut adam = AdamState::new(model.params(), hyper.lr, hyper.weight_decay);
    let mut graph = model.graph().fresh();
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 0..hyper.max_epochs {
        let batches = partition(&tr, batch, seed, epoch)?;
        let mut dropout_rng = rng::stream(seed, &[rng::domain::DROPOUT, epoch as u64]);
        let mut epoch_loss = 0.0;
        for rows in &batches {
            let (a, b, recs);
            let (a_ref, b_ref, recs_ref) = if rows.len() == tr.records.len() && batch >= tr.records.len() {
                (&tr.a, &tr.b, &tr.records[..])
            } else {
                a = tr.a.select_rows(rows);
                b = tr.b.select_rows(rows);
                recs = rows.iter().map(|&i| tr.records[i].clone()).collect::<Vec<_>>();
                (&a, &b, &recs[..])
            };
            let diverged = |detail: String| Error::Divergence { epoch, detail };
            let out = graph
                .forward(
                    &[(INPUT_A, a_ref), (INPUT_B, b_ref)],
                    model.params(),
                    Mode::Train(&mut dropout_rng),
                )
                .map_err(|e| diverged(e.to_string()))?;
            let scores = out.as_slice().to_vec();
            let (loss, grad) = cox_nll_with_grad(&scores, recs_ref).map_err(|e| diverged(e.to_string()))?;
            let events = recs_ref.iter().filter(|r| r.event).count() as f64;
            let loss = loss / events;
            if !loss.is_finite() {
                return Err(diverged(format!("loss {loss}")));
            }
            epoch_loss += loss;
            let grad: Vec<f64> = grad.into_iter().map(|g| g / events).collect();
            let adj = Matrix::column_vector(grad);
            let grads = graph.backward(&adj).map_err(|e| diverged(e.to_string()))?;
            adam.step(model.params_mut(), &grads, &names)
                .map_err(|e| diverged(e.to_string()))?;
        }
        epochs_run = epoch + 1;
        let c = val_cindex(&model, &val).map_err(|e| Error::Divergence {
            epoch,
            detail: e.to_string(),
        })?;
        log::debug!(
            "{} epoch {epoch}: loss {:.5} val C {c:.4}",
            spec.kind,
            epoch_loss / batches.len() as f64
        );
        if c > best {
            best = c;
            best_params.clone_from_slice(model.params());
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }

    *model.params_mut() = best_params;
    model.epochs_run = epochs_run;
    model.best_val_cindex = Some(best);
    Ok(model)
}
