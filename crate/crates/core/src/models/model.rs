use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::arch::{build_graph, INPUT_A, INPUT_B};
use super::spec::ArchitectureSpec;
use crate::error::{Error, Result};
use crate::numcore::{rng, Mode, NodeId, ParamDecl};
use crate::survival::{cox_nll_with_grad, SurvivalRecord};
use crate::{Graph, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lr: f64,
    pub weight_decay: f64,
    /// `None` picks `min(128, n_train)`, or the full set when `n_train ≤ 256`.
    pub batch_size: Option<usize>,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 1e-4,
            weight_decay: 1e-5,
            batch_size: None,
            max_epochs: 500,
            patience: 20,
        }
    }
}

impl Hyperparams {
    pub fn effective_batch_size(&self, n_train: usize) -> usize {
        match self.batch_size {
            Some(b) => b.clamp(1, n_train.max(1)),
            None if n_train <= 256 => n_train,
            None => n_train.min(128),
        }
    }
}

/// Architecture, parameters and training provenance. Immutable once built;
/// [`TrainedModel::predict`] takes `&self` and is safe to call concurrently.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub spec: ArchitectureSpec,
    pub seed: u64,
    pub hyperparams: Hyperparams,
    pub epochs_run: usize,
    pub best_val_cindex: Option<f64>,
    params: Vec<Matrix>,
    graph: Graph,
    probes: BTreeMap<String, NodeId>,
}

impl TrainedModel {
    /// Freshly initialised, untrained model.
    pub fn build(spec: &ArchitectureSpec, seed: u64) -> Result<Self> {
        let arch = build_graph(spec)?;
        let mut r = rng::stream(seed, &[rng::domain::INIT]);
        let params = arch.graph.init_params(&mut r);
        Ok(TrainedModel {
            spec: spec.clone(),
            seed,
            hyperparams: Hyperparams::default(),
            epochs_run: 0,
            best_val_cindex: None,
            params,
            graph: arch.graph,
            probes: arch.probes,
        })
    }

    /// Rebuilds a model from a canonical-order parameter vector.
    pub fn from_flat(spec: &ArchitectureSpec, seed: u64, flat: &[f64]) -> Result<Self> {
        let mut model = Self::build(spec, seed)?;
        model.set_flat(flat)?;
        Ok(model)
    }

    pub fn parameter_count(&self) -> usize {
        self.graph.parameter_count()
    }

    pub fn param_decls(&self) -> &[ParamDecl] {
        self.graph.params()
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Vec<Matrix> {
        &mut self.params
    }

    pub(crate) fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Parameters in canonical order: layers in forward order, each weight
    /// row-major followed by its bias.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.as_slice().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::LengthMismatch(format!(
                "{} parameters supplied, {} expects {}",
                flat.len(),
                self.spec.kind,
                self.parameter_count()
            )));
        }
        let mut offset = 0;
        for p in self.params.iter_mut() {
            let len = p.len();
            p.as_mut_slice().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Overwrites one named parameter.
    pub fn set_param(&mut self, name: &str, value: Matrix) -> Result<()> {
        let idx = self
            .graph
            .params()
            .iter()
            .position(|d| d.name == name)
            .ok_or_else(|| Error::invalid(format!("no parameter `{name}`")))?;
        if self.params[idx].shape() != value.shape() {
            return Err(Error::Matrix(format!("parameter `{name}` shape mismatch")));
        }
        self.params[idx] = value;
        Ok(())
    }

    fn check_inputs(&self, a: &Matrix, b: &Matrix) -> Result<()> {
        let [da, db] = self.spec.dims;
        if a.cols() != da || b.cols() != db || a.rows() != b.rows() {
            return Err(Error::LengthMismatch(format!(
                "{} expects n x {da} and n x {db} inputs, got {}x{} and {}x{}",
                self.spec.kind,
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        Ok(())
    }

    /// Log-risk per row, evaluation mode.
    pub fn predict(&self, a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
        self.check_inputs(a, b)?;
        if a.rows() == 0 {
            return Ok(Vec::new());
        }
        let mut g = self.graph.fresh();
        let out = g.forward(&[(INPUT_A, a), (INPUT_B, b)], &self.params, Mode::Eval)?;
        Ok(out.as_slice().to_vec())
    }

    /// Cox loss averaged over events, as minimised in training, and its
    /// gradient with respect to the flattened parameters. Evaluation mode.
    pub fn cox_loss_gradient(&self, a: &Matrix, b: &Matrix, outcomes: &[SurvivalRecord]) -> Result<(f64, Vec<f64>)> {
        self.check_inputs(a, b)?;
        let mut g = self.graph.fresh();
        let out = g.forward(&[(INPUT_A, a), (INPUT_B, b)], &self.params, Mode::Eval)?;
        let (loss, grad) = cox_nll_with_grad(out.as_slice(), outcomes)?;
        let events = outcomes.iter().filter(|r| r.event).count() as f64;
        let adj = Matrix::column_vector(grad.into_iter().map(|x| x / events).collect());
        let grads = g.backward(&adj)?;
        Ok((loss / events, grads.iter().flat_map(|m| m.as_slice().iter().copied()).collect()))
    }

    /// Named intermediate values (gate, branches, attention, output) for the
    /// given inputs, evaluation mode.
    pub fn inspect(&self, a: &Matrix, b: &Matrix) -> Result<BTreeMap<String, Matrix>> {
        self.check_inputs(a, b)?;
        let mut g = self.graph.fresh();
        g.forward(&[(INPUT_A, a), (INPUT_B, b)], &self.params, Mode::Eval)?;
        Ok(self
            .probes
            .iter()
            .filter_map(|(name, &id)| g.value(id).map(|v| (name.clone(), v.clone())))
            .collect())
    }
}
